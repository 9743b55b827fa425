"""Dynamic triggers: a hash code embedded by the steganographic codec"""
import logging
from typing import Dict, Optional

import numpy as np

from common.seeding import derive_seed
from reidlab.core.idhash import HashNetParams, hash_identity
from reidlab.core.stegocodec import ICodec
from reidlab.core.triggers.base_trigger import ITrigger
from reidlab.core.types import HashCode, PersonImage, PoisonedImage, TriggerKind

logger = logging.getLogger(__name__)


class DynamicTrigger(ITrigger):
    """Payload = identity hash of a reference image of the target"""
    kind = TriggerKind.DYNAMIC
    needs_reference = True

    def __init__(self, hashnet: HashNetParams, codec: ICodec):
        if hashnet.code_length != codec.code_length:
            raise ValueError(
                f"hash code length {hashnet.code_length} differs from codec code_length {codec.code_length}"
            )
        self.hashnet = hashnet
        self.codec = codec
        self._codes: Dict[str, HashCode] = {}

    def payload(self, reference: PersonImage) -> HashCode:
        if reference.key not in self._codes:
            self._codes[reference.key] = hash_identity(reference, self.hashnet)
        return self._codes[reference.key]

    def poison(self, image: PersonImage, target_id: int, reference: Optional[PersonImage] = None) -> PoisonedImage:
        """Raises EmbeddingError when the codec cannot embed within its quality gate"""
        if reference is None:
            raise ValueError("dynamic trigger needs a reference image of the target")
        if reference.gt_id != target_id:
            raise ValueError(f"reference {reference.key} shows id {reference.gt_id}, not target {target_id}")
        return self.codec.embed_image(image, self.payload(reference), target_id, self.kind)


class RandomCodeTrigger(ITrigger):
    """Ablation: a seeded random code per target replaces the identity hash; references are ignored"""
    kind = TriggerKind.RANDOM_CODE

    def __init__(self, codec: ICodec, seed: int):
        self.codec = codec
        self.seed = seed

    def payload(self, target_id: int) -> HashCode:
        rng = np.random.default_rng(derive_seed(self.seed, f"random_code:{target_id}"))
        return HashCode(rng.integers(0, 2, size=self.codec.code_length))

    def poison(self, image: PersonImage, target_id: int, reference: Optional[PersonImage] = None) -> PoisonedImage:
        return self.codec.embed_image(image, self.payload(target_id), target_id, self.kind)
