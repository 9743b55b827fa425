"""Build the trigger named by a poison config"""
from typing import Optional

from configs.types import PoisonConfig
from reidlab.core.idhash import HashNetParams
from reidlab.core.stegocodec import ICodec
from reidlab.core.triggers.base_trigger import ITrigger
from reidlab.core.triggers.baselines import BadNetsTrigger, BlendedTrigger, SigTrigger
from reidlab.core.triggers.dynamic import DynamicTrigger, RandomCodeTrigger
from reidlab.core.types import TriggerKind


def build_trigger(config: PoisonConfig, codec: ICodec, hashnet: Optional[HashNetParams] = None,
                  seed: int = 0) -> ITrigger:
    kind = TriggerKind(config.trigger)
    if kind == TriggerKind.DYNAMIC:
        if hashnet is None:
            raise ValueError("dynamic trigger needs trained hashnet params")
        return DynamicTrigger(hashnet, codec)
    if kind == TriggerKind.RANDOM_CODE:
        return RandomCodeTrigger(codec, seed)
    if kind == TriggerKind.BADNETS:
        return BadNetsTrigger(config.baseline)
    if kind == TriggerKind.BLENDED:
        return BlendedTrigger(config.baseline)
    return SigTrigger(config.baseline)
