"""Trigger interface"""
from abc import ABC, abstractmethod
from typing import Optional

from reidlab.core.types import PersonImage, PoisonedImage, TriggerKind


class ITrigger(ABC):
    """Trigger interface - implementations turn a benign image into a poisoned copy"""
    kind: TriggerKind
    needs_reference: bool = False

    @abstractmethod
    def poison(self, image: PersonImage, target_id: int, reference: Optional[PersonImage] = None) -> PoisonedImage:
        """Apply the trigger

        Args:
            image: benign image to poison
            target_id: identity the poisoned copy should be matched to
            reference: image of the target identity (dynamic triggers only)

        Returns:
            PoisonedImage carrying the payload (None for fixed triggers)
        """
        pass
