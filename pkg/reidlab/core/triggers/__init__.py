"""Trigger implementations"""
from reidlab.core.triggers.base_trigger import ITrigger
from reidlab.core.triggers.baselines import (
    BadNetsTrigger,
    BaselineTriggerSpec,
    BlendedTrigger,
    SigTrigger,
    apply_baseline_trigger,
)
from reidlab.core.triggers.dynamic import DynamicTrigger, RandomCodeTrigger
from reidlab.core.triggers.factory import build_trigger

__all__ = [
    "ITrigger",
    "DynamicTrigger",
    "RandomCodeTrigger",
    "BaselineTriggerSpec",
    "BadNetsTrigger",
    "BlendedTrigger",
    "SigTrigger",
    "apply_baseline_trigger",
    "build_trigger",
]
