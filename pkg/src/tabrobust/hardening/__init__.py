"""Adversarial hardening: weight fine-tuning (AFT) and context replacement (AICL)."""
from .aft import harden_aft
from .aicl import harden_aicl
from .common import (
    ConvergenceTrace,
    HardenedArtifact,
    HardeningConfig,
    convergence_report,
    effective_eps,
    eta_schedule,
)

__all__ = [
    "ConvergenceTrace",
    "HardenedArtifact",
    "HardeningConfig",
    "convergence_report",
    "effective_eps",
    "eta_schedule",
    "harden_aft",
    "harden_aicl",
]
