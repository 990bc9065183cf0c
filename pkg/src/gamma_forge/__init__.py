"""Chain-level constructions and spectral audits over word-hyperbolic groups."""

from gamma_forge.group_model import (
    CayleyBall,
    GroupSpec,
    HyperbolicityAudit,
    audit_delta,
    build_ball,
    preset,
    reduce,
)

__version__ = "0.1.0"

__all__ = [
    "CayleyBall",
    "GroupSpec",
    "HyperbolicityAudit",
    "audit_delta",
    "build_ball",
    "preset",
    "reduce",
]
