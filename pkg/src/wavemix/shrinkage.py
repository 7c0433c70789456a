"""Pointwise shrinkage rules: hard, soft and SCAD thresholding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dwt import CoefficientTree, level_slice
from .errors import ConfigurationError, DomainError, StructureError

KINDS = ("hard", "soft", "scad")
DEFAULT_SCAD_A = 3.7


@dataclass(frozen=True)
class ShrinkageRule:
    kind: str = "soft"
    scad_a: float = DEFAULT_SCAD_A

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ConfigurationError(f"unknown shrinkage rule {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.scad_a > 2:
            raise ConfigurationError(f"scad_a must be > 2, got {self.scad_a}")

    def __call__(self, d, lam):
        return apply(self, d, lam)


def hard(d, lam):
    d = np.asarray(d, dtype=float)
    return np.where(np.abs(d) > lam, d, 0.0)


def soft(d, lam):
    d = np.asarray(d, dtype=float)
    return np.sign(d) * np.maximum(np.abs(d) - lam, 0.0)


def scad(d, lam, a=DEFAULT_SCAD_A):
    """SCAD thresholding.

    Soft for ``|d| <= 2*lam``, linear blend ``((a-1)d - a*lam*sign(d))/(a-2)``
    for ``2*lam < |d| <= a*lam`` and identity beyond ``a*lam``.
    """
    if not a > 2:
        raise ConfigurationError(f"scad_a must be > 2, got {a}")
    d = np.asarray(d, dtype=float)
    lam = np.asarray(lam, dtype=float)
    ad = np.abs(d)
    s = np.sign(d)
    soft_part = s * np.maximum(ad - lam, 0.0)
    with np.errstate(invalid="ignore"):
        blend = ((a - 1.0) * d - a * lam * s) / (a - 2.0)
    return np.where(ad <= 2.0 * lam, soft_part, np.where(ad <= a * lam, blend, d))


def apply(rule: ShrinkageRule, d, lam):
    """Apply ``rule`` elementwise; ``lam`` broadcasts against ``d``."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0) or np.any(np.isnan(lam_arr)):
        raise DomainError("thresholds must be non-negative")
    if rule.kind == "hard":
        out = hard(d, lam_arr)
    elif rule.kind == "soft":
        out = soft(d, lam_arr)
    else:
        out = scad(d, lam_arr, rule.scad_a)
    if np.ndim(out) == 0:
        return float(out)
    return out


def apply_vector(
    rule: ShrinkageRule,
    tree: CoefficientTree,
    lambdas: np.ndarray,
    j0: int,
) -> CoefficientTree:
    """Shrink levels ``j0..J-1`` of ``tree``; scaling and coarser levels pass through.

    ``lambdas`` uses the flat coefficient layout (length ``M``). Entries below
    level ``j0`` are ignored; NaN at a shrunk position counts as missing.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != tree.coeffs.shape:
        raise StructureError(
            f"threshold field has shape {lambdas.shape}, tree has {tree.coeffs.shape}"
        )
    out = tree.coeffs.copy()
    if j0 >= tree.J:
        return CoefficientTree(out)
    if j0 < 0:
        raise ConfigurationError(f"j0 must be >= 0, got {j0}")
    start = level_slice(j0).start
    lam = lambdas[start:]
    if np.any(np.isnan(lam)):
        raise StructureError("threshold field has missing entries at shrunk levels")
    out[start:] = apply(rule, out[start:], lam)
    return CoefficientTree(out)
