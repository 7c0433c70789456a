"""Threshold selection: universal heteroscedastic thresholds, SURE and the hybrid scheme.

Thresholds are returned as "threshold fields": float arrays in the flat
coefficient layout of :mod:`wavemix.dwt` (index 0, the scaling slot, is 0 and
never used).

Two coefficient scalings are supported through ``normalization``:

``"sqrt_m"``
    coefficients carry the ``M**-1/2`` factor, so an averaged coefficient has
    standard error ``sigma_jk / sqrt(M N)``.
``"orthonormal"``
    plain orthonormal coefficients; standard error ``sigma_jk / sqrt(N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dwt import CoefficientTree, is_power_of_two, level_slice
from .errors import ConfigurationError, DomainError, StructureError
from .shrinkage import ShrinkageRule

SELECTORS = ("universal", "sure", "hybrid")
NORMALIZATIONS = ("sqrt_m", "orthonormal")


@dataclass(frozen=True)
class ThresholdPolicy:
    """Shrinkage rule + threshold selector + first shrunk level + universal scale.

    ``divide_by_sqrt_n`` controls whether thresholds use the standard error of
    the averaged coefficient (``sigma/sqrt(N)``) or the per-sample noise level.
    """

    rule: ShrinkageRule = field(default_factory=lambda: ShrinkageRule("scad"))
    selector: str = "universal"
    j0: int = 3
    scale: float = 1.0
    divide_by_sqrt_n: bool = True

    def __post_init__(self):
        if isinstance(self.rule, str):
            object.__setattr__(self, "rule", ShrinkageRule(self.rule))
        sel = str(self.selector).lower()
        if sel not in SELECTORS:
            raise ConfigurationError(f"unknown selector {self.selector!r}; choose from {SELECTORS}")
        object.__setattr__(self, "selector", sel)
        if not (isinstance(self.j0, (int, np.integer)) and self.j0 >= 0):
            raise ConfigurationError(f"j0 must be a non-negative integer, got {self.j0!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ConfigurationError(f"scale must be > 0, got {self.scale}")
        if sel != "universal" and self.rule.kind == "hard":
            raise ConfigurationError("SURE-based selectors need the soft or scad rule")

    def describe(self) -> str:
        return f"{self.rule.kind}+{self.selector}(j0={self.j0},scale={self.scale:g})"


@dataclass
class VarianceField:
    """Per-position noise variances in flat layout (``sigma2[0]`` is ``sigma2_c``)."""

    sigma2: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.sigma2, dtype=float)
        if v.ndim != 1 or not is_power_of_two(v.size):
            raise StructureError(f"variance field must be 1-D with power-of-two length, got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise StructureError("variances must be finite and non-negative")
        self.sigma2 = v

    @classmethod
    def from_parts(cls, sigma2_c: float, details: Sequence[Sequence[float]]) -> "VarianceField":
        return cls(CoefficientTree.from_parts(sigma2_c, details).coeffs)

    @classmethod
    def constant(cls, sigma2: float, M: int) -> "VarianceField":
        return cls(np.full(M, float(sigma2)))

    @property
    def M(self) -> int:
        return self.sigma2.size

    @property
    def J(self) -> int:
        return self.sigma2.size.bit_length() - 1

    @property
    def sigma2_c(self) -> float:
        return float(self.sigma2[0])

    @property
    def sigma2_max(self) -> float:
        return float(self.sigma2.max())

    def level(self, j: int) -> np.ndarray:
        return self.sigma2[level_slice(j)]


def _check_normalization(normalization: str) -> None:
    if normalization not in NORMALIZATIONS:
        raise ConfigurationError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")


def standard_errors(variances: VarianceField, M: int, N: int, normalization: str = "sqrt_m") -> np.ndarray:
    """Standard deviation of the N-sample averaged coefficient at every position."""
    _check_normalization(normalization)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    denom = M * N if normalization == "sqrt_m" else N
    return np.sqrt(variances.sigma2 / denom)


def universal_thresholds(
    variances: VarianceField,
    M: int,
    N: int,
    scale: float = 1.0,
    *,
    normalization: str = "sqrt_m",
) -> np.ndarray:
    """``scale * sigma_jk * sqrt(2 ln M) / sqrt(M N)`` at every position.

    With ``normalization="orthonormal"`` the ``sqrt(M)`` factor is dropped.
    """
    if M < 2:
        raise DomainError(f"universal threshold needs M >= 2, got {M}")
    if variances.M != M:
        raise StructureError(f"variance field has length {variances.M}, expected {M}")
    lam = scale * np.sqrt(2.0 * np.log(M)) * standard_errors(variances, M, N, normalization)
    lam[0] = 0.0
    return lam


def sure_criterion_soft(lam, standardized) -> "float | np.ndarray":
    """SURE for soft thresholding of unit-variance data.

    ``l - 2 #{|d| <= lam} + sum(min(d^2, lam^2))``; ``lam`` may be an array.
    """
    x = np.sort(np.abs(np.asarray(standardized, dtype=float)))
    ell = x.size
    lam_arr = np.asarray(lam, dtype=float)
    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    cnt = np.searchsorted(x, lam_arr, side="right")
    val = ell - 2.0 * cnt + csum[cnt] + lam_arr**2 * (ell - cnt)
    return float(val) if val.ndim == 0 else val


def sure_criterion_scad(lam, standardized, a: float = 3.7) -> "float | np.ndarray":
    """SURE for SCAD thresholding of unit-variance data.

    Per coefficient ``x = |d|`` the contribution beyond the constant ``l`` is
    ``x^2 - 2`` if ``x <= lam``, ``lam^2`` if ``lam < x <= 2 lam``,
    ``(x - a lam)^2/(a-2)^2 + 2/(a-2)`` if ``2 lam < x <= a lam`` and 0 beyond.
    """
    if not a > 2:
        raise ConfigurationError(f"scad_a must be > 2, got {a}")
    x = np.sort(np.abs(np.asarray(standardized, dtype=float)))
    ell = x.size
    lam_arr = np.asarray(lam, dtype=float)
    s1 = np.concatenate(([0.0], np.cumsum(x)))
    s2 = np.concatenate(([0.0], np.cumsum(x * x)))
    i1 = np.searchsorted(x, lam_arr, side="right")
    i2 = np.searchsorted(x, 2.0 * lam_arr, side="right")
    i3 = np.searchsorted(x, a * lam_arr, side="right")
    i3 = np.maximum(i3, i2)
    n_mid = i3 - i2
    val = (
        ell
        + s2[i1] - 2.0 * i1
        + lam_arr**2 * (i2 - i1)
        + ((s2[i3] - s2[i2]) - 2.0 * a * lam_arr * (s1[i3] - s1[i2]) + (a * lam_arr) ** 2 * n_mid) / (a - 2.0) ** 2
        + 2.0 * n_mid / (a - 2.0)
    )
    return float(val) if val.ndim == 0 else val


def sure_criterion(rule: ShrinkageRule, lam, standardized):
    if rule.kind == "soft":
        return sure_criterion_soft(lam, standardized)
    if rule.kind == "scad":
        return sure_criterion_scad(lam, standardized, rule.scad_a)
    raise ConfigurationError("SURE is only defined here for the soft and scad rules")


def sure_candidates(rule: ShrinkageRule, standardized, cap: float) -> np.ndarray:
    """Points where the SURE criterion can attain its minimum on ``[0, cap]``.

    Between breakpoints the criterion is non-decreasing and right-continuous,
    so minima sit at 0 or at a breakpoint where it jumps down: ``|d|`` for
    soft, ``|d|`` and ``|d|/2`` for SCAD. The SCAD breakpoints ``|d|/a`` are
    upward jumps and can never be minimizers.
    """
    x = np.abs(np.asarray(standardized, dtype=float))
    pts = [np.array([0.0, cap]), x]
    if rule.kind == "scad":
        pts.append(x / 2.0)
    cand = np.unique(np.concatenate(pts))
    return cand[cand <= cap]


def sure_threshold_level(
    standardized,
    rule: ShrinkageRule,
    M: Optional[int] = None,
    universal_cap: Optional[float] = None,
) -> float:
    """Minimize SURE over ``0 <= lam <= universal_cap`` for one level.

    ``universal_cap`` defaults to ``sqrt(2 ln M)`` (``M`` defaults to the level
    size). Among exact ties the smallest threshold wins; tied thresholds give
    identical estimates, since the criterion is only flat where no coefficient
    changes branch.
    """
    d = np.asarray(standardized, dtype=float).ravel()
    if d.size == 0:
        raise StructureError("cannot select a SURE threshold for an empty level")
    if universal_cap is None:
        M = d.size if M is None else M
        universal_cap = np.sqrt(2.0 * np.log(max(M, 2)))
    if universal_cap < 0:
        raise DomainError("universal cap must be non-negative")
    cand = sure_candidates(rule, d, universal_cap)
    risk = sure_criterion(rule, cand, d)
    return float(cand[np.argmin(risk)])


def sparsity_bound(j: int) -> float:
    """Right-hand side of the hybrid sparsity test for unit-variance level j."""
    return 2.0**j + 2.0 ** (j / 2.0) * j**1.5


@dataclass
class LevelChoice:
    level: int
    choice: str  # "universal" or "sure"
    sure_lambda: Optional[float]  # standardized SURE threshold when chosen
    energy: float  # sum of squared standardized coefficients
    zero_variance: int  # positions with zero standard error
    flagged: bool = False  # zero variance met a nonzero coefficient


def select_thresholds(
    policy: ThresholdPolicy,
    averaged: "CoefficientTree | np.ndarray",
    variances: VarianceField,
    M: int,
    N: int,
    *,
    normalization: str = "sqrt_m",
) -> tuple[np.ndarray, list[LevelChoice]]:
    """Build the threshold field for ``policy`` and report per-level choices."""
    coeffs = averaged.coeffs if isinstance(averaged, CoefficientTree) else np.asarray(averaged, float)
    if coeffs.shape != (M,) or variances.M != M:
        raise StructureError("averaged coefficients, variances and M disagree")
    J = M.bit_length() - 1
    if policy.j0 >= J and M > 1:
        raise ConfigurationError(f"j0={policy.j0} must be smaller than J={J}")
    n_eff = N if policy.divide_by_sqrt_n else 1
    se = standard_errors(variances, M, n_eff, normalization)
    cap = policy.scale * np.sqrt(2.0 * np.log(M))
    lam = cap * se
    lam[0] = 0.0
    choices: list[LevelChoice] = []
    for j in range(policy.j0, J):
        sl = level_slice(j)
        d, s = coeffs[sl], se[sl]
        pos = s > 0
        n_zero = int(np.count_nonzero(~pos))
        flagged = bool(np.any(d[~pos] != 0))
        d_std = d[pos] / s[pos]
        energy = float(np.dot(d_std, d_std))
        use_universal = (
            policy.selector == "universal"
            or flagged
            or d_std.size == 0
            or (policy.selector == "hybrid" and energy <= sparsity_bound(j))
        )
        if use_universal:
            choices.append(LevelChoice(j, "universal", None, energy, n_zero, flagged))
            continue
        lam_std = sure_threshold_level(d_std, policy.rule, M, cap)
        lam[sl] = lam_std * s
        choices.append(LevelChoice(j, "sure", lam_std, energy, n_zero, flagged))
    return lam, choices


def hybrid_thresholds(
    averaged,
    variances: VarianceField,
    M: int,
    N: int,
    rule: ShrinkageRule,
    *,
    j0: int = 3,
    scale: float = 1.0,
    normalization: str = "sqrt_m",
) -> np.ndarray:
    """Per level: universal field if the level looks sparse, SURE otherwise."""
    policy = ThresholdPolicy(rule=rule, selector="hybrid", j0=j0, scale=scale)
    return select_thresholds(policy, averaged, variances, M, N, normalization=normalization)[0]


def sure_thresholds(
    averaged,
    variances: VarianceField,
    M: int,
    N: int,
    rule: ShrinkageRule,
    *,
    j0: int = 3,
    scale: float = 1.0,
    normalization: str = "sqrt_m",
) -> np.ndarray:
    """Level-wise SURE thresholds without the sparsity fallback."""
    policy = ThresholdPolicy(rule=rule, selector="sure", j0=j0, scale=scale)
    return select_thresholds(policy, averaged, variances, M, N, normalization=normalization)[0]
