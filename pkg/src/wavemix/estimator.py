"""Mean-curve estimation from N replicate curves.

Three strategies are provided: pointwise averaging, shrink-then-average and
average-then-shrink. The last one averages the replicates' wavelet
coefficients and thresholds the average with position-dependent thresholds
built from the replicate spread (``heteroscedastic``) or from a single MAD
noise level (``homoscedastic``).

Variances are kept in the per-sample orthonormal coefficient scale, so the
averaged coefficient at ``(j, k)`` has standard error ``sqrt(v_jk / N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .dwt import CoefficientTree, forward_array, get_filter, inverse_array, is_power_of_two, level_slice
from .errors import ConfigurationError, InsufficientReplicatesError, LengthError, StructureError
from .shrinkage import apply_vector
from .threshold import LevelChoice, ThresholdPolicy, VarianceField, select_thresholds

MAD_CONSTANT = 0.6745

_VARIANCE_MODES = {
    "heteroscedastic": "heteroscedastic",
    "het": "heteroscedastic",
    "he": "heteroscedastic",
    "homoscedastic": "homoscedastic",
    "homoscedastic-mad": "homoscedastic",
    "mad": "homoscedastic",
    "ho": "homoscedastic",
}


def normalize_variance_mode(mode: str) -> str:
    try:
        return _VARIANCE_MODES[str(mode).lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown variance mode {mode!r}; use 'heteroscedastic' or 'homoscedastic'"
        ) from None


@dataclass
class CurvePanel:
    """N replicate curves on the common grid ``t_j = j / M``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1:
            raise StructureError(f"panel must be an N x M matrix, got shape {data.shape}")
        if not is_power_of_two(data.shape[1]):
            raise LengthError(f"curve length {data.shape[1]} is not a power of two")
        if not np.all(np.isfinite(data)):
            raise ValueError("panel contains non-finite values")
        self.data = data

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def M(self) -> int:
        return self.data.shape[1]

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    def coefficients(self, filt) -> np.ndarray:
        """Row-wise DWT, ``N x M`` in flat layout."""
        return forward_array(self.data, filt)


@dataclass
class EstimateResult:
    mu_hat: np.ndarray
    tree_hat: CoefficientTree
    variances: VarianceField | None
    thresholds: np.ndarray | None
    diagnostics: dict = field(default_factory=dict)


CoefficientPanel = Union[np.ndarray, Sequence[CoefficientTree]]


def _as_coeff_matrix(trees: CoefficientPanel) -> np.ndarray:
    if isinstance(trees, np.ndarray):
        c = np.asarray(trees, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
    else:
        c = np.stack([t.coeffs if isinstance(t, CoefficientTree) else np.asarray(t, float) for t in trees])
    if c.ndim != 2 or not is_power_of_two(c.shape[1]):
        raise StructureError(f"expected N trees of power-of-two length, got shape {c.shape}")
    return c


def estimate_variances(trees: CoefficientPanel) -> VarianceField:
    """Unbiased sample variance of each coefficient across the N replicates."""
    c = _as_coeff_matrix(trees)
    if c.shape[0] < 2:
        raise InsufficientReplicatesError(
            "heteroscedastic variance estimation needs N >= 2 replicates; "
            "use the homoscedastic (MAD) variance mode for a single curve"
        )
    return VarianceField(np.var(c, axis=0, ddof=1))


def estimate_sigma_mad(trees: CoefficientPanel) -> float:
    """Mean over replicates of MAD(finest-level details) / 0.6745."""
    c = _as_coeff_matrix(trees)
    M = c.shape[1]
    if M < 2:
        return 0.0
    finest = c[:, M // 2 :]
    med = np.median(finest, axis=1, keepdims=True)
    mad = np.median(np.abs(finest - med), axis=1)
    return float(np.mean(mad) / MAD_CONSTANT)


def _level_counts(before: np.ndarray, after: np.ndarray, j0: int) -> list[dict]:
    J = before.size.bit_length() - 1
    out = []
    for j in range(j0, J):
        sl = level_slice(j)
        killed = int(np.count_nonzero((after[sl] == 0) & (before[sl] != 0)))
        out.append({"level": j, "killed": killed, "kept": 2**j - killed})
    return out


def _shrink_average(
    mean_coeffs: np.ndarray,
    variances: VarianceField,
    N: int,
    filt,
    policy: ThresholdPolicy,
) -> EstimateResult:
    M = mean_coeffs.size
    lam, choices = select_thresholds(policy, mean_coeffs, variances, M, N, normalization="orthonormal")
    tree = apply_vector(policy.rule, CoefficientTree(mean_coeffs), lam, policy.j0)
    mu_hat = inverse_array(tree.coeffs, filt)
    diagnostics = {
        "levels": _level_counts(mean_coeffs, tree.coeffs, policy.j0),
        "selector": [_choice_dict(c) for c in choices],
        "zero_variance_positions": int(sum(c.zero_variance for c in choices)),
        "flagged_levels": [c.level for c in choices if c.flagged],
    }
    return EstimateResult(mu_hat, tree, variances, lam, diagnostics)


def _choice_dict(c: LevelChoice) -> dict:
    return {
        "level": c.level,
        "choice": c.choice,
        "sure_lambda": c.sure_lambda,
        "energy": c.energy,
        "zero_variance": c.zero_variance,
        "flagged": c.flagged,
    }


def average_then_shrink_coefficients(
    coeffs: CoefficientPanel,
    filt,
    policy: ThresholdPolicy,
    variance_mode: str = "heteroscedastic",
) -> EstimateResult:
    """Average-then-shrink starting from the replicates' coefficient trees."""
    filt = get_filter(filt)
    c = _as_coeff_matrix(coeffs)
    N, M = c.shape
    J = M.bit_length() - 1
    if policy.j0 >= J:
        raise ConfigurationError(f"j0={policy.j0} must be smaller than J={J}")
    mode = normalize_variance_mode(variance_mode)
    if mode == "heteroscedastic":
        variances = estimate_variances(c)
    else:
        variances = VarianceField.constant(estimate_sigma_mad(c) ** 2, M)
    result = _shrink_average(c.mean(axis=0), variances, N, filt, policy)
    result.diagnostics["variance_mode"] = mode
    result.diagnostics["N"] = N
    return result


def average_then_shrink(
    panel: CurvePanel,
    filt,
    policy: ThresholdPolicy,
    variance_mode: str = "heteroscedastic",
) -> EstimateResult:
    """Transform each curve, average the coefficients, threshold, invert."""
    if not isinstance(panel, CurvePanel):
        panel = CurvePanel(panel)
    return average_then_shrink_coefficients(panel.coefficients(filt), filt, policy, variance_mode)


def shrink_then_average_coefficients(
    coeffs: CoefficientPanel,
    filt,
    policy: ThresholdPolicy,
) -> EstimateResult:
    """Denoise every replicate on its own (row MAD noise level), then average."""
    filt = get_filter(filt)
    c = _as_coeff_matrix(coeffs)
    N, M = c.shape
    J = M.bit_length() - 1
    if policy.j0 >= J:
        raise ConfigurationError(f"j0={policy.j0} must be smaller than J={J}")
    shrunk = np.empty_like(c)
    sigmas = np.empty(N)
    for i in range(N):
        sigmas[i] = estimate_sigma_mad(c[i])
        row = _shrink_average(c[i], VarianceField.constant(sigmas[i] ** 2, M), 1, filt, policy)
        shrunk[i] = row.tree_hat.coeffs
    tree = CoefficientTree(shrunk.mean(axis=0))
    mu_hat = inverse_array(tree.coeffs, filt)
    diagnostics = {"row_sigma_mad": sigmas.tolist(), "N": N}
    return EstimateResult(mu_hat, tree, None, None, diagnostics)


def shrink_then_average(panel: CurvePanel, filt, policy: ThresholdPolicy) -> EstimateResult:
    if not isinstance(panel, CurvePanel):
        panel = CurvePanel(panel)
    return shrink_then_average_coefficients(panel.coefficients(filt), filt, policy)


def pointwise_average(panel: CurvePanel, filt=1) -> EstimateResult:
    """Plain mean of the curves at each grid point (no smoothing)."""
    if not isinstance(panel, CurvePanel):
        panel = CurvePanel(panel)
    mu_hat = panel.data.mean(axis=0)
    tree = CoefficientTree(forward_array(mu_hat, filt))
    return EstimateResult(mu_hat, tree, None, None, {"N": panel.N})


def pointwise_average_coefficients(coeffs: CoefficientPanel, filt) -> EstimateResult:
    c = _as_coeff_matrix(coeffs)
    tree = CoefficientTree(c.mean(axis=0))
    return EstimateResult(inverse_array(tree.coeffs, filt), tree, None, None, {"N": c.shape[0]})
