"""Synthetic multisample data with wavelet-domain heteroscedastic noise.

Replicates are simulated directly in the coefficient domain::

    d_ijk = beta_jk + eps_ijk,  eps_ijk ~ N(0, sigma2_jk)
    sigma2_jk = sigma2 + pi_jk * 2**(-j * eta) * gamma2_jk

where ``beta`` are the orthonormal DWT coefficients of a Donoho-Johnstone test
function, ``sigma`` is set by the signal-to-noise ratio and the extra-variance
draws ``gamma2_jk ~ Gamma(shape=gamma2_ref/2, scale=2)`` are calibrated by the
heteroscedasticity ratio ``tau``.

Random streams
--------------
Every draw comes from ``numpy.random.SeedSequence(seed, spawn_key=key)``:

* ``(0, function_index)``: the Bernoulli mask of a test function, shared by all
  configurations of a study so the mean/mask pairing stays fixed;
* ``(1, cell)``: the ``gamma2`` draws of one configuration;
* ``(2, cell, repetition)``: the replicate noise of one repetition.

Repetitions therefore reproduce bit-for-bit whatever order or thread runs them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .dwt import CoefficientTree, forward_array, get_filter, inverse_array, is_power_of_two, level_of_index
from .errors import CalibrationError, ConfigurationError, LengthError

FUNCTIONS = ("blocks", "bumps", "heavisine", "doppler")
DEFAULT_FILTERS = {"blocks": 1, "bumps": 2, "heavisine": 5, "doppler": 7}
STRUCTURES = ("zeros", "bernoulli")
SNR_DEFINITIONS = ("rms", "sd", "power")
ZERO_TOL = 1e-4

_BUMP_POS = np.array([0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81])
_BLOCK_HGT = np.array([4, -5, 3, -4, 5, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2])
_BUMP_HGT = np.array([4, 5, 3, 4, 5, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2])
_BUMP_WTH = np.array([0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005])


def _canonical(name: str) -> str:
    key = str(name).strip().lower()
    if key not in FUNCTIONS:
        raise ConfigurationError(f"unknown test function {name!r}; choose from {FUNCTIONS}")
    return key


def evaluate(name: str, t) -> np.ndarray:
    """Raw Donoho-Johnstone test function (no amplitude renormalization)."""
    name = _canonical(name)
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    if name == "blocks":
        return np.sum((1 + np.sign(tt - _BUMP_POS)) * _BLOCK_HGT / 2, axis=-1)
    if name == "bumps":
        return np.sum(_BUMP_HGT / (1 + np.abs((tt - _BUMP_POS) / _BUMP_WTH)) ** 4, axis=-1)
    if name == "heavisine":
        return 4 * np.sin(4 * np.pi * t) - np.sign(t - 0.3) - np.sign(0.72 - t)
    return np.sqrt(t * (1 - t)) * np.sin(2 * np.pi * 1.05 / (t + 0.05))


def grid(M: int) -> np.ndarray:
    """Midpoint grid ``t_j = (j - 1/2) / M``, ``j = 1..M``."""
    return (np.arange(M) + 0.5) / M


def test_function(name: str, M: int) -> np.ndarray:
    if not is_power_of_two(M):
        raise LengthError(f"M={M} is not a power of two")
    return evaluate(name, grid(M))


test_function.__test__ = False  # keep pytest from collecting it


def mu_coefficients(name: str, M: int, filt=None) -> CoefficientTree:
    filt = DEFAULT_FILTERS[_canonical(name)] if filt is None else filt
    return CoefficientTree(forward_array(test_function(name, M), filt))


@dataclass(frozen=True)
class SimulationConfig:
    """One simulation cell.

    ``tau = inf`` gives the homoscedastic model ``sigma2_jk = sigma2``.
    ``zero_tol`` is the relative magnitude (w.r.t. ``max |beta|``) below which
    a detail coefficient of the mean counts as zero.

    ``snr_definition`` fixes how ``sigma`` follows from ``snr``:
    ``"rms"``: ``sigma = rms(mu) / snr``; ``"sd"``: ``sigma = sd(mu) / snr``;
    ``"power"``: ``sigma**2 = var(mu) / snr``.
    """

    test_function: str = "blocks"
    M: int = 1024
    N: int = 100
    snr: float = 5.0
    tau: float = 0.1
    eta: float = 1.5
    structure: str = "zeros"
    bernoulli_p: float = 0.3
    repetitions: int = 50
    seed: int = 0
    filter: Optional[int] = None
    zero_tol: float = ZERO_TOL
    snr_definition: str = "rms"

    def __post_init__(self):
        object.__setattr__(self, "test_function", _canonical(self.test_function))
        structure = str(self.structure).lower()
        aliases = {"zero-coeffs-only": "zeros", "bernoulli-mask": "bernoulli"}
        structure = aliases.get(structure, structure)
        if structure not in STRUCTURES:
            raise ConfigurationError(f"unknown structure {self.structure!r}; choose from {STRUCTURES}")
        object.__setattr__(self, "structure", structure)
        if not is_power_of_two(self.M) or self.M < 2:
            raise ConfigurationError(f"M={self.M} must be a power of two >= 2")
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise ConfigurationError(f"N must be an integer >= 1, got {self.N!r}")
        if not (self.snr > 0 and math.isfinite(self.snr)):
            raise ConfigurationError(f"snr must be a positive number, got {self.snr}")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")
        if not math.isfinite(self.eta):
            raise ConfigurationError(f"eta must be finite, got {self.eta}")
        if not 0 <= self.bernoulli_p <= 1:
            raise ConfigurationError(f"bernoulli_p must lie in [0, 1], got {self.bernoulli_p}")
        if not (isinstance(self.repetitions, (int, np.integer)) and self.repetitions >= 1):
            raise ConfigurationError(f"repetitions must be >= 1, got {self.repetitions!r}")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        filt = DEFAULT_FILTERS[self.test_function] if self.filter is None else self.filter
        object.__setattr__(self, "filter", get_filter(filt).vanishing_moments)
        if not self.zero_tol >= 0:
            raise ConfigurationError("zero_tol must be >= 0")
        if self.snr_definition not in SNR_DEFINITIONS:
            raise ConfigurationError(
                f"unknown snr_definition {self.snr_definition!r}; choose from {SNR_DEFINITIONS}"
            )

    @property
    def function_index(self) -> int:
        return FUNCTIONS.index(self.test_function)

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.tau):
            d["tau"] = "inf"
        return d


@dataclass
class NoiseModel:
    sigma2: float
    gamma2: np.ndarray  # flat layout; entry 0 unused
    mask: np.ndarray  # bool, flat layout; entry 0 always False
    eta: float
    gamma2_ref: float

    @property
    def M(self) -> int:
        return self.gamma2.size

    @property
    def sigma2_jk(self) -> np.ndarray:
        """Realized variance field (flat layout, scaling slot = sigma2)."""
        j = level_of_index(self.M)
        decay = np.where(j >= 0, 2.0 ** (-np.maximum(j, 0) * self.eta), 0.0)
        return self.sigma2 + self.mask * decay * self.gamma2


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def zero_set(mu: CoefficientTree, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Boolean mask of detail coefficients that are negligible relative to the largest."""
    mag = np.abs(mu.coeffs)
    out = mag <= zero_tol * mag[1:].max(initial=0.0)
    out[0] = False
    return out


def draw_mask(config: SimulationConfig, mu: CoefficientTree, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    if config.structure == "zeros":
        return zero_set(mu, config.zero_tol)
    if rng is None:
        rng = rng_for(config.seed, 0, config.function_index)
    mask = rng.random(mu.M) < config.bernoulli_p
    mask[0] = False
    return mask


def baseline_sigma(config: SimulationConfig, mu_signal: np.ndarray) -> float:
    """Baseline noise sd implied by ``config.snr`` under ``config.snr_definition``."""
    mu_signal = np.asarray(mu_signal, dtype=float)
    if config.snr_definition == "rms":
        level = float(np.sqrt(np.mean(mu_signal**2)))
    else:
        level = float(np.std(mu_signal))
    if level == 0:
        raise CalibrationError("mean function has no signal; SNR is undefined")
    if config.snr_definition == "power":
        return float(np.sqrt(level**2 / config.snr))
    return level / config.snr


def calibrate(
    config: SimulationConfig,
    mu: CoefficientTree,
    rng: Optional[np.random.Generator] = None,
    *,
    cell: int = 0,
    mask: Optional[np.ndarray] = None,
) -> NoiseModel:
    """Derive sigma from SNR, gamma2_ref from tau and draw the gamma2 field."""
    if mu.M != config.M:
        raise CalibrationError(f"mean coefficients have length {mu.M}, config says M={config.M}")
    if not np.any(mu.coeffs != 0):
        raise CalibrationError("mean function is identically zero")
    sigma = baseline_sigma(config, inverse_array(mu.coeffs, config.filter))
    sigma2 = sigma**2
    if mask is None:
        mask = draw_mask(config, mu)
    mask = np.asarray(mask, dtype=bool).copy()
    mask[0] = False
    M = config.M
    if math.isinf(config.tau):
        return NoiseModel(sigma2, np.zeros(M), mask, config.eta, 0.0)
    j = level_of_index(M)
    weight = float(np.sum(2.0 ** (-j[mask] * config.eta)))
    if weight == 0:
        raise CalibrationError(
            f"no heteroscedastic positions for {config.test_function} "
            f"(structure={config.structure}); the zero-coefficient set is empty"
        )
    gamma2_ref = M * sigma2 / (config.tau * weight)
    if rng is None:
        rng = rng_for(config.seed, 1, cell)
    gamma2 = rng.gamma(shape=gamma2_ref / 2.0, scale=2.0, size=M)
    gamma2[0] = 0.0
    return NoiseModel(sigma2, gamma2, mask, config.eta, gamma2_ref)


def generate_panel(
    config: SimulationConfig,
    noise: NoiseModel,
    rng: np.random.Generator,
    mu: CoefficientTree,
) -> np.ndarray:
    """``N x M`` panel of noisy coefficient trees (flat layout)."""
    sd = np.sqrt(noise.sigma2_jk)
    z = rng.standard_normal((config.N, config.M))
    return mu.coeffs + z * sd


def to_curves(coeff_panel: np.ndarray, filt) -> np.ndarray:
    return inverse_array(coeff_panel, filt)


def simulate(config: SimulationConfig, repetition: int = 0, cell: int = 0):
    """Convenience: calibrated noise model and one panel of curves.

    Returns ``(curves, mu_true, noise)``.
    """
    mu = mu_coefficients(config.test_function, config.M, config.filter)
    noise = calibrate(config, mu, cell=cell)
    coeffs = generate_panel(config, noise, rng_for(config.seed, 2, cell, repetition), mu)
    return to_curves(coeffs, config.filter), inverse_array(mu.coeffs, config.filter), noise
