"""Generalized Gaussian distribution core.

The family is parameterized by a shape ``beta >= 1`` and a *scale* ``sigma``:

    pdf(x) = beta / (2 * sigma * Gamma(1/beta)) * exp(-(|x - mu|/sigma)**beta)

Under this convention ``beta = 1`` is Laplace with scale ``sigma`` and
``beta = 2`` is a normal with standard deviation ``sigma / sqrt(2)`` (so
``GGParams(2, sqrt(2))`` is the standard normal).  Some texts parameterize
the exponent as |x|**beta / nu with ``nu = sigma**beta``; `sigma_power` /
`from_sigma_power` convert to and from that form.

Sampling uses the exact gamma transform ``Z = S * sigma * G**(1/beta)`` with
``G ~ Gamma(1/beta, 1)`` and ``S`` a uniform sign, drawing the gamma variates
first and the signs second from the supplied generator.  The inverse-CDF
sampler is retained as a slow cross-check (`sample_inverse_cdf`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import kernels
from .errors import InputError, ParameterError

BETA_MAX = 64.0
SIGMA_MAX = 1e12


@dataclass(frozen=True)
class GGParams:
    """Shape/scale pair for a centered generalized Gaussian."""

    beta: float
    sigma: float

    def __post_init__(self) -> None:
        beta = float(self.beta)
        sigma = float(self.sigma)
        if not math.isfinite(beta) or beta < 1.0 or beta > BETA_MAX:
            raise ParameterError(
                f"beta must lie in [1, {BETA_MAX:g}], got {self.beta!r}")
        if not math.isfinite(sigma) or sigma <= 0.0 or sigma > SIGMA_MAX:
            raise ParameterError(
                f"sigma must lie in (0, {SIGMA_MAX:g}], got {self.sigma!r}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", sigma)


def sigma_power(params: GGParams) -> float:
    """Scale of the exponent parameterization, ``sigma**beta``."""
    return params.sigma ** params.beta


def from_sigma_power(beta: float, nu: float) -> GGParams:
    """Build params from the exponent parameterization ``exp(-|x|**beta/nu)``."""
    if not (isinstance(nu, (int, float)) and math.isfinite(nu)) or nu <= 0:
        raise ParameterError(f"sigma_power must be positive and finite, got {nu!r}")
    return GGParams(beta, float(nu) ** (1.0 / float(beta)))


def _as_float_array(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must be finite")
    return np.atleast_1d(arr), scalar


def pdf(params: GGParams, x, mu: float = 0.0):
    """Density of GG(beta, sigma) centered at ``mu``."""
    arr, scalar = _as_float_array(x, "x")
    beta, sigma = params.beta, params.sigma
    log_norm = math.log(beta / 2.0) - math.log(sigma) - special.gammaln(1.0 / beta)
    out = np.exp(log_norm - (np.abs(arr - mu) / sigma) ** beta)
    return float(out[0]) if scalar else out


def cdf(params: GGParams, x, mu: float = 0.0):
    """Distribution function, via the regularized lower incomplete gamma.

    F(x) = 1/2 + sign(x - mu)/2 * P(1/beta, (|x - mu|/sigma)**beta)
    """
    arr, scalar = _as_float_array(x, "x")
    beta, sigma = params.beta, params.sigma
    z = (np.abs(arr - mu) / sigma) ** beta
    out = 0.5 + 0.5 * np.sign(arr - mu) * special.gammainc(1.0 / beta, z)
    return float(out[0]) if scalar else out


def quantile(params: GGParams, u, mu: float = 0.0):
    """Inverse of `cdf` on the open interval (0, 1)."""
    arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    scalar = np.ndim(u) == 0
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ParameterError("quantile levels must lie strictly inside (0, 1)")
    beta, sigma = params.beta, params.sigma
    core = special.gammaincinv(1.0 / beta, np.abs(2.0 * arr - 1.0))
    out = mu + np.sign(arr - 0.5) * sigma * core ** (1.0 / beta)
    return float(out[0]) if scalar else out


def sample(params: GGParams, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` iid variates via the gamma transform.

    Consumes the generator in a fixed order (gamma block, then sign block),
    which downstream reproducibility guarantees rely on.
    """
    if not isinstance(count, (int, np.integer)) or count < 1:
        raise ParameterError(f"count must be a positive integer, got {count!r}")
    inv_beta = 1.0 / params.beta
    g = rng.standard_gamma(inv_beta, size=int(count))
    signs = rng.integers(0, 2, size=int(count)).astype(np.float64) * 2.0 - 1.0
    return kernels.signed_power_scale(g, signs, params.sigma, inv_beta)


def sample_inverse_cdf(params: GGParams, rng: np.random.Generator,
                       count: int) -> np.ndarray:
    """Reference sampler: push uniforms through `quantile`.

    Slower than `sample`; kept as an independent oracle for distribution
    tests.
    """
    if not isinstance(count, (int, np.integer)) or count < 1:
        raise ParameterError(f"count must be a positive integer, got {count!r}")
    u = rng.random(int(count))
    # keep u strictly inside (0, 1); random() can return exactly 0.0
    u = np.nextafter(u, 1.0)
    return np.asarray(quantile(params, u))


def absolute_moment(params: GGParams, k: float) -> float:
    """E|Z|**k = sigma**k * Gamma((k+1)/beta) / Gamma(1/beta), for k >= 0.

    In particular E|Z|**beta = sigma**beta / beta.
    """
    if not math.isfinite(k) or k < 0:
        raise ParameterError(f"moment order must be a finite value >= 0, got {k!r}")
    beta, sigma = params.beta, params.sigma
    log_m = k * math.log(sigma) + special.gammaln((k + 1.0) / beta) - special.gammaln(1.0 / beta)
    return float(math.exp(log_m))
