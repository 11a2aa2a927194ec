"""Sampled discrete privacy-loss accounting.

The pipeline: draw single-shot loss values, keep those inside a window
[-L, L], bin them onto a uniform grid of ``2m + 1`` cells with
``L = (m + 1/2) h``, estimate a sub-cell offset, self-compose the binned
distribution with FFT powers (circular, i.e. modulo the window), and read
``delta(epsilon)`` / ``epsilon(delta)`` off the composed grid.

Alongside the point estimates the accountant evaluates a finite-sample error
certificate ``(eta, tau)``: the true delta at ``epsilon (+/-) tau`` lies
within ``eta`` of the reported curve.  With the default window the
certificate is dominated by its worst-case discretization terms and is much
looser than the observed accuracy; both the raw estimate and the
conservative (estimate + certificate) values are reported.

Determinism: every sampling entry point accepts ``rng`` as a
``numpy.random.Generator`` (caller-controlled stream), an ``int`` seed, or
``None``.  For ``int``/``None`` the actual generator is derived by hashing
the seed together with the mechanism, configuration, and purpose of the
draw, so repeated calls with identical arguments reproduce results
bit-for-bit.  ``None`` means the documented default seed ``DEFAULT_SEED``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import stats as sp_stats

from . import kernels
from .errors import (AccountingInconsistencyError, BudgetExhaustedError,
                     ConfigError, GridMismatchError, ParameterError,
                     RangeError, TruncationError)
from .prv import LossDirection, MechanismSpec, directions_for, sample_prv

DEFAULT_SEED = 61803398
DEFAULT_BINS = 2 ** 19
DEFAULT_SAMPLES = 5_000_000
PILOT_SAMPLES = 10_000
_PILOT_SPREAD = 12.0
_SAMPLE_CHUNK = 2_500_000
_MIN_ACCEPTANCE = 0.10
_MASS_DRIFT_TOL = 1e-9


def derive_rng(seed: int | None, *context) -> np.random.Generator:
    """Build a generator from a seed plus a canonical description of its use.

    The context items are rendered with ``repr`` and hashed (SHA-256), so the
    stream depends on every argument but on nothing environmental.
    """
    base = DEFAULT_SEED if seed is None else int(seed)
    payload = repr((base,) + tuple(context)).encode()
    digest = hashlib.sha256(payload).digest()
    entropy = int.from_bytes(digest, "big")
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _resolve_rng(rng, *context) -> tuple[np.random.Generator, int | None]:
    """Map the public ``rng`` argument to (generator, seed-or-None)."""
    if isinstance(rng, np.random.Generator):
        return rng, None
    if rng is None or isinstance(rng, (int, np.integer)):
        seed = None if rng is None else int(rng)
        return derive_rng(seed, *context), (DEFAULT_SEED if seed is None else seed)
    raise ParameterError(f"rng must be a Generator, int seed, or None; got {rng!r}")


@dataclass(frozen=True)
class AccountantConfig:
    """Grid and sampling sizes for the discretized accountant.

    ``trunc_L`` must sit half a cell beyond the outermost grid point:
    ``trunc_L = (m + 1/2) * mesh_h`` for an integer ``m >= 1``.  Build
    configurations with `from_bins` to get that alignment for free.
    ``hoeffding_s`` / ``sampling_t`` are the free parameters of the error
    certificate; ``None`` resolves them at accounting time to
    ``10 h sqrt(k)`` and ``10 L / sqrt(n)``.
    """

    trunc_L: float
    mesh_h: float
    samples_n: int = DEFAULT_SAMPLES
    hoeffding_s: float | None = None
    sampling_t: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.trunc_L) and self.trunc_L > 0):
            raise ConfigError(f"trunc_L must be positive, got {self.trunc_L!r}")
        if not (math.isfinite(self.mesh_h) and self.mesh_h > 0):
            raise ConfigError(f"mesh_h must be positive, got {self.mesh_h!r}")
        m_float = self.trunc_L / self.mesh_h - 0.5
        m = round(m_float)
        if m < 1 or abs(m_float - m) > 1e-6:
            raise ConfigError(
                "trunc_L must equal (m + 1/2) * mesh_h for integer m >= 1; "
                f"got trunc_L/mesh_h - 1/2 = {m_float!r}")
        if 2 * m + 1 > 2 ** 26:
            raise ConfigError("grid would exceed 2**26 cells")
        if not isinstance(self.samples_n, (int, np.integer)) or self.samples_n < 10_000:
            raise ConfigError(
                f"samples_n must be an integer >= 10000, got {self.samples_n!r}")
        for name in ("hoeffding_s", "sampling_t"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive when given, got {v!r}")
        object.__setattr__(self, "samples_n", int(self.samples_n))

    @classmethod
    def from_bins(cls, trunc_L: float, bins: int = DEFAULT_BINS,
                  samples_n: int = DEFAULT_SAMPLES,
                  hoeffding_s: float | None = None,
                  sampling_t: float | None = None) -> "AccountantConfig":
        """Config with ``bins // 2 * 2 + 1`` cells spanning [-trunc_L, trunc_L]."""
        if not isinstance(bins, (int, np.integer)) or bins < 2:
            raise ConfigError(f"bins must be an integer >= 2, got {bins!r}")
        m = int(bins) // 2
        h = 2.0 * float(trunc_L) / (2 * m + 1)
        return cls(trunc_L=float(trunc_L), mesh_h=h, samples_n=samples_n,
                   hoeffding_s=hoeffding_s, sampling_t=sampling_t)

    @property
    def half_bins(self) -> int:
        return round(self.trunc_L / self.mesh_h - 0.5)

    @property
    def num_bins(self) -> int:
        return 2 * self.half_bins + 1

    def resolved_s(self, compositions: int) -> float:
        if self.hoeffding_s is not None:
            return self.hoeffding_s
        return 10.0 * self.mesh_h * math.sqrt(compositions)

    def resolved_t(self) -> float:
        if self.sampling_t is not None:
            return self.sampling_t
        return 10.0 * self.trunc_L / math.sqrt(self.samples_n)

    def to_dict(self) -> dict:
        return {
            "trunc_L": self.trunc_L,
            "mesh_h": self.mesh_h,
            "samples_n": self.samples_n,
            "hoeffding_s": self.hoeffding_s,
            "sampling_t": self.sampling_t,
        }


@dataclass(frozen=True, eq=False)
class DiscretePRV:
    """A privacy-loss distribution binned to a uniform grid.

    ``probs[j]`` is the mass of grid index ``i = j - m`` whose loss value is
    ``i * mesh_h + offset``.  Freshly discretized distributions carry an
    offset in [0, mesh_h / 2]; composition adds offsets, so composed ones may
    exceed that half-cell range.
    """

    probs: np.ndarray
    mesh_h: float
    offset: float = 0.0
    compositions: int = 1
    tail_upper: float | None = None
    acceptance: float | None = None
    source: str = ""
    _tables: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 3 or p.size % 2 == 0:
            raise ParameterError("probs must be a 1-d array of odd length >= 3")
        if np.any(p < -1e-12) or not np.all(np.isfinite(p)):
            raise ParameterError("probs must be finite and non-negative")
        total = float(p.sum())
        if abs(total - 1.0) > _MASS_DRIFT_TOL:
            raise ParameterError(f"probs must sum to 1 within {_MASS_DRIFT_TOL:g}; "
                                 f"got {total!r}")
        p = np.maximum(p, 0.0)
        p = p / p.sum()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        if not (math.isfinite(self.mesh_h) and self.mesh_h > 0):
            raise ParameterError(f"mesh_h must be positive, got {self.mesh_h!r}")
        if not (math.isfinite(self.offset) and self.offset >= 0):
            raise ParameterError(f"offset must be >= 0, got {self.offset!r}")
        if self.compositions < 1:
            raise ParameterError("compositions must be >= 1")

    @property
    def half_bins(self) -> int:
        return (self.probs.size - 1) // 2

    @property
    def trunc_L(self) -> float:
        return (self.half_bins + 0.5) * self.mesh_h

    def support(self) -> np.ndarray:
        m = self.half_bins
        return np.arange(-m, m + 1, dtype=np.float64) * self.mesh_h + self.offset

    # -- delta / epsilon queries -------------------------------------------

    def _positive_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Suffix sums over the strictly positive part of the support.

        S1[i] = sum_{j >= i} p_j, padded with a trailing zero, and
        LS2[i] = log sum_{j >= i} p_j exp(-y_j), padded with -inf, so
        delta(eps) is an O(log G) lookup: delta = S1[i0] - exp(eps +
        LS2[i0]) at the first y_{i0} > eps.  The log form matters: wide
        composed grids push y past 745 (exp(-y) underflows) and bracketing
        probes evaluate eps past 709 (exp(eps) overflows), while the
        combined exponent eps + LS2[i0] <= eps - y_{i0} < 0 stays safe.
        """
        if self._tables is None:
            y = self.support()
            j0 = int(np.searchsorted(y, 0.0, side="right"))
            ys = y[j0:]
            p = self.probs[j0:]
            s1 = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
            with np.errstate(divide="ignore"):  # log(0) = -inf is wanted
                a = np.log(p) - ys
            ls2 = np.concatenate([np.logaddexp.accumulate(a[::-1])[::-1],
                                  [-np.inf]])
            object.__setattr__(self, "_tables", (ys, s1, ls2))
        return self._tables

    def delta_at(self, epsilon) -> np.ndarray | float:
        """Hockey-stick divergence delta(epsilon) on the grid, for eps >= 0."""
        eps = np.atleast_1d(np.asarray(epsilon, dtype=np.float64))
        if np.any(eps < 0) or not np.all(np.isfinite(eps)):
            raise ParameterError("epsilon must be finite and >= 0")
        ys, s1, ls2 = self._positive_tables()
        j = np.searchsorted(ys, eps, side="right")
        out = np.clip(s1[j] - np.exp(eps + ls2[j]), 0.0, 1.0)
        return float(out[0]) if np.ndim(epsilon) == 0 else out

    def epsilon_at(self, delta: float) -> float:
        """Smallest epsilon in [0, L] with delta(epsilon) <= delta."""
        if not (0.0 < delta <= 1.0):
            d0 = self.delta_at(0.0)
            raise RangeError(
                f"delta target must lie in (0, 1]; attainable range here is "
                f"(0, {d0:.6g}] down to 0 at epsilon = {self.trunc_L:.6g}; "
                f"got {delta!r}")
        if self.delta_at(0.0) <= delta:
            return 0.0
        lo, hi = 0.0, float(self.support()[-1])
        if self.delta_at(hi) > delta:  # all representable mass above hi is gone
            return hi
        for _ in range(200):
            if hi - lo <= 1e-12 * max(1.0, hi):
                break
            mid = 0.5 * (lo + hi)
            if self.delta_at(mid) <= delta:
                hi = mid
            else:
                lo = mid
        return hi


def delta_of_epsilon(prv: DiscretePRV, epsilon):
    """Module-level alias for `DiscretePRV.delta_at`."""
    return prv.delta_at(epsilon)


def epsilon_of_delta(prv: DiscretePRV, delta: float) -> float:
    """Module-level alias for `DiscretePRV.epsilon_at`."""
    return prv.epsilon_at(delta)


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------


def discretize_from_samples(sample_fn: Callable[[np.random.Generator, int], np.ndarray],
                            cfg: AccountantConfig, rng,
                            source: str = "sampled") -> DiscretePRV:
    """Estimate a `DiscretePRV` from ``2 * samples_n`` accepted draws.

    Rejection-samples into [-L, L]; the first ``samples_n`` accepted values
    feed the bin masses, the second half estimates the sub-cell offset
    ``mu_hat = clamp(mean - grid_mean, [0, h/2])``.  Raises
    `TruncationError` when fewer than 10% of draws land inside the window.
    """
    gen, _ = _resolve_rng(rng, "discretize", cfg.to_dict(), source)
    n = cfg.samples_n
    need = 2 * n
    L, h, m = cfg.trunc_L, cfg.mesh_h, cfg.half_bins
    chunk = min(need, _SAMPLE_CHUNK)

    pieces: list[np.ndarray] = []
    accepted = 0
    drawn = 0
    while accepted < need:
        values = np.asarray(sample_fn(gen, chunk), dtype=np.float64)
        drawn += values.size
        kept = values[np.abs(values) <= L]
        accepted += kept.size
        pieces.append(kept)
        if drawn >= min(need, 1_000_000) and accepted < _MIN_ACCEPTANCE * drawn:
            raise TruncationError(
                f"only {accepted}/{drawn} loss samples fell inside "
                f"[-{L:g}, {L:g}] (acceptance {accepted / drawn:.3f} < "
                f"{_MIN_ACCEPTANCE}); widen trunc_L")
    values = np.concatenate(pieces)[:need]
    acceptance = accepted / drawn
    rejected = drawn - accepted

    counts = kernels.bin_counts(values[:n], h, m)
    q = counts.astype(np.float64) / n
    grid_mean = h * float(np.dot(np.arange(-m, m + 1, dtype=np.float64), q))
    mu_tilde = float(np.mean(values[n:])) - grid_mean
    mu_hat = min(max(mu_tilde, 0.0), h / 2.0)

    # 99% Clopper-Pearson upper bound on the per-draw rejection probability.
    tail_upper = float(sp_stats.beta.ppf(0.99, rejected + 1, drawn - rejected)) \
        if rejected < drawn else 1.0

    return DiscretePRV(probs=q, mesh_h=h, offset=mu_hat, compositions=1,
                       tail_upper=tail_upper, acceptance=acceptance,
                       source=source)


def discretize_from_cdf(cdf_fn: Callable[[np.ndarray], np.ndarray],
                        cfg: AccountantConfig,
                        source: str = "cdf") -> DiscretePRV:
    """Deterministic discretization of a known loss CDF onto the grid.

    Bin masses come from CDF differences at the cell edges, conditioned on
    the window; the offset uses the exact conditional mean (CDF trapezoid
    integration by parts).  Raises `TruncationError` when the window holds
    less than 10% of the mass.
    """
    m, h, L = cfg.half_bins, cfg.mesh_h, cfg.trunc_L
    edges = (np.arange(-m, m + 2, dtype=np.float64) - 0.5) * h
    F = np.asarray(cdf_fn(edges), dtype=np.float64)
    if F.shape != edges.shape or not np.all(np.isfinite(F)):
        raise ParameterError("cdf_fn must return finite values, one per edge")
    p = np.maximum(np.diff(F), 0.0)
    mass = float(F[-1] - F[0])
    if mass < _MIN_ACCEPTANCE:
        raise TruncationError(
            f"window [-{L:g}, {L:g}] holds only {mass:.3f} of the loss mass; "
            "widen trunc_L")
    q = p / p.sum()

    # E[Y | window] via integration by parts; trapezoid over the edge grid.
    stieltjes = L * (float(F[-1]) + float(F[0])) - float(np.trapezoid(F, edges))
    cond_mean = stieltjes / mass
    grid_mean = h * float(np.dot(np.arange(-m, m + 1, dtype=np.float64), q))
    mu_hat = min(max(cond_mean - grid_mean, 0.0), h / 2.0)

    return DiscretePRV(probs=q, mesh_h=h, offset=mu_hat, compositions=1,
                       tail_upper=1.0 - mass, acceptance=mass, source=source)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def _spectrum(prv: DiscretePRV) -> np.ndarray:
    return sp_fft.rfft(np.fft.ifftshift(prv.probs))


def _from_spectrum(spectrum: np.ndarray, size: int, mesh_h: float, offset: float,
                   compositions: int, tail_upper, acceptance, source: str) -> DiscretePRV:
    probs = np.fft.fftshift(sp_fft.irfft(spectrum, n=size))
    total = float(probs.sum())
    if abs(total - 1.0) > _MASS_DRIFT_TOL:
        raise AccountingInconsistencyError(
            f"FFT composition lost probability mass: sum = {total!r}")
    probs = np.maximum(probs, 0.0)
    return DiscretePRV(probs=probs / probs.sum(), mesh_h=mesh_h, offset=offset,
                       compositions=compositions, tail_upper=tail_upper,
                       acceptance=acceptance, source=source)


def compose(items: Sequence[tuple[DiscretePRV, int]]) -> DiscretePRV:
    """Compose grid-aligned PRVs with multiplicities via FFT powers.

    The convolution is circular modulo the window width, matching the error
    accounting; wrapped-around mass is charged to the certificate, not
    redistributed.  A single item with multiplicity 1 is returned unchanged.
    """
    entries = [(prv, int(k)) for prv, k in items]
    if not entries:
        raise ParameterError("compose needs at least one (prv, multiplicity) pair")
    for prv, k in entries:
        if k < 1:
            raise ParameterError(f"multiplicities must be >= 1, got {k}")
    first = entries[0][0]
    for prv, _ in entries[1:]:
        if prv.probs.size != first.probs.size or prv.mesh_h != first.mesh_h:
            raise GridMismatchError(
                "all PRVs must share one grid: "
                f"({first.probs.size} cells, h={first.mesh_h!r}) vs "
                f"({prv.probs.size} cells, h={prv.mesh_h!r})")
    if len(entries) == 1 and entries[0][1] == 1:
        return first

    spectrum = np.ones(first.probs.size // 2 + 1, dtype=np.complex128)
    offset = 0.0
    total_k = 0
    tails = []
    accs = []
    for prv, k in entries:
        spectrum *= _spectrum(prv) ** k
        offset += k * prv.offset
        total_k += k * prv.compositions
        if prv.tail_upper is not None:
            tails.append(prv.tail_upper)
        if prv.acceptance is not None:
            accs.append(prv.acceptance)
    label = " * ".join(f"{prv.source or 'prv'}^{k}" for prv, k in entries)
    return _from_spectrum(spectrum, first.probs.size, first.mesh_h, offset,
                          total_k, max(tails) if tails else None,
                          min(accs) if accs else None, label)


def self_compose(prv: DiscretePRV, compositions: int) -> DiscretePRV:
    """`compose` with a single repeated mechanism."""
    return compose([(prv, compositions)])


def convolve_direct(prv_a: DiscretePRV, prv_b: DiscretePRV) -> DiscretePRV:
    """Quadratic-time circular convolution; cross-check oracle for `compose`."""
    if prv_a.probs.size != prv_b.probs.size or prv_a.mesh_h != prv_b.mesh_h:
        raise GridMismatchError("operands must share one grid")
    size = prv_a.probs.size
    a = np.fft.ifftshift(prv_a.probs)
    b = np.fft.ifftshift(prv_b.probs)
    out = np.zeros(size)
    for shift in range(size):
        out += a[shift] * np.roll(b, shift)
    out = np.fft.fftshift(out)
    return DiscretePRV(probs=out / out.sum(), mesh_h=prv_a.mesh_h,
                       offset=prv_a.offset + prv_b.offset,
                       compositions=prv_a.compositions + prv_b.compositions,
                       tail_upper=None, acceptance=None, source="direct")


# ---------------------------------------------------------------------------
# Error certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorBounds:
    """(eta, tau) certificate with the resolved free parameters."""

    eta: float
    tau: float
    hoeffding_s: float
    sampling_t: float


def error_bounds(cfg: AccountantConfig, compositions: int, tail_single: float,
                 tail_sum: float) -> ErrorBounds:
    """Finite-sample certificate for ``compositions`` of one mechanism.

    ``tail_single`` bounds the per-draw probability of falling outside the
    window; ``tail_sum`` bounds the composed loss exceeding L - t.  The
    remaining terms cover binning (Hoeffding over the sub-cell jitter),
    empirical-CDF error, and the mesh itself.
    """
    k = int(compositions)
    L, h, n = cfg.trunc_L, cfg.mesh_h, cfg.samples_n
    s = cfg.resolved_s(k)
    t = cfg.resolved_t()
    root = math.sqrt(L / (n * h))

    eta = (2.0 * k * tail_single
           + 4.0 * math.exp(-2.0 * s * s / (k * h * h))
           + 4.0 * k * math.exp(-n * t * t / (2.0 * L * L))
           + 8.0 * k * math.exp(-n * t * t / 2.0)
           + tail_sum
           + 2.0 * k * (t + root))
    tau = (s
           + k * (t + 2.0 * L * (0.5 * t + root))
           + 2.0 * k * (0.5 * t + root))
    return ErrorBounds(eta=min(eta, 1.0), tau=tau, hoeffding_s=s, sampling_t=t)


# ---------------------------------------------------------------------------
# Privacy curve / account()
# ---------------------------------------------------------------------------


@dataclass
class PrivacyCurve:
    """A sampled (epsilon, delta) trade-off curve with its certificate."""

    epsilon: np.ndarray
    delta: np.ndarray
    eta: float
    tau: float
    config: dict
    mechanism: dict

    def __post_init__(self) -> None:
        eps = np.asarray(self.epsilon, dtype=np.float64)
        dlt = np.asarray(self.delta, dtype=np.float64)
        if eps.shape != dlt.shape or eps.ndim != 1 or eps.size < 2:
            raise ParameterError("epsilon and delta must be matching 1-d arrays")
        if np.any(np.diff(eps) <= 0):
            raise ParameterError("epsilon grid must be strictly increasing")
        if np.any(dlt < 0) or np.any(dlt > 1):
            raise ParameterError("delta values must lie in [0, 1]")
        if np.any(np.diff(dlt) > 1e-12):
            raise ParameterError("delta must be non-increasing along the curve")
        self.epsilon = eps
        self.delta = dlt

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps({
            "epsilon": self.epsilon.tolist(),
            "delta": self.delta.tolist(),
            "eta": self.eta,
            "tau": self.tau,
            "config": self.config,
            "mechanism": self.mechanism,
        }, indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "PrivacyCurve":
        raw = json.loads(text)
        return cls(epsilon=np.asarray(raw["epsilon"]), delta=np.asarray(raw["delta"]),
                   eta=float(raw["eta"]), tau=float(raw["tau"]),
                   config=dict(raw["config"]), mechanism=dict(raw["mechanism"]))


@dataclass
class AccountResult:
    """Everything `account` learned about one mechanism invocation pattern."""

    epsilon: float
    delta: float
    epsilon_conservative: float
    delta_conservative: float
    eta: float
    tau: float
    curve: PrivacyCurve
    config: AccountantConfig
    composed: dict[LossDirection, DiscretePRV]
    seed: int | None


def _loss_range(spec: MechanismSpec, direction: LossDirection) -> tuple[float, float]:
    """Exact range of the single-shot loss, for spotting bounded cases."""
    beta = spec.noise.beta
    edge = spec.sensitivity ** beta / spec.noise.sigma ** beta
    if beta == 1.0:
        base_lo, base_hi = -edge, edge
    else:
        base_lo, base_hi = -math.inf, math.inf
    q = spec.sample_rate
    if q is None or q == 1.0:
        return base_lo, base_hi
    # remove-direction values log(1 - q + q e^{-ell}) with ell in [lo, hi]
    lo = math.log(1.0 - q + q * math.exp(-base_hi)) if base_hi < math.inf \
        else math.log1p(-q)
    hi = math.log(1.0 - q + q * math.exp(-base_lo)) if base_lo > -math.inf \
        else math.inf
    if direction is LossDirection.ADD:
        lo, hi = -hi, -lo
    return lo, hi


def _auto_config(spec: MechanismSpec, seed: int | None,
                 gen: np.random.Generator | None,
                 samples_n: int, bins: int) -> AccountantConfig:
    """Size the window from a pilot run: L = |k mean| + 12 sqrt(k) std."""
    k = spec.compositions
    L = 0.0
    for direction in directions_for(spec):
        rng = gen if gen is not None else derive_rng(
            seed, "pilot", spec.to_dict(), direction.value)
        pilot = sample_prv(spec, direction, rng, PILOT_SAMPLES)
        L_dir = abs(k * float(np.mean(pilot))) \
            + _PILOT_SPREAD * math.sqrt(k) * float(np.std(pilot))
        L = max(L, L_dir)
    L = max(L, 1e-6)
    return AccountantConfig.from_bins(L, bins=bins, samples_n=samples_n)


def account(spec: MechanismSpec, cfg: AccountantConfig | None = None, *,
            epsilon: float | None = None, delta: float | None = None,
            rng=None, curve_points: int = 129,
            samples_n: int = DEFAULT_SAMPLES,
            bins: int = DEFAULT_BINS) -> AccountResult:
    """Account a mechanism spec end to end.

    Exactly one of ``epsilon`` / ``delta`` must be given; the other is
    computed.  With ``cfg=None`` the window is auto-sized from a pilot run
    (``samples_n`` and ``bins`` feed that construction; they are ignored when
    an explicit config is supplied).  Subsampled mechanisms are accounted in
    both adjacency directions and the worse direction is reported.
    """
    if (epsilon is None) == (delta is None):
        raise ParameterError("provide exactly one of epsilon= or delta=")
    if epsilon is not None and (not math.isfinite(epsilon) or epsilon < 0):
        raise ParameterError(f"epsilon must be finite and >= 0, got {epsilon!r}")

    gen = rng if isinstance(rng, np.random.Generator) else None
    seed = None
    if gen is None:
        _, seed = _resolve_rng(rng, "account")

    if cfg is None:
        cfg = _auto_config(spec, rng if gen is None else None, gen, samples_n, bins)

    k = spec.compositions
    t = cfg.resolved_t()
    composed: dict[LossDirection, DiscretePRV] = {}
    bounds: dict[LossDirection, ErrorBounds] = {}
    for direction in directions_for(spec):
        draw_rng = gen if gen is not None else derive_rng(
            seed, "account", spec.to_dict(), cfg.to_dict(), direction.value)
        one = discretize_from_samples(
            lambda r, c: sample_prv(spec, direction, r, c), cfg, draw_rng,
            source=f"{direction.value}:{spec.to_dict()}")
        full = self_compose(one, k)
        composed[direction] = full

        lo, hi = _loss_range(spec, direction)
        if lo >= -cfg.trunc_L and hi <= cfg.trunc_L:
            tail_single = 0.0
        else:
            tail_single = float(one.tail_upper)
        y = full.support()
        grid_tail = float(full.probs[np.abs(y) >= cfg.trunc_L - t].sum())
        tail_sum = min(1.0, grid_tail + k * tail_single)
        bounds[direction] = error_bounds(cfg, k, tail_single, tail_sum)

    eta = max(b.eta for b in bounds.values())
    tau = max(b.tau for b in bounds.values())

    if delta is not None:
        eps_est = max(prv.epsilon_at(delta) for prv in composed.values())
        delta_est = float(delta)
    else:
        eps_est = float(epsilon)
        delta_est = max(float(prv.delta_at(epsilon)) for prv in composed.values())

    eps_grid = np.linspace(0.0, cfg.trunc_L, curve_points)
    delta_grid = np.maximum.reduce([np.asarray(prv.delta_at(eps_grid))
                                    for prv in composed.values()])
    delta_grid = np.minimum.accumulate(delta_grid)  # iron out last-ulp wobble
    curve = PrivacyCurve(epsilon=eps_grid, delta=delta_grid, eta=eta, tau=tau,
                         config=cfg.to_dict(), mechanism=spec.to_dict())

    return AccountResult(
        epsilon=eps_est, delta=delta_est,
        epsilon_conservative=eps_est + tau,
        delta_conservative=min(1.0, delta_est + eta),
        eta=eta, tau=tau, curve=curve, config=cfg, composed=composed,
        seed=seed)


# ---------------------------------------------------------------------------
# Step ledger (composition counts that grow one mechanism at a time)
# ---------------------------------------------------------------------------


class CompositionLedger:
    """Cheap ``epsilon(k)`` over many composition counts of one mechanism.

    Discretizes the one-step loss once, caches its FFT spectrum, and answers
    each ``k`` with a spectrum power + inverse transform.  Built for training
    loops that need "how many more steps fit in the budget".
    """

    def __init__(self, spec: MechanismSpec, cfg: AccountantConfig | None = None,
                 rng=None, k_cap: int = 4096,
                 samples_n: int = 400_000, bins: int = 2 ** 16):
        if spec.compositions != 1:
            spec = MechanismSpec(spec.noise, spec.sensitivity, spec.sample_rate, 1)
        self.spec = spec
        self.k_cap = int(k_cap)
        gen = rng if isinstance(rng, np.random.Generator) else None
        seed = None
        if gen is None:
            _, seed = _resolve_rng(rng, "ledger")
        if cfg is None:
            probe = MechanismSpec(spec.noise, spec.sensitivity, spec.sample_rate,
                                  self.k_cap)
            cfg = _auto_config(probe, seed if gen is None else None, gen,
                               samples_n, bins)
        self.cfg = cfg
        self._singles: dict[LossDirection, DiscretePRV] = {}
        self._spectra: dict[LossDirection, np.ndarray] = {}
        for direction in directions_for(spec):
            draw_rng = gen if gen is not None else derive_rng(
                seed, "ledger", spec.to_dict(), cfg.to_dict(), direction.value)
            one = discretize_from_samples(
                lambda r, c: sample_prv(spec, direction, r, c), cfg, draw_rng,
                source=f"ledger:{direction.value}")
            self._singles[direction] = one
            self._spectra[direction] = _spectrum(one)
        self._eps_cache: dict[tuple[int, float], float] = {}

    def composed(self, k: int) -> dict[LossDirection, DiscretePRV]:
        if not 1 <= k <= self.k_cap:
            raise ParameterError(f"k must lie in [1, {self.k_cap}], got {k}")
        out = {}
        for direction, one in self._singles.items():
            out[direction] = _from_spectrum(
                self._spectra[direction] ** k, one.probs.size, one.mesh_h,
                k * one.offset, k, one.tail_upper, one.acceptance,
                f"ledger:{direction.value}^{k}")
        return out

    def epsilon_at(self, k: int, delta: float) -> float:
        key = (int(k), float(delta))
        if key not in self._eps_cache:
            self._eps_cache[key] = max(prv.epsilon_at(delta)
                                       for prv in self.composed(k).values())
        return self._eps_cache[key]

    def max_steps(self, epsilon: float, delta: float) -> int:
        """Largest k <= k_cap with epsilon(k) <= epsilon (monotone search)."""
        first = self.epsilon_at(1, delta)
        if first > epsilon:
            raise BudgetExhaustedError(
                f"a single step already costs epsilon = {first:.4f} at "
                f"delta = {delta:g}, over the budget {epsilon:g}")
        if self.epsilon_at(self.k_cap, delta) <= epsilon:
            return self.k_cap
        lo, hi = 1, self.k_cap
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.epsilon_at(mid, delta) <= epsilon:
                lo = mid
            else:
                hi = mid - 1
        return lo
