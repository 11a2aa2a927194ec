"""Calibration: noise scales for privacy targets, families, tail weights.

`solve_sigma` inverts the accountant in sigma by bracketed bisection.  The
accountant's epsilon(sigma) is monotone non-increasing up to Monte-Carlo
jitter; because probes are deterministic functions of (mechanism, config,
seed), a given solve is exactly reproducible.  Observed non-monotonicity
beyond half the solve tolerance aborts with
`AccountingInconsistencyError` rather than returning a sigma the evidence
does not support.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from . import ggdist
from .accountant import AccountantConfig, account
from .errors import AccountingInconsistencyError, ParameterError, SolverError
from .ggdist import GGParams
from .prv import MechanismSpec

DEFAULT_TOLERANCE = 0.05
_MAX_BRACKET_STEPS = 200
_MAX_BISECT_STEPS = 200


@dataclass(frozen=True)
class PrivacyTarget:
    """An (epsilon, delta) goal for a mechanism usage pattern."""

    epsilon: float
    delta: float
    compositions: int = 1
    sample_rate: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ParameterError(f"epsilon must be positive, got {self.epsilon!r}")
        if not (0.0 < self.delta < 1.0):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.compositions < 1:
            raise ParameterError("compositions must be >= 1")
        if self.sample_rate is not None and not 0.0 < self.sample_rate <= 1.0:
            raise ParameterError(
                f"sample_rate must lie in (0, 1], got {self.sample_rate!r}")


@dataclass
class SolveResult:
    sigma: float
    bracket: tuple[float, float]
    epsilon: float
    probes: int
    evaluations: list[tuple[float, float]]


# Probes closer than this ratio are not compared for monotonicity: their
# true epsilon gap is inside the accountant's Monte-Carlo jitter and any
# apparent reversal is uninformative.
_MONOTONE_MIN_RATIO = 1.05


def _check_monotone(evals: dict[float, float], slack: float) -> None:
    pairs = sorted(evals.items())
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            lo_sigma, lo_eps = pairs[i]
            hi_sigma, hi_eps = pairs[j]
            if hi_sigma < lo_sigma * _MONOTONE_MIN_RATIO:
                continue
            if hi_eps > lo_eps + slack:
                raise AccountingInconsistencyError(
                    "epsilon(sigma) rose with sigma beyond tolerance: "
                    f"eps({lo_sigma:.6g}) = {lo_eps:.6g} but "
                    f"eps({hi_sigma:.6g}) = {hi_eps:.6g} (slack {slack:g})")


def solve_sigma(beta: float, target: PrivacyTarget,
                cfg: AccountantConfig | None = None, rng=None, *,
                tolerance: float = DEFAULT_TOLERANCE,
                sensitivity: float = 1.0,
                samples_n: int | None = None,
                bins: int | None = None) -> SolveResult:
    """Smallest noise scale meeting ``target``, to within ``tolerance`` in
    epsilon.

    Doubles/halves an initial bracket around sigma = 1 until
    ``eps(sigma_min) > target.epsilon > eps(sigma_max)``, then bisects,
    keeping that invariant, until the kept (sigma_max) side is within
    ``tolerance / 2`` of the target.  Each probe re-runs the accountant with
    a seed derived from its own sigma, so the returned sigma re-accounts to
    exactly the epsilon reported here.
    """
    if not (math.isfinite(tolerance) and tolerance > 0):
        raise ParameterError(f"tolerance must be positive, got {tolerance!r}")
    extra = {}
    if samples_n is not None:
        extra["samples_n"] = samples_n
    if bins is not None:
        extra["bins"] = bins

    evals: dict[float, float] = {}

    def probe(sigma: float) -> float:
        if sigma not in evals:
            spec = MechanismSpec(GGParams(beta, sigma), sensitivity,
                                 target.sample_rate, target.compositions)
            result = account(spec, cfg, delta=target.delta, rng=rng, **extra)
            evals[sigma] = result.epsilon
            _check_monotone(evals, 0.5 * tolerance)
        return evals[sigma]

    sigma_min = sigma_max = 1.0
    for _ in range(_MAX_BRACKET_STEPS):
        if probe(sigma_min) > target.epsilon:
            break
        sigma_min /= 2.0
    else:
        raise SolverError(
            f"no sigma in [{sigma_min:g}, 1] pushes epsilon above "
            f"{target.epsilon:g}; target may be out of range")
    for _ in range(_MAX_BRACKET_STEPS):
        if probe(sigma_max) < target.epsilon:
            break
        sigma_max *= 2.0
    else:
        raise SolverError(
            f"no sigma in [1, {sigma_max:g}] brings epsilon below "
            f"{target.epsilon:g}; target may be out of range")

    for _ in range(_MAX_BISECT_STEPS):
        if abs(evals[sigma_max] - target.epsilon) <= 0.5 * tolerance:
            break
        mid = 0.5 * (sigma_min + sigma_max)
        if mid in (sigma_min, sigma_max):  # bracket exhausted float resolution
            break
        if probe(mid) > target.epsilon:
            sigma_min = mid
        else:
            sigma_max = mid
    if abs(evals[sigma_max] - target.epsilon) > 0.5 * tolerance:
        raise SolverError(
            f"bisection did not land within {0.5 * tolerance:g} of "
            f"epsilon = {target.epsilon:g} after {_MAX_BISECT_STEPS} probes; "
            f"closest was {evals[sigma_max]:.6g} at sigma = {sigma_max:.6g}")

    return SolveResult(sigma=sigma_max, bracket=(sigma_min, sigma_max),
                       epsilon=evals[sigma_max], probes=len(evals),
                       evaluations=sorted(evals.items()))


@dataclass
class FamilyPoint:
    beta: float
    sigma: float
    epsilon: float


@dataclass
class FamilyResult:
    """Noise scales giving one (epsilon, delta) guarantee across shapes."""

    points: list[FamilyPoint]
    target: PrivacyTarget
    sigma_monotone: bool  # reported, not asserted: sigma rising with beta


def equivalent_family(betas, target: PrivacyTarget,
                      cfg: AccountantConfig | None = None, rng=None, *,
                      tolerance: float = DEFAULT_TOLERANCE,
                      samples_n: int | None = None,
                      bins: int | None = None) -> FamilyResult:
    """Solve sigma for every shape in ``betas`` at one shared target."""
    beta_list = [float(b) for b in np.atleast_1d(np.asarray(betas, dtype=np.float64))]
    if not beta_list:
        raise ParameterError("betas must be non-empty")
    points = []
    for beta in sorted(beta_list):
        solved = solve_sigma(beta, target, cfg, rng, tolerance=tolerance,
                             samples_n=samples_n, bins=bins)
        points.append(FamilyPoint(beta=beta, sigma=solved.sigma,
                                  epsilon=solved.epsilon))
    sigmas = [p.sigma for p in points]
    monotone = bool(np.all(np.diff(sigmas) > 0)) if len(sigmas) > 1 else True
    return FamilyResult(points=points, target=target, sigma_monotone=monotone)


@dataclass
class TailWeightPoint:
    beta: float
    tau: float
    weight: float
    sigma: float
    weight_smoothed: float | None = None


@dataclass
class TailWeightResult:
    points: list[TailWeightPoint]
    family: FamilyResult


def tail_weight(betas, target: PrivacyTarget, cutoffs,
                cfg: AccountantConfig | None = None, rng=None, *,
                family: FamilyResult | None = None, smooth: bool = False,
                tolerance: float = DEFAULT_TOLERANCE,
                samples_n: int | None = None,
                bins: int | None = None) -> TailWeightResult:
    """Two-sided tail mass w = 2 (1 - F(tau)) of each equivalent-privacy
    noise at each cutoff.

    For beta = 2 this reduces to erfc(tau / sigma).  With ``smooth=True`` a
    Savitzky-Golay pass (order 2, window 5) over the beta axis is attached
    per cutoff; raw weights are always reported.
    """
    cutoff_list = [float(c) for c in np.atleast_1d(np.asarray(cutoffs, dtype=np.float64))]
    if not cutoff_list or any(c <= 0 or not math.isfinite(c) for c in cutoff_list):
        raise ParameterError("cutoffs must be positive and finite")
    if family is None:
        family = equivalent_family(betas, target, cfg, rng, tolerance=tolerance,
                                   samples_n=samples_n, bins=bins)
    points: list[TailWeightPoint] = []
    for tau in cutoff_list:
        raw = []
        for fp in family.points:
            w = 2.0 * (1.0 - ggdist.cdf(GGParams(fp.beta, fp.sigma), tau))
            raw.append(TailWeightPoint(beta=fp.beta, tau=tau, weight=float(w),
                                       sigma=fp.sigma))
        if smooth and len(raw) >= 5:
            smoothed = savgol_filter([p.weight for p in raw], 5, 2)
            for p, s in zip(raw, smoothed):
                p.weight_smoothed = float(s)
        points.extend(raw)
    return TailWeightResult(points=points, family=family)


# ---------------------------------------------------------------------------
# CSV formats (owned here)
# ---------------------------------------------------------------------------


def family_to_csv(result: FamilyResult) -> str:
    """Two columns, header ``beta,sigma``."""
    buf = io.StringIO()
    buf.write("beta,sigma\n")
    for p in result.points:
        buf.write(f"{p.beta:.12g},{p.sigma:.12g}\n")
    return buf.getvalue()


def family_from_csv(text: str) -> list[FamilyPoint]:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "beta,sigma":
        raise ParameterError("family CSV must start with header 'beta,sigma'")
    points = []
    for idx, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise ParameterError(f"family CSV row {idx}: expected 2 columns")
        points.append(FamilyPoint(beta=float(parts[0]), sigma=float(parts[1]),
                                  epsilon=math.nan))
    return points


def tail_weights_to_csv(result: TailWeightResult) -> str:
    """Header ``beta,tau,weight`` (plus ``weight_smoothed`` when present)."""
    buf = io.StringIO()
    smoothed = any(p.weight_smoothed is not None for p in result.points)
    buf.write("beta,tau,weight,weight_smoothed\n" if smoothed
              else "beta,tau,weight\n")
    for p in result.points:
        row = f"{p.beta:.12g},{p.tau:.12g},{p.weight:.12g}"
        if smoothed:
            extra = "" if p.weight_smoothed is None else f"{p.weight_smoothed:.12g}"
            row += f",{extra}"
        buf.write(row + "\n")
    return buf.getvalue()
