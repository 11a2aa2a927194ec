"""Accountant: grids, discretization, composition, delta/epsilon queries."""

from __future__ import annotations

import json
import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy import optimize, stats

from ggprivacy import (
    AccountantConfig,
    BudgetExhaustedError,
    CompositionLedger,
    ConfigError,
    DiscretePRV,
    GGParams,
    GridMismatchError,
    LossDirection,
    MechanismSpec,
    ParameterError,
    PrivacyCurve,
    RangeError,
    TruncationError,
    account,
    compose,
    convolve_direct,
    derive_rng,
    discretize_from_cdf,
    discretize_from_samples,
    error_bounds,
    self_compose,
)
from ggprivacy.prv import gaussian_prv_cdf, laplace_prv_cdf

GAUSS = MechanismSpec(GGParams(2.0, math.sqrt(2.0)), 1.0)   # loss ~ N(1/2, 1)


def gauss_delta(eps: float, s: float = 1.0, sens: float = 1.0) -> float:
    """Closed-form delta(eps) of the Gaussian mechanism with noise std s."""
    a = sens / (2.0 * s)
    b = eps * s / sens
    return float(stats.norm.cdf(a - b) - math.exp(eps) * stats.norm.cdf(-a - b))


def gauss_epsilon(delta: float, s: float = 1.0, sens: float = 1.0) -> float:
    return float(optimize.brentq(lambda e: gauss_delta(e, s, sens) - delta,
                                 0.0, 60.0, xtol=1e-12))


# -- seed derivation -----------------------------------------------------------

def test_derive_rng_is_deterministic_and_context_sensitive():
    a = derive_rng(11, "ctx").random(4)
    b = derive_rng(11, "ctx").random(4)
    c = derive_rng(11, "other").random(4)
    d = derive_rng(12, "ctx").random(4)
    npt.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


# -- config --------------------------------------------------------------------

def test_config_grid_alignment_enforced():
    cfg = AccountantConfig.from_bins(10.0, 2 ** 10)
    m = cfg.half_bins
    assert m == 2 ** 9
    assert (m + 0.5) * cfg.mesh_h == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ConfigError):
        AccountantConfig(trunc_L=10.0, mesh_h=0.3, samples_n=20_000)
    with pytest.raises(ConfigError):
        AccountantConfig.from_bins(10.0, 2 ** 10, samples_n=100)
    with pytest.raises(ConfigError):
        AccountantConfig.from_bins(10.0, bins=1)


def test_config_resolved_free_parameters():
    cfg = AccountantConfig.from_bins(30.0, 2 ** 15, samples_n=10 ** 6)
    assert cfg.resolved_s(4) == pytest.approx(10.0 * cfg.mesh_h * 2.0, rel=1e-15)
    assert cfg.resolved_t() == pytest.approx(0.3, rel=1e-15)
    explicit = AccountantConfig.from_bins(30.0, 2 ** 15, samples_n=10 ** 6,
                                          hoeffding_s=0.1, sampling_t=0.2)
    assert explicit.resolved_s(4) == 0.1 and explicit.resolved_t() == 0.2


# -- DiscretePRV ---------------------------------------------------------------

def hand_prv(probs, mesh_h=1.0, offset=0.0) -> DiscretePRV:
    return DiscretePRV(probs=np.asarray(probs, dtype=np.float64),
                       mesh_h=mesh_h, offset=offset, source="hand")


@pytest.mark.parametrize("bad", [
    dict(probs=[0.5, 0.5]),                      # even length
    dict(probs=[0.2, 0.2, 0.2]),                 # mass 0.6
    dict(probs=[0.5, 0.6, -0.1]),                # negative
    dict(probs=[0.2, 0.5, 0.3], mesh_h=0.0),
    dict(probs=[0.2, 0.5, 0.3], offset=-0.1),
])
def test_prv_validation(bad):
    kwargs = dict(probs=None, mesh_h=1.0, offset=0.0)
    kwargs.update(bad)
    kwargs["probs"] = np.asarray(kwargs["probs"], dtype=np.float64)
    with pytest.raises(ParameterError):
        DiscretePRV(**kwargs)


def test_prv_probs_are_read_only():
    prv = hand_prv([0.2, 0.5, 0.3])
    with pytest.raises(ValueError):
        prv.probs[0] = 1.0


def test_delta_at_hand_grid():
    # Support [-1, 0, 1] with masses [0.2, 0.5, 0.3]: only y = 1 is above
    # any eps >= 0, so delta(eps) = 0.3 * (1 - e^{eps - 1}) until it hits 0.
    prv = hand_prv([0.2, 0.5, 0.3])
    for eps in (0.0, 0.25, 0.5, 0.99):
        expected = 0.3 * (1.0 - math.exp(eps - 1.0))
        assert prv.delta_at(eps) == pytest.approx(expected, rel=1e-12)
    assert prv.delta_at(1.0) == 0.0
    assert prv.delta_at(5.0) == 0.0
    with pytest.raises(ParameterError):
        prv.delta_at(-0.1)


def test_delta_at_respects_offset():
    prv = hand_prv([0.2, 0.5, 0.3], offset=0.25)
    # Support [-0.75, 0.25, 1.25].
    expected = 0.5 * (1.0 - math.exp(-0.25)) + 0.3 * (1.0 - math.exp(-1.25))
    assert prv.delta_at(0.0) == pytest.approx(expected, rel=1e-12)


def test_delta_at_on_wide_supports_and_large_epsilon():
    # Support [-800, -400, 0, 400, 800]: exp(-y) underflows at y = 800 and
    # exp(eps) overflows past eps ~ 709, so both query paths must run in
    # log space.  Make numpy raise instead of warn to catch regressions.
    prv = hand_prv([0.1, 0.2, 0.4, 0.2, 0.1], mesh_h=400.0)
    with np.errstate(over="raise", invalid="raise"):
        assert prv.delta_at(0.0) == pytest.approx(0.3, rel=1e-12)
        expected = 0.1 * (1.0 - math.exp(-50.0))
        assert prv.delta_at(750.0) == pytest.approx(expected, rel=1e-12)
        assert prv.delta_at(10_000.0) == 0.0
        # delta(eps) = 0.1 (1 - e^{eps-800}) on (400, 800), so delta = 0.05
        # lands at eps = 800 - ln 2, beyond the naive exp(eps) range.
        assert prv.epsilon_at(0.05) == pytest.approx(800.0 - math.log(2.0),
                                                     abs=1e-9)


def test_epsilon_at_inverts_delta_at():
    prv = hand_prv([0.2, 0.5, 0.3])
    target = 0.3 * (1.0 - math.exp(-0.5))   # = delta(0.5)
    assert prv.epsilon_at(target) == pytest.approx(0.5, abs=1e-9)
    assert prv.epsilon_at(0.25) == 0.0       # already above delta(0)
    eps = prv.epsilon_at(1e-12)
    assert prv.delta_at(eps) <= 1e-12
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(RangeError):
            prv.epsilon_at(bad)


# -- discretization ------------------------------------------------------------

def test_discretize_from_samples_normal_oracle():
    cfg = AccountantConfig.from_bins(12.0, 2 ** 12, samples_n=20_000)
    prv = discretize_from_samples(lambda r, c: r.normal(0.5, 1.0, c), cfg,
                                  derive_rng(1, "disc"), source="normal")
    assert prv.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= prv.offset <= cfg.mesh_h / 2.0
    assert prv.acceptance == 1.0
    assert prv.tail_upper is not None and prv.tail_upper < 1e-3
    mean = float(prv.support() @ prv.probs)
    assert mean == pytest.approx(0.5, abs=0.05)
    assert prv.delta_at(1.0) == pytest.approx(gauss_delta(1.0), abs=0.02)


def test_discretize_from_samples_is_deterministic():
    cfg = AccountantConfig.from_bins(8.0, 2 ** 10, samples_n=15_000)
    a = discretize_from_samples(lambda r, c: r.normal(0.5, 1.0, c), cfg,
                                derive_rng(2, "disc"), source="normal")
    b = discretize_from_samples(lambda r, c: r.normal(0.5, 1.0, c), cfg,
                                derive_rng(2, "disc"), source="normal")
    npt.assert_array_equal(a.probs, b.probs)
    assert a.offset == b.offset


def test_discretize_rejects_hopeless_truncation():
    cfg = AccountantConfig.from_bins(0.05, 2 ** 3, samples_n=20_000)
    with pytest.raises(TruncationError):
        discretize_from_samples(lambda r, c: r.normal(0.5, 1.0, c), cfg,
                                derive_rng(3, "disc"), source="normal")


def test_discretize_from_cdf_gaussian():
    cfg = AccountantConfig.from_bins(12.0, 2 ** 14, samples_n=20_000)
    prv = discretize_from_cdf(lambda x: gaussian_prv_cdf(x, 1.0, 1.0), cfg,
                              source="gauss-cdf")
    assert prv.probs.sum() == pytest.approx(1.0, abs=1e-9)
    for eps in (0.5, 1.0, 2.0):
        assert prv.delta_at(eps) == pytest.approx(gauss_delta(eps), abs=1e-3)
    mean = float(prv.support() @ prv.probs)
    assert mean == pytest.approx(0.5, abs=1e-3)


def test_discretize_from_cdf_laplace_atoms():
    cfg = AccountantConfig.from_bins(2.0, 2 ** 12, samples_n=20_000)
    prv = discretize_from_cdf(lambda x: laplace_prv_cdf(x, 1.0, 1.0), cfg,
                              source="lap-cdf")
    y = prv.support()
    # The endpoint atoms land in single cells.
    assert prv.probs[np.abs(y - 1.0) <= cfg.mesh_h].sum() > 0.45
    assert prv.probs[np.abs(y + 1.0) <= cfg.mesh_h].sum() > 0.9 * 0.5 * math.exp(-1.0)
    # Pure DP: nothing above the loss range.
    assert prv.delta_at(1.0 + 2.0 * cfg.mesh_h) == 0.0
    assert prv.delta_at(0.0) == pytest.approx(1.0 - math.exp(-0.5), abs=5e-3)


# -- composition ---------------------------------------------------------------

def test_compose_single_identity():
    prv = hand_prv([0.2, 0.5, 0.3])
    assert compose([(prv, 1)]) is prv


def test_compose_point_masses_and_offsets():
    size = 5
    a = np.zeros(size)
    a[3] = 1.0       # support index +1
    prv = DiscretePRV(probs=a, mesh_h=1.0, offset=0.25, source="pt")
    two = self_compose(prv, 2)
    expected = np.zeros(size)
    expected[4] = 1.0  # +1 twice = +2
    npt.assert_allclose(two.probs, expected, atol=1e-12)
    assert two.offset == pytest.approx(0.5, rel=1e-12)
    assert two.compositions == 2


def test_compose_wraps_circularly():
    size = 5
    a = np.zeros(size)
    a[4] = 1.0       # support index +2 on a grid of halfwidth 2
    prv = DiscretePRV(probs=a, mesh_h=1.0, source="pt")
    two = self_compose(prv, 2)
    # +2 + 2 = +4 = -1 (mod 5 cells): wraparound is charged to the
    # certificate, never redistributed.
    expected = np.zeros(size)
    expected[1] = 1.0
    npt.assert_allclose(two.probs, expected, atol=1e-12)


def test_compose_grid_mismatch():
    a = hand_prv([0.2, 0.5, 0.3], mesh_h=1.0)
    b = hand_prv([0.2, 0.5, 0.3], mesh_h=0.5)
    c = hand_prv([0.1, 0.2, 0.4, 0.2, 0.1], mesh_h=1.0)
    with pytest.raises(GridMismatchError):
        compose([(a, 1), (b, 1)])
    with pytest.raises(GridMismatchError):
        compose([(a, 1), (c, 1)])
    with pytest.raises(ParameterError):
        compose([])
    with pytest.raises(ParameterError):
        compose([(a, 0)])


def test_compose_matches_direct_convolution(rng):
    m = 16
    size = 2 * m + 1
    pa = rng.random(size); pa /= pa.sum()
    pb = rng.random(size); pb /= pb.sum()
    a = DiscretePRV(probs=pa, mesh_h=0.25, source="a")
    b = DiscretePRV(probs=pb, mesh_h=0.25, source="b")
    fft = compose([(a, 2), (b, 1)])
    direct = convolve_direct(convolve_direct(a, a), b)
    tv = 0.5 * np.abs(fft.probs - direct.probs).sum()
    assert tv < 1e-12
    assert fft.offset == pytest.approx(direct.offset, rel=1e-12)


# -- certificate ---------------------------------------------------------------

def test_error_bounds_basic_shape():
    cfg = AccountantConfig.from_bins(30.0, 2 ** 15, samples_n=10 ** 6)
    small = error_bounds(cfg, 1, 0.0, 1e-6)
    assert 0.0 < small.eta <= 1.0 and small.tau > 0.0
    assert small.hoeffding_s == cfg.resolved_s(1)
    assert small.sampling_t == cfg.resolved_t()
    # More tail mass can only worsen the certificate.
    worse = error_bounds(cfg, 1, 1e-3, 1e-2)
    assert worse.eta >= small.eta


# -- privacy curve -------------------------------------------------------------

def test_privacy_curve_json_round_trip():
    curve = PrivacyCurve(epsilon=np.asarray([0.0, 1.0, 2.0]),
                         delta=np.asarray([0.5, 0.2, 0.1]),
                         eta=0.01, tau=0.5, config={"trunc_L": 2.0},
                         mechanism={"beta": 2.0})
    raw = json.loads(curve.to_json())
    assert set(raw) == {"epsilon", "delta", "eta", "tau", "config", "mechanism"}
    back = PrivacyCurve.from_json(curve.to_json())
    npt.assert_array_equal(back.epsilon, curve.epsilon)
    npt.assert_array_equal(back.delta, curve.delta)
    assert back.eta == curve.eta and back.tau == curve.tau


def test_privacy_curve_validation():
    with pytest.raises(ParameterError):
        PrivacyCurve(epsilon=np.asarray([0.0, 0.0, 1.0]),
                     delta=np.asarray([0.5, 0.2, 0.1]),
                     eta=0.0, tau=0.0, config={}, mechanism={})
    with pytest.raises(ParameterError):
        PrivacyCurve(epsilon=np.asarray([0.0, 1.0]),
                     delta=np.asarray([1.5, 0.2]),
                     eta=0.0, tau=0.0, config={}, mechanism={})


# -- account() -----------------------------------------------------------------

def test_account_requires_exactly_one_target():
    with pytest.raises(ParameterError):
        account(GAUSS)
    with pytest.raises(ParameterError):
        account(GAUSS, epsilon=1.0, delta=1e-5)
    with pytest.raises(ParameterError):
        account(GAUSS, epsilon=-1.0)


def test_account_gaussian_close_to_analytic():
    result = account(GAUSS, delta=1e-5, samples_n=100_000, bins=2 ** 15)
    assert result.epsilon == pytest.approx(gauss_epsilon(1e-5), abs=0.12)
    assert result.delta == 1e-5
    assert result.epsilon_conservative == result.epsilon + result.tau
    assert result.delta_conservative <= 1.0
    assert 0.0 < result.eta <= 1.0
    # The reported curve is a valid non-increasing trade-off.
    assert np.all(np.diff(result.curve.delta) <= 0.0)


def test_account_is_deterministic_by_content():
    a = account(GAUSS, delta=1e-5, samples_n=30_000, bins=2 ** 12)
    b = account(GAUSS, delta=1e-5, samples_n=30_000, bins=2 ** 12)
    assert a.epsilon == b.epsilon
    npt.assert_array_equal(a.curve.delta, b.curve.delta)


def test_account_epsilon_target_mode():
    eps_star = gauss_epsilon(1e-5)
    result = account(GAUSS, epsilon=eps_star, samples_n=100_000, bins=2 ** 15)
    assert result.epsilon == eps_star
    assert result.delta == pytest.approx(1e-5, abs=3e-5)


def test_account_subsampled_uses_both_directions():
    spec = MechanismSpec(GGParams(2.0, math.sqrt(2.0)), 1.0, 0.2)
    result = account(spec, delta=1e-5, samples_n=30_000, bins=2 ** 12)
    assert set(result.composed) == {LossDirection.REMOVE, LossDirection.ADD}
    assert result.epsilon == max(prv.epsilon_at(1e-5)
                                 for prv in result.composed.values())


# -- ledger ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def ledger():
    spec = MechanismSpec(GGParams(2.0, 3.0 * math.sqrt(2.0)), 1.0)
    return CompositionLedger(spec, k_cap=32, samples_n=30_000, bins=2 ** 12)


def test_ledger_epsilon_grows_with_steps(ledger):
    eps = [ledger.epsilon_at(k, 1e-5) for k in (1, 2, 4, 8, 16)]
    assert all(b > a for a, b in zip(eps, eps[1:]))


def test_ledger_max_steps_brackets_target(ledger):
    target = ledger.epsilon_at(8, 1e-5)
    assert ledger.max_steps(target, 1e-5) == 8
    assert ledger.max_steps(10 ** 6, 1e-5) == ledger.k_cap
    with pytest.raises(ParameterError):
        ledger.epsilon_at(33, 1e-5)


def test_ledger_budget_exhausted():
    spec = MechanismSpec(GGParams(2.0, 0.5), 1.0)
    tiny = CompositionLedger(spec, k_cap=4, samples_n=30_000, bins=2 ** 12)
    with pytest.raises(BudgetExhaustedError, match="single step"):
        tiny.max_steps(0.5, 1e-5)
