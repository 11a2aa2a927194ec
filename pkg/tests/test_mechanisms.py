"""Noise mechanisms, private argmax, clipping, models, noisy SGD."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from ggprivacy import (
    GGParams,
    IngestionError,
    InputError,
    ParameterError,
    ggdist,
)
from ggprivacy.accountant import CompositionLedger
from ggprivacy.mechanisms import (
    LogisticModel,
    MLPModel,
    TrainConfig,
    clip_rows,
    gg_mechanism,
    ggnmax,
    lbeta_clip,
    load_dataset_csv,
    make_blobs,
    sgg_mechanism,
    train_noisy_sgd,
)
from ggprivacy.prv import MechanismSpec


# -- plain noise addition --------------------------------------------------------

@pytest.mark.parametrize("sensitivity", [0.0, -1.0, math.inf, math.nan])
def test_gg_mechanism_sensitivity_validation(sensitivity, rng):
    with pytest.raises(ParameterError):
        gg_mechanism([1.0], sensitivity, GGParams(2.0, 1.0), rng)


def test_gg_mechanism_rejects_non_finite_values(rng):
    with pytest.raises(InputError):
        gg_mechanism([1.0, math.inf], 1.0, GGParams(2.0, 1.0), rng)


def test_gg_mechanism_shapes_and_determinism():
    noise = GGParams(1.5, 0.7)
    out1 = gg_mechanism([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], 2.0, noise,
                        np.random.default_rng(11))
    out2 = gg_mechanism([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], 2.0, noise,
                        np.random.default_rng(11))
    assert out1.shape == (2, 3)
    assert np.array_equal(out1, out2)
    scalar = gg_mechanism(5.0, 1.0, noise, np.random.default_rng(0))
    assert scalar.shape == (1,)


def test_gg_mechanism_noise_law(rng):
    # Residuals must follow GG(beta, sigma * sensitivity).
    value = np.full(50_000, 3.25)
    out = gg_mechanism(value, 2.0, GGParams(2.0, 1.5), rng)
    residual = out - value
    result = stats.kstest(residual,
                          lambda x: ggdist.cdf(GGParams(2.0, 3.0), x))
    assert result.pvalue > 1e-3


# -- subsampled variant ----------------------------------------------------------

def test_sgg_mechanism_rate_validation(rng):
    with pytest.raises(ParameterError):
        sgg_mechanism([1.0], lambda s: [0.0], 1.0, GGParams(2.0, 1.0), 0.0, rng)
    with pytest.raises(ParameterError):
        sgg_mechanism([1.0], lambda s: [0.0], 1.0, GGParams(2.0, 1.0), 1.5, rng)


def test_sgg_mechanism_full_rate_matches_plain():
    records = np.arange(10.0)
    query = lambda s: np.atleast_1d(np.sum(s))
    noise = GGParams(2.0, 1.0)
    out = sgg_mechanism(records, query, 1.0, noise, 1.0,
                        np.random.default_rng(3))
    plain = gg_mechanism(query(records), 1.0, noise, np.random.default_rng(3))
    assert np.array_equal(out, plain)


def test_sgg_mechanism_subsamples_then_adds_noise():
    records = np.ones(200)
    noise = GGParams(2.0, 1.0)
    out = sgg_mechanism(records, lambda s: np.atleast_1d(np.sum(s)), 1.0,
                        noise, 0.3, np.random.default_rng(42))
    # Replicate the documented draw order: one uniform block for inclusion,
    # then the noise block.
    ref = np.random.default_rng(42)
    kept = float(np.sum(ref.random(200) < 0.3))
    expected = kept + ggdist.sample(noise, ref, 1)
    assert np.array_equal(out, expected)
    # List inputs go through the same path.
    as_list = sgg_mechanism(list(records), lambda s: np.atleast_1d(sum(s)),
                            1.0, noise, 0.3, np.random.default_rng(42))
    assert np.array_equal(as_list, out)


def test_sgg_mechanism_empty_subset(rng):
    out = sgg_mechanism(np.ones(5), lambda s: np.atleast_1d(np.sum(s)), 1.0,
                        GGParams(2.0, 1.0), 1e-12, rng)
    assert np.all(np.isfinite(out))


# -- private argmax --------------------------------------------------------------

def test_ggnmax_validation(rng):
    with pytest.raises(ParameterError):
        ggnmax([5.0], GGParams(2.0, 1.0), rng)
    with pytest.raises(ParameterError):
        ggnmax([[1.0, 2.0], [3.0, 4.0]], GGParams(2.0, 1.0), rng)
    with pytest.raises(InputError):
        ggnmax([1.0, math.nan], GGParams(2.0, 1.0), rng)


def test_ggnmax_returns_dominant_index():
    counts = [0.0, 1000.0, 0.0, 0.0]
    for seed in range(20):
        winner = ggnmax(counts, GGParams(2.0, 1.0), np.random.default_rng(seed))
        assert isinstance(winner, int)
        assert winner == 1


def test_ggnmax_tie_is_a_fair_coin(rng):
    picks = [ggnmax([0.0, 0.0], GGParams(1.0, 1.0), rng) for _ in range(2000)]
    assert 0.45 < np.mean(picks) < 0.55


# -- clipping ---------------------------------------------------------------------

def test_lbeta_clip_validation(rng):
    with pytest.raises(ParameterError):
        lbeta_clip([1.0], 2.0, 0.0)
    with pytest.raises(ParameterError):
        lbeta_clip([1.0], 0.5, 1.0)
    with pytest.raises(InputError):
        lbeta_clip([math.inf], 2.0, 1.0)
    with pytest.raises(ParameterError):
        clip_rows(np.ones(4), 2.0, 1.0)


@pytest.mark.parametrize("beta", [1.0, 1.7, 2.0, 6.0])
def test_lbeta_clip_norm_bound(beta, rng):
    vec = rng.normal(0.0, 5.0, size=12)
    clipped = lbeta_clip(vec, beta, 1.0)
    norm = float(np.sum(np.abs(clipped) ** beta) ** (1.0 / beta))
    assert norm <= 1.0 + 1e-9
    # Direction is preserved.
    assert np.allclose(clipped / np.linalg.norm(clipped),
                       vec / np.linalg.norm(vec))


def test_lbeta_clip_short_vector_untouched():
    vec = np.array([0.1, -0.2, 0.05])
    assert np.array_equal(lbeta_clip(vec, 2.0, 1.0), vec)


def test_clip_rows_matches_per_row(rng):
    mat = rng.normal(0.0, 3.0, size=(8, 5))
    out = clip_rows(mat, 1.5, 0.8)
    for i in range(8):
        assert np.allclose(out[i], lbeta_clip(mat[i], 1.5, 0.8),
                           rtol=1e-12, atol=0.0)


# -- models ------------------------------------------------------------------------

def _cross_entropy(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Stable per-example binary cross-entropy on logits.
    return np.logaddexp(0.0, z) - y * z


def _fd_check(model, params, X, y, eps=1e-6):
    grads = model.per_example_grads(params, X, y)
    assert grads.shape == (X.shape[0], model.num_params)
    for j in range(model.num_params):
        bump = np.zeros_like(params)
        bump[j] = eps
        if isinstance(model, LogisticModel):
            z_hi = X @ (params + bump)[:-1] + (params + bump)[-1]
            z_lo = X @ (params - bump)[:-1] + (params - bump)[-1]
        else:
            _, z_hi = model._forward(params + bump, X)
            _, z_lo = model._forward(params - bump, X)
        numeric = (_cross_entropy(z_hi, y) - _cross_entropy(z_lo, y)) / (2 * eps)
        assert np.allclose(grads[:, j], numeric, rtol=1e-5, atol=1e-7)


def test_logistic_grads_match_finite_differences(rng):
    model = LogisticModel(dim=3)
    assert model.num_params == 4
    X = rng.normal(size=(6, 3))
    y = rng.integers(0, 2, size=6).astype(np.float64)
    params = rng.normal(size=model.num_params)
    _fd_check(model, params, X, y)


def test_mlp_grads_match_finite_differences(rng):
    model = MLPModel(dim=2, width=3)
    assert model.num_params == 2 * 3 + 3 + 3 + 1
    X = rng.normal(size=(5, 2))
    y = rng.integers(0, 2, size=5).astype(np.float64)
    params = model.init_params(rng) + rng.normal(0.0, 0.3, model.num_params)
    _fd_check(model, params, X, y)


def test_logistic_plain_gd_separates_blobs(rng):
    X, y = make_blobs(400, 4, 4.0, rng)
    model = LogisticModel(dim=4)
    params = model.init_params(rng)
    for _ in range(100):
        params = params - 0.5 * model.per_example_grads(params, X, y).mean(axis=0)
    assert np.mean(model.predict(params, X) == y) >= 0.95


# -- data helpers --------------------------------------------------------------------

def test_make_blobs_geometry(rng):
    X, y = make_blobs(2000, 6, 3.0, rng)
    assert X.shape == (2000, 6) and y.shape == (2000,)
    assert y.dtype == np.int64 and set(np.unique(y)) == {0, 1}
    proj = X @ (np.ones(6) / math.sqrt(6))
    gap = proj[y == 1].mean() - proj[y == 0].mean()
    assert gap == pytest.approx(3.0, abs=0.3)
    with pytest.raises(ParameterError):
        make_blobs(1, 3, 1.0, rng)


def test_load_dataset_csv_happy_path(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x1,x2,label\n1.0,2.0,0\n\n-3.5,4.25,1\n")
    X, y = load_dataset_csv(path)
    assert np.array_equal(X, [[1.0, 2.0], [-3.5, 4.25]])
    assert np.array_equal(y, [0, 1]) and y.dtype == np.int64


@pytest.mark.parametrize("body,row", [
    ("1.0,2.0,0\n3.0,oops,1\n", "row 2"),
    ("1.0,2.0,0\n3.0,4.0\n", "row 2"),
    ("1.0,2.0,0.5\n", "row 1"),
    ("", "row 1"),
    ("x1,x2,label\n", "row 1"),
])
def test_load_dataset_csv_names_offending_row(tmp_path, body, row):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(IngestionError, match=row):
        load_dataset_csv(path)


# -- noisy SGD ---------------------------------------------------------------------

def small_problem(rng, n=120, dim=3):
    X, y = make_blobs(n, dim, 3.0, rng)
    return LogisticModel(dim=dim), (X, y)


def test_train_validates_batch_size(rng):
    model, data = small_problem(rng)
    with pytest.raises(ParameterError):
        train_noisy_sgd(model, data, TrainConfig(batch_size=500), rng)
    with pytest.raises(ParameterError):
        train_noisy_sgd(model, (data[0][:0], data[1][:0]),
                        TrainConfig(batch_size=1), rng)


def test_train_runs_to_plan_without_target(rng):
    model, data = small_problem(rng)
    cfg = TrainConfig(batch_size=30, epochs=2)
    result = train_noisy_sgd(model, data, cfg, np.random.default_rng(5),
                             test_data=data)
    assert result.steps == 2 * 4 and result.halted is False
    assert result.epsilon is None and result.delta is None
    assert len(result.history) == 2
    for rec in result.history:
        assert set(rec) == {"epoch", "epsilon", "delta", "train_acc", "test_acc"}
        assert rec["epsilon"] is None
        assert 0.0 <= rec["train_acc"] <= 1.0
        assert rec["test_acc"] == rec["train_acc"]  # same data passed twice
    again = train_noisy_sgd(model, data, cfg, np.random.default_rng(5),
                            test_data=data)
    assert np.array_equal(result.params, again.params)


def test_train_halts_at_budget(rng):
    model, data = small_problem(rng)
    cfg = TrainConfig(batch_size=30, epochs=4,
                      noise=GGParams(2.0, 3 * math.sqrt(2.0)),
                      target_epsilon=1.0, target_delta=1e-5)
    planned = 4 * 4
    spec = MechanismSpec(cfg.noise, cfg.clip_norm, 30 / 120, 1)
    ledger = CompositionLedger(spec, k_cap=planned, samples_n=30_000,
                               bins=2 ** 12)
    budget = ledger.max_steps(cfg.target_epsilon, cfg.target_delta)
    assert budget < planned  # otherwise this test would not exercise the halt
    result = train_noisy_sgd(model, data, cfg, np.random.default_rng(9),
                             ledger=ledger)
    assert result.steps == budget
    assert result.halted is True
    assert result.epsilon == ledger.epsilon_at(budget, cfg.target_delta)
    assert result.epsilon <= cfg.target_epsilon


def test_train_survives_empty_batches(rng):
    model, data = small_problem(rng, n=50)
    cfg = TrainConfig(batch_size=1, epochs=1, learning_rate=0.1)
    result = train_noisy_sgd(model, data, cfg, rng)
    assert result.steps == 50
    assert np.all(np.isfinite(result.params))
