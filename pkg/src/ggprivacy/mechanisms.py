"""Noise-addition mechanisms, private argmax, and clipped noisy training.

Scale convention shared with the accountant: a mechanism configured with
noise ``GGParams(beta, sigma)`` and sensitivity ``Delta`` adds iid
``GG(beta, sigma * Delta)`` noise per coordinate, so ``sigma`` is always the
per-unit-sensitivity scale.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import ggdist, kernels
from .accountant import CompositionLedger
from .errors import IngestionError, InputError, ParameterError
from .ggdist import GGParams
from .prv import MechanismSpec


def gg_mechanism(value, sensitivity: float, noise: GGParams,
                 rng: np.random.Generator) -> np.ndarray:
    """Add iid GG(beta, sigma * sensitivity) noise to a vector-valued query."""
    if not (isinstance(sensitivity, (int, float)) and math.isfinite(sensitivity)
            and sensitivity > 0):
        raise ParameterError(f"sensitivity must be positive, got {sensitivity!r}")
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise InputError("query value must be finite")
    scaled = GGParams(noise.beta, noise.sigma * float(sensitivity))
    return arr + ggdist.sample(scaled, rng, arr.size).reshape(arr.shape)


def sgg_mechanism(records, query, sensitivity: float, noise: GGParams,
                  sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Poisson-subsample ``records`` at ``sample_rate``, evaluate ``query``
    on the kept subset, and add GG noise.

    ``query`` must map any subset (including the empty one, where it should
    return the query's identity element) to a finite vector.  At
    ``sample_rate == 1`` no inclusion draws are consumed, so the output
    matches `gg_mechanism` on the full data bit-for-bit under the same
    generator state.
    """
    if not 0.0 < sample_rate <= 1.0:
        raise ParameterError(f"sample_rate must lie in (0, 1], got {sample_rate!r}")
    if sample_rate == 1.0:
        subset = records
    else:
        n = len(records)
        keep = rng.random(n) < sample_rate
        if isinstance(records, np.ndarray):
            subset = records[keep]
        else:
            subset = [r for r, k in zip(records, keep) if k]
    return gg_mechanism(query(subset), sensitivity, noise, rng)


def ggnmax(counts, noise: GGParams, rng: np.random.Generator) -> int:
    """Private argmax: add iid GG noise to every count, return the top index.

    Ties break toward the lowest index.  Sensitivity convention: the counts
    are assumed to change by at most 1 in one entry per neighboring dataset,
    so ``noise.sigma`` is used as-is.
    """
    arr = np.atleast_1d(np.asarray(counts, dtype=np.float64))
    if arr.ndim != 1 or arr.size < 2:
        raise ParameterError("counts must be a 1-d array with at least 2 entries")
    if not np.all(np.isfinite(arr)):
        raise InputError("counts must be finite")
    noisy = arr + ggdist.sample(noise, rng, arr.size)
    return int(np.argmax(noisy))


def lbeta_clip(vector, beta: float, clip_norm: float) -> np.ndarray:
    """Project a vector onto the l_beta ball of radius ``clip_norm``:
    g / max(1, ||g||_beta / C)."""
    if not (math.isfinite(clip_norm) and clip_norm > 0):
        raise ParameterError(f"clip_norm must be positive, got {clip_norm!r}")
    if not (1.0 <= beta <= ggdist.BETA_MAX):
        raise ParameterError(f"beta must lie in [1, {ggdist.BETA_MAX:g}]")
    arr = np.atleast_1d(np.asarray(vector, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise InputError("vector must be finite")
    norm = float(kernels.lbeta_norms(arr.reshape(1, -1), beta)[0])
    return arr / max(1.0, norm / clip_norm)


def clip_rows(matrix: np.ndarray, beta: float, clip_norm: float) -> np.ndarray:
    """Row-wise `lbeta_clip` for per-example gradient matrices."""
    mat = np.ascontiguousarray(matrix, dtype=np.float64)
    if mat.ndim != 2:
        raise ParameterError("matrix must be 2-d (examples x parameters)")
    norms = kernels.lbeta_norms(mat, beta)
    scale = 1.0 / np.maximum(1.0, norms / clip_norm)
    return mat * scale[:, None]


# ---------------------------------------------------------------------------
# Models with analytic per-example gradients
# ---------------------------------------------------------------------------


class LogisticModel:
    """Binary logistic regression; parameters are (weights, bias) flattened."""

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.num_params = self.dim + 1

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        del rng  # deterministic start; the objective is convex
        return np.zeros(self.num_params)

    def _logits(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        return X @ params[:-1] + params[-1]

    def predict(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        return (self._logits(params, X) >= 0.0).astype(np.int64)

    def per_example_grads(self, params: np.ndarray, X: np.ndarray,
                          y: np.ndarray) -> np.ndarray:
        z = self._logits(params, X)
        err = expit(z) - y
        return np.concatenate([err[:, None] * X, err[:, None]], axis=1)


class MLPModel:
    """One hidden tanh layer (default width 32), logistic output.

    Gradients are exact per-example backprop, vectorized over the batch.
    """

    def __init__(self, dim: int, width: int = 32):
        self.dim = int(dim)
        self.width = int(width)
        self.num_params = self.dim * self.width + self.width + self.width + 1

    def _unpack(self, params: np.ndarray):
        d, w = self.dim, self.width
        i = 0
        W1 = params[i:i + d * w].reshape(d, w); i += d * w
        b1 = params[i:i + w]; i += w
        w2 = params[i:i + w]; i += w
        b2 = params[i]
        return W1, b1, w2, b2

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        d, w = self.dim, self.width
        parts = [rng.normal(0.0, 1.0 / math.sqrt(d), d * w),
                 np.zeros(w), rng.normal(0.0, 1.0 / math.sqrt(w), w),
                 np.zeros(1)]
        return np.concatenate(parts)

    def _forward(self, params: np.ndarray, X: np.ndarray):
        W1, b1, w2, b2 = self._unpack(params)
        hidden = np.tanh(X @ W1 + b1)
        return hidden, hidden @ w2 + b2

    def predict(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        _, z = self._forward(params, X)
        return (z >= 0.0).astype(np.int64)

    def per_example_grads(self, params: np.ndarray, X: np.ndarray,
                          y: np.ndarray) -> np.ndarray:
        _, _, w2, _ = self._unpack(params)
        hidden, z = self._forward(params, X)
        err = expit(z) - y                                     # (n,)
        g_w2 = err[:, None] * hidden                           # (n, w)
        g_b2 = err[:, None]                                    # (n, 1)
        back = (err[:, None] * w2[None, :]) * (1.0 - hidden ** 2)  # (n, w)
        g_W1 = X[:, :, None] * back[:, None, :]                # (n, d, w)
        g_b1 = back
        n = X.shape[0]
        return np.concatenate([g_W1.reshape(n, -1), g_b1, g_w2, g_b2], axis=1)


# ---------------------------------------------------------------------------
# Clipped noisy SGD
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Knobs for `train_noisy_sgd`.

    ``noise`` follows the package convention (per-unit-sensitivity scale);
    the vector actually added each step is GG(beta, sigma * clip_norm) per
    coordinate.  ``target_epsilon``/``target_delta`` arm the budget halt:
    training stops before the step that would exceed the target.
    """

    clip_norm: float = 1.0
    noise: GGParams = field(default_factory=lambda: GGParams(2.0, math.sqrt(2.0)))
    batch_size: int = 64
    epochs: int = 5
    learning_rate: float = 0.5
    target_epsilon: float | None = None
    target_delta: float = 1e-5
    ledger_samples: int = 400_000
    ledger_bins: int = 2 ** 16


@dataclass
class TrainResult:
    params: np.ndarray
    history: list[dict]
    steps: int
    halted: bool
    epsilon: float | None
    delta: float | None


def _accuracy(model, params, X, y) -> float:
    return float(np.mean(model.predict(params, X) == y))


def train_noisy_sgd(model, train_data, cfg: TrainConfig,
                    rng: np.random.Generator, test_data=None,
                    ledger: CompositionLedger | None = None) -> TrainResult:
    """Clipped-and-noised SGD with Poisson batches and a privacy halt.

    Each step Poisson-samples a batch at rate ``batch_size / n``, clips
    per-example gradients to the l_beta ball of radius ``clip_norm``, sums
    them, adds one GG noise vector, and scales by the *expected* batch size.
    An empty batch still takes a (noise-only) step.  When a target epsilon is
    set, the step budget is fixed up front from the composition ledger and
    the loop halts there.
    """
    X, y = train_data
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = X.shape[0]
    if n < 1:
        raise ParameterError("training set is empty")
    if not 1 <= cfg.batch_size <= n:
        raise ParameterError(
            f"batch_size must lie in [1, {n}], got {cfg.batch_size}")
    q = cfg.batch_size / n
    steps_per_epoch = max(1, round(n / cfg.batch_size))
    planned = cfg.epochs * steps_per_epoch

    spec = MechanismSpec(cfg.noise, cfg.clip_norm,
                         None if q == 1.0 else q, 1)
    if cfg.target_epsilon is not None and ledger is None:
        ledger = CompositionLedger(spec, rng=None,
                                   k_cap=max(1, planned),
                                   samples_n=cfg.ledger_samples,
                                   bins=cfg.ledger_bins)
    budget = None
    if cfg.target_epsilon is not None:
        budget = ledger.max_steps(cfg.target_epsilon, cfg.target_delta)
    total = planned if budget is None else min(planned, budget)

    params = model.init_params(rng)
    noise_params = GGParams(cfg.noise.beta, cfg.noise.sigma * cfg.clip_norm)
    history: list[dict] = []
    steps = 0
    for epoch in range(1, cfg.epochs + 1):
        for _ in range(steps_per_epoch):
            if steps >= total:
                break
            if q == 1.0:
                Xb, yb = X, y
            else:
                keep = rng.random(n) < q
                Xb, yb = X[keep], y[keep]
            if Xb.shape[0] > 0:
                grads = model.per_example_grads(params, Xb, yb)
                gsum = clip_rows(grads, cfg.noise.beta, cfg.clip_norm).sum(axis=0)
            else:
                gsum = np.zeros(model.num_params)
            noise_vec = ggdist.sample(noise_params, rng, model.num_params)
            params = params - cfg.learning_rate * (gsum + noise_vec) / cfg.batch_size
            steps += 1
        record = {
            "epoch": epoch,
            "epsilon": (ledger.epsilon_at(steps, cfg.target_delta)
                        if ledger is not None and steps > 0 else None),
            "delta": cfg.target_delta if ledger is not None else None,
            "train_acc": _accuracy(model, params, X, y),
            "test_acc": (_accuracy(model, params, *test_data)
                         if test_data is not None else None),
        }
        history.append(record)
        if steps >= total:
            break

    return TrainResult(params=params, history=history, steps=steps,
                       halted=steps < planned,
                       epsilon=history[-1]["epsilon"] if history else None,
                       delta=cfg.target_delta if ledger is not None else None)


# ---------------------------------------------------------------------------
# Data helpers (synthetic blobs + CSV ingestion)
# ---------------------------------------------------------------------------


def make_blobs(count: int, dim: int, separation: float,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two unit-variance Gaussian clusters ``separation`` apart along the
    all-ones direction, balanced labels."""
    if count < 2 or dim < 1:
        raise ParameterError("need count >= 2 and dim >= 1")
    y = rng.integers(0, 2, size=count)
    direction = np.ones(dim) / math.sqrt(dim)
    centers = (y[:, None] - 0.5) * separation * direction[None, :]
    X = centers + rng.normal(0.0, 1.0, size=(count, dim))
    return X, y.astype(np.int64)


def load_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset CSV: float feature columns, final integer label column.

    Raises `IngestionError` naming the offending row on any schema violation.
    """
    features: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, newline="") as fh:
        for row_num, row in enumerate(csv.reader(fh), start=1):
            if not row or (row_num == 1 and any(not _is_number(c) for c in row)):
                continue  # blank line or header
            if width is None:
                width = len(row)
            if len(row) != width or width < 2:
                raise IngestionError(
                    f"row {row_num}: expected {width or 2}+ comma-separated "
                    f"columns, got {len(row)}")
            try:
                features.append([float(c) for c in row[:-1]])
            except ValueError as exc:
                raise IngestionError(f"row {row_num}: non-numeric feature "
                                     f"({exc})") from exc
            label_text = row[-1].strip()
            try:
                label_f = float(label_text)
            except ValueError as exc:
                raise IngestionError(f"row {row_num}: non-numeric label "
                                     f"{label_text!r}") from exc
            if label_f != int(label_f):
                raise IngestionError(f"row {row_num}: label {label_text!r} "
                                     "is not an integer")
            labels.append(int(label_f))
    if not features:
        raise IngestionError("row 1: file contains no data rows")
    return np.asarray(features, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False
