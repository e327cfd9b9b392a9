"""Minibatch Adam training with validation-accuracy early stopping, plus
random hyperparameter search and the amplification-coefficient sweep.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as model_mod
from .data import EncodedDataset
from .seeding import derive_seed, rng_for
from .tape import Tape, ValidationError

log = logging.getLogger(__name__)

DEFAULT_MAX_EPOCHS = 120
DEFAULT_PATIENCE = 10
DEFAULT_TRIALS = 50


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = DEFAULT_MAX_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    r: float = 3.0
    hidden_size: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValidationError("max_epochs and patience must be >= 1")
        if self.r <= 0:
            raise ValidationError("r must be > 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max-epochs"


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, arrays: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in arrays.items()},
                   v={k: np.zeros_like(a) for k, a in arrays.items()})


def adam_step(arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, in place."""
    state.t += 1
    for name, p in arrays.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValidationError(f"gradient shape {g.shape} != param shape "
                                  f"{p.shape} for {name!r}")
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1 ** state.t)
        v_hat = state.v[name] / (1 - beta2 ** state.t)
        p -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)


def accuracy_on(params: model_mod.IfeNetParams, ds: EncodedDataset) -> float:
    preds, _ = model_mod.predict(params, ds.X)
    return float(np.mean(preds == ds.y))


def train(params: model_mod.IfeNetParams, train_ds: EncodedDataset,
          val_ds: EncodedDataset, config: TrainConfig,
          ablation: bool = False) -> tuple[model_mod.IfeNetParams, TrainHistory]:
    """Optimize and return the snapshot with the best validation accuracy.

    Improvement means strictly greater validation accuracy; `patience`
    consecutive epochs without it stop training early. Trailing minibatches
    of size 1 are dropped (batch norm needs >= 2 rows).
    """
    config.validate()
    if train_ds.d != val_ds.d or train_ds.num_classes != val_ds.num_classes:
        raise ValidationError("train and validation splits disagree on d or C")
    if train_ds.n == 0 or val_ds.n == 0:
        raise ValidationError("empty split")

    arrays = params.arrays()
    state = AdamState.for_params(arrays)
    history = TrainHistory()
    best = params.copy()
    best_acc = -1.0
    stale = 0

    forward = model_mod.fnn_forward if ablation or params.ife is None else None

    for epoch in range(1, config.max_epochs + 1):
        perm = rng_for(config.seed, "shuffle", epoch).permutation(train_ds.n)
        losses = []
        for start in range(0, train_ds.n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            tape = Tape()
            if forward is not None:
                logits, ids = forward(tape, train_ds.X[idx], params, "train")
            else:
                logits, ids, _ = model_mod.ifenet_forward(
                    tape, train_ds.X[idx], params, "train")
            loss = tape.cross_entropy_loss(logits, train_ds.y[idx])
            losses.append(float(tape.value(loss)[0, 0]))
            grads = tape.backward(loss)
            adam_step(arrays, {k: grads[v] for k, v in ids.items()}, state,
                      config.learning_rate, config.beta1, config.beta2,
                      config.adam_eps)
        val_acc = accuracy_on(params, val_ds)
        history.records.append(EpochRecord(epoch, float(np.mean(losses)), val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best = params.copy()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                history.stop_reason = "early-stop"
                break
    else:
        history.stop_reason = "max-epochs"
    return best, history


def fit(train_ds: EncodedDataset, val_ds: EncodedDataset, config: TrainConfig,
        ablation: bool = False) -> tuple[model_mod.IfeNetParams, TrainHistory]:
    """Initialize from the config seed and train."""
    params = model_mod.init_params(train_ds.d, train_ds.num_classes,
                                   hidden=config.hidden_size, r=config.r,
                                   seed=config.seed, ablation=ablation)
    return train(params, train_ds, val_ds, config)


# -- hyperparameter search -------------------------------------------------

# domains: ("choice", [values]) | ("int", lo, hi) | ("float", lo, hi)
DEFAULT_SEARCH_SPACE = {
    "learning_rate": ("choice", [0.01, 0.001, 0.0001]),
    "batch_size": ("choice", [32, 64, 128]),
    "hidden_size": ("int", 16, 128),
    "r": ("float", 1.0, 5.0),
}


@dataclass
class TrialRecord:
    index: int
    config: TrainConfig
    val_accuracy: float
    test_accuracy: float | None = None


def sample_config(space: dict, base: TrainConfig, rng: np.random.Generator,
                  seed: int) -> TrainConfig:
    updates = {"seed": seed}
    for name, domain in space.items():
        kind = domain[0]
        if kind == "choice":
            values = domain[1]
            if not values:
                raise ValidationError(f"empty choice set for {name!r}")
            updates[name] = values[int(rng.integers(len(values)))]
        elif kind == "int":
            lo, hi = domain[1], domain[2]
            updates[name] = int(rng.integers(lo, hi + 1))
        elif kind == "float":
            lo, hi = domain[1], domain[2]
            updates[name] = float(rng.uniform(lo, hi))
        else:
            raise ValidationError(f"unknown domain kind {kind!r}")
    return replace(base, **updates)


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("IFE_THREADS", "1")))
    except ValueError:
        return 1


def random_search(space: dict, trials: int, base: TrainConfig,
                  train_ds: EncodedDataset, val_ds: EncodedDataset,
                  seed: int, ablation: bool = False):
    """Independent uniform sampling per trial; best by validation accuracy,
    ties to the earlier trial. Returns (best config, best params, records)."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if not space:
        raise ValidationError("empty search space")

    def run(i: int) -> tuple[TrialRecord, model_mod.IfeNetParams]:
        trial_seed = derive_seed(seed, "trial", i)
        cfg = sample_config(space, base, np.random.default_rng(trial_seed),
                            trial_seed)
        params, _ = fit(train_ds, val_ds, cfg, ablation=ablation)
        acc = accuracy_on(params, val_ds)
        log.info("trial %d: val accuracy %.4f (%s)", i, acc, cfg)
        return TrialRecord(i, cfg, acc), params

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(i) for i in range(trials)]

    records = [rec for rec, _ in results]
    best_rec, best_params = max(results, key=lambda rp: (rp[0].val_accuracy,
                                                         -rp[0].index))
    return best_rec.config, best_params, records


def sweep_r(r_values, base: TrainConfig, train_ds: EncodedDataset,
            val_ds: EncodedDataset, test_ds: EncodedDataset):
    """Train one model per amplification coefficient, all else fixed.
    Returns a list of (r, test accuracy)."""
    r_values = [float(r) for r in r_values]
    if not r_values:
        raise ValidationError("need at least one r value")
    if any(r <= 0 for r in r_values):
        raise ValidationError("r values must be positive")

    def run(r: float) -> tuple[float, float]:
        params, _ = fit(train_ds, val_ds, replace(base, r=r))
        return r, accuracy_on(params, test_ds)

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, r_values))
    return [run(r) for r in r_values]
