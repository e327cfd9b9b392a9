"""IFENet assembly: batch norm -> importance scores -> weighted input ->
two-layer classifier, all on one tape, plus the plain-FNN ablation twin
and versioned checkpointing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .ife import IfeParams, ife_forward, init_ife_params
from .seeding import rng_for
from .tape import Tape, ValueId, ValidationError

CHECKPOINT_FORMAT = "ifenet-checkpoint"
CHECKPOINT_VERSION = 1

BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5


class CheckpointError(Exception):
    pass


@dataclass
class BatchNormState:
    gamma: np.ndarray           # 1 x d, trained
    beta: np.ndarray            # 1 x d, trained
    running_mean: np.ndarray    # 1 x d
    running_var: np.ndarray     # 1 x d, biased batch variance
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON


@dataclass
class FnnParams:
    W1: np.ndarray              # d x h
    b1: np.ndarray              # 1 x h
    W2: np.ndarray              # h x C
    b2: np.ndarray              # 1 x C


@dataclass
class IfeNetParams:
    bn: BatchNormState
    ife: IfeParams | None       # None for the plain-FNN ablation
    fnn: FnnParams
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.fnn.W1.shape[0]

    @property
    def num_classes(self) -> int:
        return self.fnn.W2.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        """Trainable arrays by stable name (running stats excluded)."""
        out = {"gamma": self.bn.gamma, "beta": self.bn.beta,
               "W1": self.fnn.W1, "b1": self.fnn.b1,
               "W2": self.fnn.W2, "b2": self.fnn.b2}
        if self.ife is not None:
            for j, w in enumerate(self.ife.weights):
                out[f"w{j}"] = w
        return out

    def copy(self) -> "IfeNetParams":
        bn = BatchNormState(self.bn.gamma.copy(), self.bn.beta.copy(),
                            self.bn.running_mean.copy(), self.bn.running_var.copy(),
                            self.bn.momentum, self.bn.epsilon)
        ife = None if self.ife is None else IfeParams(
            [w.copy() for w in self.ife.weights], self.ife.r)
        fnn = FnnParams(self.fnn.W1.copy(), self.fnn.b1.copy(),
                        self.fnn.W2.copy(), self.fnn.b2.copy())
        return IfeNetParams(bn, ife, fnn, dict(self.meta))


def init_params(d: int, num_classes: int, hidden: int | None = None,
                r: float = 3.0, seed: int = 0, ablation: bool = False) -> IfeNetParams:
    """Fresh parameters; hidden defaults to d."""
    if d < 2 or num_classes < 2:
        raise ValidationError(f"need d >= 2 and C >= 2, got d={d}, C={num_classes}")
    h = d if hidden is None else int(hidden)
    if h < 1:
        raise ValidationError(f"hidden size must be >= 1, got {h}")
    bn = BatchNormState(gamma=np.ones((1, d)), beta=np.zeros((1, d)),
                        running_mean=np.zeros((1, d)), running_var=np.ones((1, d)))
    ife = None if ablation else init_ife_params(d, num_classes, r, seed)
    rng = rng_for(seed, "fnn-init")
    Wb1 = 1.0 / np.sqrt(d)
    Wb2 = 1.0 / np.sqrt(h)
    fnn = FnnParams(W1=rng.uniform(-Wb1, Wb1, size=(d, h)),
                    b1=np.zeros((1, h)),
                    W2=rng.uniform(-Wb2, Wb2, size=(h, num_classes)),
                    b2=np.zeros((1, num_classes)))
    meta = {"d": d, "C": num_classes, "h": h, "r": None if ablation else float(r),
            "seed": int(seed), "ablation": bool(ablation)}
    return IfeNetParams(bn, ife, fnn, meta)


def batchnorm_forward(tape: Tape, x: ValueId, bn: BatchNormState, mode: str,
                      update_running: bool = True):
    """Normalize per feature on the tape; gradients reach gamma, beta and x.

    Train mode uses batch statistics (biased variance) and, unless disabled,
    updates the running stats in place. Eval mode uses the running stats.
    Returns (output, gamma_id, beta_id).
    """
    rows, d = x.shape
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be train or eval, got {mode!r}")
    if mode == "train" and rows < 2:
        raise ValidationError("batch norm in train mode needs a batch of >= 2")
    ones = tape.constant(np.ones((rows, 1)))
    eps = tape.constant(np.full((1, d), bn.epsilon))

    if mode == "train":
        mu = tape.mean_over_rows(x)                                   # 1 x d
        centered = tape.add(x, tape.scale(tape.matmul(ones, mu), -1.0))
        var = tape.mean_over_rows(tape.mul(centered, centered))        # 1 x d
        if update_running:
            m = bn.momentum
            bn.running_mean = (1 - m) * bn.running_mean + m * tape.value(mu)
            bn.running_var = (1 - m) * bn.running_var + m * tape.value(var)
    else:
        mu = tape.constant(bn.running_mean)
        centered = tape.add(x, tape.scale(tape.matmul(ones, mu), -1.0))
        var = tape.constant(bn.running_var)

    inv_std = tape.powc(tape.add(var, eps), -0.5)
    normalized = tape.mul(centered, tape.matmul(ones, inv_std))
    gamma_id = tape.parameter(bn.gamma)
    beta_id = tape.parameter(bn.beta)
    out = tape.add(tape.mul(normalized, tape.matmul(ones, gamma_id)),
                   tape.matmul(ones, beta_id))
    return out, gamma_id, beta_id


def _fnn_head(tape: Tape, z: ValueId, fnn: FnnParams):
    rows = z.shape[0]
    ones = tape.constant(np.ones((rows, 1)))
    w1 = tape.parameter(fnn.W1)
    b1 = tape.parameter(fnn.b1)
    w2 = tape.parameter(fnn.W2)
    b2 = tape.parameter(fnn.b2)
    hidden = tape.relu(tape.add(tape.matmul(z, w1), tape.matmul(ones, b1)))
    logits = tape.add(tape.matmul(hidden, w2), tape.matmul(ones, b2))
    return logits, {"W1": w1, "b1": b1, "W2": w2, "b2": b2}


def ifenet_forward(tape: Tape, X: np.ndarray, params: IfeNetParams, mode: str,
                   update_running: bool = True, force_uniform_importance: bool = False):
    """Full forward pass. Returns (logits, param ids, importance ValueId or None).

    force_uniform_importance replaces S with all-ones (diagnostic hook: the
    result is then bit-identical to the plain-FNN pipeline).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise ValidationError(f"input shape {X.shape} does not match d={params.d}")
    x = tape.constant(X)
    x_norm, gamma_id, beta_id = batchnorm_forward(tape, x, params.bn, mode,
                                                  update_running)
    ids = {"gamma": gamma_id, "beta": beta_id}
    s_id = None
    if params.ife is None:
        z = x_norm
    elif force_uniform_importance:
        z = tape.mul(x_norm, tape.constant(np.ones(X.shape)))
    else:
        s_id, weight_ids = ife_forward(tape, x_norm, params.ife)
        ids.update({f"w{j}": wid for j, wid in enumerate(weight_ids)})
        z = tape.mul(s_id, x_norm)
    logits, fnn_ids = _fnn_head(tape, z, params.fnn)
    ids.update(fnn_ids)
    return logits, ids, s_id


def fnn_forward(tape: Tape, X: np.ndarray, params: IfeNetParams, mode: str,
                update_running: bool = True):
    """Ablation pipeline: identical batch norm and head, no importance weighting."""
    stripped = IfeNetParams(params.bn, None, params.fnn, params.meta)
    logits, ids, _ = ifenet_forward(tape, X, stripped, mode, update_running)
    return logits, ids


def predict(params: IfeNetParams, X: np.ndarray):
    """Eval-mode classes and probabilities; argmax ties go to the lowest index."""
    tape = Tape()
    logits, _, _ = ifenet_forward(tape, X, params, "eval")
    probs = tape.value(tape.row_softmax(logits))
    return np.argmax(probs, axis=1), np.array(probs)


def importance_rows(params: IfeNetParams, X: np.ndarray) -> np.ndarray:
    """Per-instance importance scores S in eval mode."""
    if params.ife is None:
        raise ValidationError("ablation model has no importance module")
    tape = Tape()
    _, _, s_id = ifenet_forward(tape, X, params, "eval")
    return np.array(tape.value(s_id))


# -- checkpointing ---------------------------------------------------------

def _payload(params: IfeNetParams, encoder_ref: str | None) -> dict:
    payload = {
        "meta": params.meta,
        "encoder": encoder_ref,
        "bn": {
            "gamma": params.bn.gamma.tolist(),
            "beta": params.bn.beta.tolist(),
            "running_mean": params.bn.running_mean.tolist(),
            "running_var": params.bn.running_var.tolist(),
            "momentum": params.bn.momentum,
            "epsilon": params.bn.epsilon,
        },
        "fnn": {k: getattr(params.fnn, k).tolist() for k in ("W1", "b1", "W2", "b2")},
    }
    if params.ife is not None:
        payload["ife"] = {"r": params.ife.r,
                          "weights": [w.tolist() for w in params.ife.weights]}
    return payload


def save(params: IfeNetParams, path, encoder_ref: str | None = None):
    payload_text = json.dumps(_payload(params, encoder_ref), sort_keys=True)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "checksum": hashlib.sha256(payload_text.encode("utf-8")).hexdigest(),
        "payload": json.loads(payload_text),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load(path) -> IfeNetParams:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc.get('version')}")
    payload_text = json.dumps(doc["payload"], sort_keys=True)
    digest = hashlib.sha256(payload_text.encode("utf-8")).hexdigest()
    if digest != doc.get("checksum"):
        raise CheckpointError(f"{path}: checksum mismatch (corrupt file)")
    p = doc["payload"]
    bn = BatchNormState(np.array(p["bn"]["gamma"]), np.array(p["bn"]["beta"]),
                        np.array(p["bn"]["running_mean"]),
                        np.array(p["bn"]["running_var"]),
                        p["bn"]["momentum"], p["bn"]["epsilon"])
    fnn = FnnParams(*(np.array(p["fnn"][k]) for k in ("W1", "b1", "W2", "b2")))
    ife = None
    if "ife" in p:
        ife = IfeParams([np.array(w) for w in p["ife"]["weights"]], p["ife"]["r"])
    return IfeNetParams(bn, ife, fnn, dict(p["meta"]))
