"""Iterative feature exclusion: masking, attention units, amplification,
and aggregation into per-instance feature-importance scores.

One attention unit per feature. Iteration j zeroes feature j, pushes the
masked batch through a bias-free linear map to class probabilities, and
scores every feature by the probability-weighted exponentially amplified
weights. Averaging the d iterations and softmaxing gives the importance
vector S (each row positive, summing to 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import rng_for
from .tape import Tape, ValueId, ValidationError


@dataclass
class IfeParams:
    weights: list[np.ndarray]   # d matrices, each d x C, trained
    r: float                    # amplification coefficient, fixed

    @property
    def d(self) -> int:
        return len(self.weights)

    @property
    def num_classes(self) -> int:
        return self.weights[0].shape[1]

    def validate(self):
        d = self.d
        if d < 2:
            raise ValidationError(f"need >= 2 attention units, got {d}")
        if self.r <= 0:
            raise ValidationError(f"amplification coefficient must be > 0, got {self.r}")
        for j, w in enumerate(self.weights):
            if w.shape != (d, self.weights[0].shape[1]):
                raise ValidationError(f"unit {j} has shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValidationError(f"unit {j} has non-finite entries")


def init_ife_params(d: int, num_classes: int, r: float, seed: int) -> IfeParams:
    """Small symmetric init keeps exp(r*w) near 1, so early scores are
    near-uniform."""
    if d < 2:
        raise ValidationError(f"d must be >= 2, got {d}")
    if r <= 0:
        raise ValidationError(f"r must be > 0, got {r}")
    rng = rng_for(seed, "ife-init")
    bound = 1.0 / np.sqrt(d)
    weights = [rng.uniform(-bound, bound, size=(d, num_classes)) for _ in range(d)]
    return IfeParams(weights=weights, r=float(r))


def build_masks(d: int) -> list[np.ndarray]:
    """d binary vectors; mask j is all ones except a zero at position j."""
    if d < 2:
        raise ValidationError(f"cannot build exclusion masks for d={d}")
    masks = []
    for j in range(d):
        m = np.ones(d)
        m[j] = 0.0
        masks.append(m)
    return masks


def mask_input(tape: Tape, x: ValueId, mask: np.ndarray) -> ValueId:
    rows = x.shape[0]
    return tape.mul(x, tape.constant(np.tile(mask.reshape(1, -1), (rows, 1))))


def attention_unit(tape: Tape, x_masked: ValueId, w: ValueId) -> ValueId:
    return tape.row_softmax(tape.matmul(x_masked, w))


def amplified_scores(tape: Tape, w: ValueId, r: float, z: ValueId) -> ValueId:
    if r <= 0:
        raise ValidationError(f"r must be > 0, got {r}")
    amplified = tape.exp(tape.scale(w, r))          # d x C
    return tape.matmul(z, tape.transpose(amplified))  # B x d


def aggregate(tape: Tape, score_ids: list[ValueId]) -> ValueId:
    """Average the per-iteration score rows and softmax into S."""
    if not score_ids:
        raise ValidationError("nothing to aggregate")
    acc = score_ids[0]
    for a in score_ids[1:]:
        acc = tape.add(acc, a)
    return tape.row_softmax(tape.scale(acc, 1.0 / len(score_ids)))


def ife_forward(tape: Tape, x: ValueId, params: IfeParams,
                weight_ids: list[ValueId] | None = None) -> tuple[ValueId, list[ValueId]]:
    """Full module on the tape. Returns (S, weight ids).

    Pass precreated weight_ids to share parameter nodes with a caller that
    also needs them (training); otherwise they are registered here.
    """
    params.validate()
    d = params.d
    if x.shape[1] != d:
        raise ValidationError(f"input has {x.shape[1]} features, module expects {d}")
    if weight_ids is None:
        weight_ids = [tape.parameter(w) for w in params.weights]
    scores = []
    for j, mask in enumerate(build_masks(d)):
        xm = mask_input(tape, x, mask)
        z = attention_unit(tape, xm, weight_ids[j])
        scores.append(amplified_scores(tape, weight_ids[j], params.r, z))
    return aggregate(tape, scores), weight_ids


def ife_scores(x: np.ndarray, params: IfeParams) -> np.ndarray:
    """Convenience forward on a throwaway tape; returns S as an array."""
    tape = Tape()
    s, _ = ife_forward(tape, tape.constant(x), params)
    return np.array(tape.value(s))


def global_ranking(s_rows: np.ndarray, feature_names: list[str]):
    """Dataset-level ranking: mean importance over instances, descending,
    ties broken by ascending feature index. Returns (order, scores)."""
    s_rows = np.atleast_2d(np.asarray(s_rows, dtype=np.float64))
    if s_rows.shape[0] < 1:
        raise ValidationError("need at least one instance to rank")
    if s_rows.shape[1] != len(feature_names):
        raise ValidationError(f"{s_rows.shape[1]} scores vs "
                              f"{len(feature_names)} feature names")
    scores = s_rows.mean(axis=0)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order, scores
