"""Minimal reverse-mode autodiff on 2-D float64 arrays.

The op set is deliberately small: just the primitives the attention-ranking
network needs, so the backward sweep stays auditable. Nodes are appended in
construction order, which is a topological order by definition, and forward
values are never mutated after being recorded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# exp() arguments above this are clamped; exp(50) is still comfortably finite
# in float64 while anything much larger risks overflowing downstream products.
EXP_CLAMP = 50.0


class TapeError(Exception):
    pass


class ShapeError(TapeError):
    pass


class ValidationError(TapeError):
    pass


@dataclass(frozen=True)
class ValueId:
    """Handle to a node on a Tape."""

    id: int
    shape: tuple[int, int]


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    tracked: bool = False
    extra: dict = field(default_factory=dict)


class GradientMap:
    """Adjoints for every tracked parameter of a tape, keyed by node id."""

    def __init__(self, adjoints: dict[int, np.ndarray]):
        self._adjoints = adjoints

    def __getitem__(self, param: ValueId) -> np.ndarray:
        return self._adjoints[param.id]

    def __contains__(self, param: ValueId) -> bool:
        return param.id in self._adjoints

    def __len__(self) -> int:
        return len(self._adjoints)


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 1-D or 2-D array, got ndim={arr.ndim}")
    return arr


class Tape:
    """Append-only computation graph; single-writer by construction."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.clamp_events = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def value(self, vid: ValueId) -> np.ndarray:
        return self.nodes[vid.id].value

    def _record(self, op, inputs, value, tracked=False, **extra) -> ValueId:
        value = np.array(value, dtype=np.float64, order="C")  # private copy
        value.flags.writeable = False
        self.nodes.append(Node(op, inputs, value, tracked, extra))
        return ValueId(len(self.nodes) - 1, value.shape)

    # -- leaves ------------------------------------------------------------

    def constant(self, data) -> ValueId:
        arr = _as_matrix(data)
        if not np.all(np.isfinite(arr)):
            raise ValidationError("constant contains non-finite entries")
        return self._record("constant", (), arr)

    def parameter(self, data) -> ValueId:
        arr = _as_matrix(data)
        if not np.all(np.isfinite(arr)):
            raise ValidationError("parameter contains non-finite entries")
        return self._record("parameter", (), arr, tracked=True)

    # -- linear algebra ----------------------------------------------------

    def matmul(self, a: ValueId, b: ValueId) -> ValueId:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not agree")
        return self._record("matmul", (a.id, b.id), self.value(a) @ self.value(b))

    def transpose(self, a: ValueId) -> ValueId:
        return self._record("transpose", (a.id,), self.value(a).T)

    # -- elementwise -------------------------------------------------------

    def _binary(self, op, a: ValueId, b: ValueId, fn) -> ValueId:
        if a.shape != b.shape:
            raise ShapeError(f"{op} shapes {a.shape} and {b.shape} differ")
        return self._record(op, (a.id, b.id), fn(self.value(a), self.value(b)))

    def add(self, a: ValueId, b: ValueId) -> ValueId:
        return self._binary("add", a, b, np.add)

    def mul(self, a: ValueId, b: ValueId) -> ValueId:
        return self._binary("mul", a, b, np.multiply)

    def scale(self, a: ValueId, c: float) -> ValueId:
        if not np.isfinite(c):
            raise ValidationError(f"scale factor must be finite, got {c}")
        return self._record("scale", (a.id,), c * self.value(a), c=float(c))

    def exp(self, a: ValueId) -> ValueId:
        x = self.value(a)
        if np.any(x > EXP_CLAMP):
            self.clamp_events += int(np.count_nonzero(x > EXP_CLAMP))
            log.warning("exp argument clamped to %s (%d entries)", EXP_CLAMP,
                        int(np.count_nonzero(x > EXP_CLAMP)))
        return self._record("exp", (a.id,), np.exp(np.minimum(x, EXP_CLAMP)))

    def relu(self, a: ValueId) -> ValueId:
        return self._record("relu", (a.id,), np.maximum(self.value(a), 0.0))

    def powc(self, a: ValueId, c: float) -> ValueId:
        if not np.isfinite(c):
            raise ValidationError(f"exponent must be finite, got {c}")
        return self._record("powc", (a.id,), self.value(a) ** c, c=float(c))

    def elementwise(self, kind: str, a: ValueId, b: ValueId | None = None,
                    c: float | None = None) -> ValueId:
        """Generic dispatch for the pointwise kinds; thin sugar over the methods."""
        if kind == "add":
            return self.add(a, b)
        if kind == "mul":
            return self.mul(a, b)
        if kind == "exp":
            return self.exp(a)
        if kind == "relu":
            return self.relu(a)
        if kind == "scale":
            return self.scale(a, c)
        raise ValidationError(f"unknown elementwise kind {kind!r}")

    # -- reductions / normalizers -----------------------------------------

    def row_softmax(self, a: ValueId) -> ValueId:
        if a.shape[1] < 1:
            raise ShapeError("row_softmax needs at least one column")
        x = self.value(a)
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return self._record("row_softmax", (a.id,), e / e.sum(axis=1, keepdims=True))

    def mean_over_rows(self, a: ValueId) -> ValueId:
        if a.shape[0] < 1:
            raise ShapeError("mean_over_rows needs at least one row")
        return self._record("mean_over_rows", (a.id,),
                            self.value(a).mean(axis=0, keepdims=True))

    def cross_entropy_loss(self, logits: ValueId, labels) -> ValueId:
        labels = np.asarray(labels, dtype=np.int64).ravel()
        n, c = logits.shape
        if labels.shape[0] != n:
            raise ShapeError(f"{labels.shape[0]} labels for {n} logit rows")
        if labels.min() < 0 or labels.max() >= c:
            raise ValidationError(f"label out of range [0, {c})")
        x = self.value(logits)
        shifted = x - x.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        loss = -logp[np.arange(n), labels].mean()
        probs = np.exp(logp)
        return self._record("cross_entropy", (logits.id,), np.array([[loss]]),
                            labels=labels, probs=probs)

    # -- backward ----------------------------------------------------------

    def backward(self, loss: ValueId) -> GradientMap:
        if loss.shape != (1, 1):
            raise ShapeError(f"loss must be a scalar node, got shape {loss.shape}")
        adj: dict[int, np.ndarray] = {loss.id: np.ones((1, 1))}

        def push(nid: int, grad: np.ndarray):
            if nid in adj:
                adj[nid] = adj[nid] + grad
            else:
                adj[nid] = np.array(grad, dtype=np.float64)

        for nid in range(loss.id, -1, -1):
            if nid not in adj:
                continue
            node = self.nodes[nid]
            g = adj[nid]
            if node.op in ("constant", "parameter"):
                continue
            if node.op == "matmul":
                a, b = node.inputs
                push(a, g @ self.nodes[b].value.T)
                push(b, self.nodes[a].value.T @ g)
            elif node.op == "transpose":
                push(node.inputs[0], g.T)
            elif node.op == "add":
                push(node.inputs[0], g)
                push(node.inputs[1], g)
            elif node.op == "mul":
                a, b = node.inputs
                push(a, g * self.nodes[b].value)
                push(b, g * self.nodes[a].value)
            elif node.op == "scale":
                push(node.inputs[0], node.extra["c"] * g)
            elif node.op == "exp":
                x = self.nodes[node.inputs[0]].value
                push(node.inputs[0], g * node.value * (x <= EXP_CLAMP))
            elif node.op == "relu":
                x = self.nodes[node.inputs[0]].value
                push(node.inputs[0], g * (x > 0.0))
            elif node.op == "powc":
                x = self.nodes[node.inputs[0]].value
                c = node.extra["c"]
                push(node.inputs[0], g * c * x ** (c - 1.0))
            elif node.op == "row_softmax":
                y = node.value
                push(node.inputs[0], y * (g - (g * y).sum(axis=1, keepdims=True)))
            elif node.op == "mean_over_rows":
                rows = self.nodes[node.inputs[0]].value.shape[0]
                push(node.inputs[0],
                     np.repeat(g, rows, axis=0) / rows)
            elif node.op == "cross_entropy":
                probs = node.extra["probs"]
                labels = node.extra["labels"]
                onehot = np.zeros_like(probs)
                onehot[np.arange(len(labels)), labels] = 1.0
                push(node.inputs[0], g * (probs - onehot) / len(labels))
            else:  # pragma: no cover
                raise TapeError(f"no backward rule for op {node.op!r}")

        grads = {}
        for nid, node in enumerate(self.nodes):
            if node.tracked:
                grads[nid] = adj.get(nid, np.zeros(node.value.shape))
        return GradientMap(grads)


def grad_check(build, params: list[np.ndarray], eps: float = 1e-5) -> float:
    """Compare tape adjoints against central finite differences.

    `build(arrays)` must construct a fresh graph and return
    `(tape, loss_id, param_ids)` with one ValueId per input array. Returns the
    max over all parameter entries of |tape - fd| / max(1e-8, |tape| + |fd|).
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]
    tape, loss, param_ids = build(params)
    grads = tape.backward(loss)

    def loss_at(arrays) -> float:
        t, l, _ = build(arrays)
        return float(t.value(l)[0, 0])

    worst = 0.0
    for k, p in enumerate(params):
        analytic = grads[param_ids[k]]
        for idx in np.ndindex(p.shape):
            bumped = [q.copy() for q in params]
            bumped[k][idx] += eps
            hi = loss_at(bumped)
            bumped[k][idx] -= 2 * eps
            lo = loss_at(bumped)
            fd = (hi - lo) / (2 * eps)
            t = analytic[idx]
            worst = max(worst, abs(t - fd) / max(1e-8, abs(t) + abs(fd)))
    return worst
