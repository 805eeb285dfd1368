"""Dense float64 tensors with tape-based reverse-mode differentiation.

The models trained in this package are small static graphs, so a fresh
:class:`Tape` is built per batch and discarded after one backward pass.
The primitive set is exactly what the pipeline needs; there is no
broadcasting beyond the shapes each op documents, and everything runs in
64-bit floats so finite-difference checks can be tight.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

LOG_EPS = 1e-12


class ShapeError(ValueError):
    """Operand shapes do not conform; the message names the operands."""


class Tensor:
    """A dense float64 array plus an optional gradient of the same shape."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _wrap(values: np.ndarray) -> Tensor:
    # Internal fast path for op outputs: takes ownership of a fresh array.
    t = Tensor.__new__(Tensor)
    t.values = values
    t.requires_grad = False
    t.grad = None
    return t


class Tape:
    """Execution-ordered record of primitive applications.

    Records are appended at creation time, so the list is topologically
    sorted by construction: every input of a record was produced, or was
    a leaf, before the record itself. One reversed sweep therefore
    visits each node exactly once, in a fixed order, which makes
    repeated backward passes bit-identical.

    A tape has a single owner; it must not be shared across threads
    during construction or backward.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable[[np.ndarray], None]]] = []
        self._produced: set[int] = set()

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], pull: Callable[[np.ndarray], None]) -> None:
        self._records.append((out, inputs, pull))
        self._produced.add(id(out))

    def accumulate(self, t: Tensor, delta: np.ndarray) -> None:
        """Add `delta` into t.grad if t participates in differentiation.

        Constants (leaves with requires_grad=False) never receive
        gradient, which is what keeps frozen parameter stores inert.
        """
        if t.requires_grad or id(t) in self._produced:
            if t.grad is None:
                t.grad = np.zeros_like(t.values)
            t.grad += delta

    def backward(self, loss: Tensor, leaves: Sequence[Tensor] = ()) -> None:
        """Populate gradients of everything on the path from `loss`.

        Leaves listed in `leaves` that the loss does not reach are given
        an explicit zero gradient. Grad slots touched by this tape are
        reset first, so calling backward twice yields identical results.
        """
        if loss.values.shape != ():
            raise ValueError(f"backward: loss must be a scalar, got shape {loss.values.shape}")
        for out, inputs, _ in self._records:
            out.grad = None
            for t in inputs:
                t.grad = None
        for leaf in leaves:
            leaf.grad = None
        loss.grad = np.ones((), dtype=np.float64)
        for out, _, pull in reversed(self._records):
            if out.grad is not None:
                pull(out.grad)
        for leaf in leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.values)


# ---------------------------------------------------------------------------
# Primitives. Each validates shapes, computes the forward value, and records
# a pull closure that routes the upstream gradient to its inputs.
# ---------------------------------------------------------------------------


def linear(tape: Tape, weight: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """out[i] = sum_j weight[i, j] * x[j] + bias[i]."""
    W, b, v = weight.values, bias.values, x.values
    if W.ndim != 2 or b.ndim != 1 or v.ndim != 1 or W.shape[1] != v.shape[0] or W.shape[0] != b.shape[0]:
        raise ShapeError(
            f"linear: weight {W.shape}, bias {b.shape} and input {v.shape} do not conform"
        )
    out = _wrap(W @ v + b)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(weight, np.outer(g, v))
        tape.accumulate(bias, g)
        tape.accumulate(x, W.T @ g)

    tape.record(out, (weight, bias, x), pull)
    return out


def add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = _wrap(a.values + b.values)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(a, g)
        tape.accumulate(b, g)

    tape.record(out, (a, b), pull)
    return out


def sub(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} differ")
    out = _wrap(a.values - b.values)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(a, g)
        tape.accumulate(b, -g)

    tape.record(out, (a, b), pull)
    return out


def add_n(tape: Tape, xs: Sequence[Tensor]) -> Tensor:
    """Sum a non-empty list of same-shape tensors."""
    if not xs:
        raise ValueError("add_n: empty operand list")
    shape = xs[0].shape
    for x in xs:
        if x.shape != shape:
            raise ShapeError(f"add_n: shapes {shape} and {x.shape} differ")
    total = xs[0].values.copy()
    for x in xs[1:]:
        total += x.values
    out = _wrap(total)

    def pull(g: np.ndarray) -> None:
        for x in xs:
            tape.accumulate(x, g)

    tape.record(out, tuple(xs), pull)
    return out


def scale(tape: Tape, x: Tensor, c: float) -> Tensor:
    """Multiply by a plain (non-differentiated) constant."""
    c = float(c)
    out = _wrap(x.values * c)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(x, g * c)

    tape.record(out, (x,), pull)
    return out


def scale_by(tape: Tape, x: Tensor, s: Tensor) -> Tensor:
    """Multiply a tensor by a scalar tensor; both factors get gradient."""
    if s.shape != ():
        raise ShapeError(f"scale_by: scale must be scalar, got shape {s.shape}")
    out = _wrap(x.values * s.values)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(x, g * s.values)
        tape.accumulate(s, np.asarray(np.sum(g * x.values)))

    tape.record(out, (x, s), pull)
    return out


def concat(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    """Juxtapose two vectors."""
    if a.values.ndim != 1 or b.values.ndim != 1:
        raise ShapeError(f"concat: expected vectors, got {a.shape} and {b.shape}")
    out = _wrap(np.concatenate([a.values, b.values]))
    d = a.shape[0]

    def pull(g: np.ndarray) -> None:
        tape.accumulate(a, g[:d])
        tape.accumulate(b, g[d:])

    tape.record(out, (a, b), pull)
    return out


def index(tape: Tape, v: Tensor, i: int) -> Tensor:
    """Select one element of a vector as a scalar."""
    if v.values.ndim != 1:
        raise ShapeError(f"index: expected a vector, got shape {v.shape}")
    if not 0 <= i < v.shape[0]:
        raise IndexError(f"index: position {i} out of range for length {v.shape[0]}")
    out = _wrap(np.asarray(v.values[i]))

    def pull(g: np.ndarray) -> None:
        delta = np.zeros_like(v.values)
        delta[i] = g
        tape.accumulate(v, delta)

    tape.record(out, (v,), pull)
    return out


def gather_rows(tape: Tape, table: Tensor, ids: Sequence[int]) -> Tensor:
    """Stack rows of a 2-d table selected by integer ids (repeats allowed)."""
    if table.values.ndim != 2:
        raise ShapeError(f"gather_rows: table must be 2-d, got shape {table.shape}")
    if len(ids) == 0:
        raise ValueError("gather_rows: empty id sequence")
    n_rows = table.shape[0]
    for i in ids:
        if not 0 <= i < n_rows:
            raise IndexError(f"gather_rows: row id {i} out of range for table with {n_rows} rows")
    idx = np.asarray(ids, dtype=np.intp)
    out = _wrap(table.values[idx].copy())

    def pull(g: np.ndarray) -> None:
        delta = np.zeros_like(table.values)
        np.add.at(delta, idx, g)
        tape.accumulate(table, delta)

    tape.record(out, (table,), pull)
    return out


def mean_pool(tape: Tape, rows: Tensor) -> Tensor:
    """Columnwise arithmetic mean of a t x d matrix; backward spreads 1/t."""
    if rows.values.ndim != 2:
        raise ShapeError(f"mean_pool: expected a 2-d tensor, got shape {rows.shape}")
    t = rows.shape[0]
    if t == 0:
        raise ValueError("mean_pool: empty sequence")
    out = _wrap(rows.values.mean(axis=0))

    def pull(g: np.ndarray) -> None:
        tape.accumulate(rows, np.tile(g / t, (t, 1)))

    tape.record(out, (rows,), pull)
    return out


def tanh(tape: Tape, x: Tensor) -> Tensor:
    y = np.tanh(x.values)
    out = _wrap(y)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(x, (1.0 - y * y) * g)

    tape.record(out, (x,), pull)
    return out


def softmax(tape: Tape, v: Tensor) -> Tensor:
    """Max-shifted softmax over a vector of length >= 2.

    The shift makes exp overflow impossible for finite input; the output
    sums to 1 to within accumulation error.
    """
    if v.values.ndim != 1 or v.shape[0] < 2:
        raise ShapeError(f"softmax: expected a vector of length >= 2, got shape {v.shape}")
    e = np.exp(v.values - np.max(v.values))
    p = e / e.sum()
    out = _wrap(p)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(v, p * (g - np.dot(g, p)))

    tape.record(out, (v,), pull)
    return out


def sigmoid(tape: Tape, x: Tensor) -> Tensor:
    """Elementwise logistic function, overflow-safe on both tails."""
    s = x.values
    y = np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))), np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))
    y = np.asarray(y)
    out = _wrap(y)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(x, y * (1.0 - y) * g)

    tape.record(out, (x,), pull)
    return out


def bce(tape: Tape, target: float, p: Tensor) -> Tensor:
    """Binary cross-entropy -t*ln(p) - (1-t)*ln(1-p) of a scalar probability.

    p is clamped to [LOG_EPS, 1-LOG_EPS] before the logs; the clamp is
    treated as the identity in backward.
    """
    target = float(target)
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"bce: target {target} outside [0, 1]")
    if p.shape != ():
        raise ShapeError(f"bce: probability must be scalar, got shape {p.shape}")
    pc = min(max(float(p.values), LOG_EPS), 1.0 - LOG_EPS)
    out = _wrap(np.asarray(-target * np.log(pc) - (1.0 - target) * np.log1p(-pc)))

    def pull(g: np.ndarray) -> None:
        tape.accumulate(p, np.asarray(g * (pc - target) / (pc * (1.0 - pc))))

    tape.record(out, (p,), pull)
    return out


def categorical_ce(tape: Tape, probs: Tensor, class_index: int) -> Tensor:
    """Cross-entropy -ln(probs[class_index]) against a one-hot target."""
    if probs.values.ndim != 1:
        raise ShapeError(f"categorical_ce: expected a probability vector, got shape {probs.shape}")
    if not 0 <= class_index < probs.shape[0]:
        raise IndexError(
            f"categorical_ce: class {class_index} out of range for {probs.shape[0]} classes"
        )
    pc = max(float(probs.values[class_index]), LOG_EPS)
    out = _wrap(np.asarray(-np.log(pc)))

    def pull(g: np.ndarray) -> None:
        delta = np.zeros_like(probs.values)
        delta[class_index] = -g / pc
        tape.accumulate(probs, delta)

    tape.record(out, (probs,), pull)
    return out


def square(tape: Tape, x: Tensor) -> Tensor:
    out = _wrap(x.values * x.values)

    def pull(g: np.ndarray) -> None:
        tape.accumulate(x, 2.0 * x.values * g)

    tape.record(out, (x,), pull)
    return out


def cosine(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    """Cosine of the angle between two nonzero vectors, as a scalar."""
    if a.shape != b.shape or a.values.ndim != 1:
        raise ShapeError(f"cosine: expected two vectors of equal length, got {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine: zero-norm vector")
    c = float(np.dot(av, bv) / (na * nb))
    out = _wrap(np.asarray(c))

    def pull(g: np.ndarray) -> None:
        tape.accumulate(a, g * (bv / (na * nb) - c * av / (na * na)))
        tape.accumulate(b, g * (av / (na * nb) - c * bv / (nb * nb)))

    tape.record(out, (a, b), pull)
    return out


def grad_check(build_loss: Callable[[Tape], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    `build_loss` must rebuild the scalar loss on a fresh tape from the
    current values of `params`. Error for coordinate i is
    |analytic_i - fd_i| / (|analytic_i| + 1e-8). The comparison is only
    meaningful where the loss is smooth within an h-neighbourhood;
    selection boundaries (argmax ties, clamps) violate that and are
    excluded by construction of the test points, not by this function.
    """
    if h <= 0:
        raise ValueError("grad_check: step h must be positive")
    tape = Tape()
    loss = build_loss(tape)
    tape.backward(loss, leaves=params)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ag in zip(params, analytic):
        flat = p.values.reshape(-1)
        aflat = ag.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(build_loss(Tape()).values)
            flat[i] = orig - h
            fm = float(build_loss(Tape()).values)
            flat[i] = orig
            fd = (fp - fm) / (2.0 * h)
            err = abs(aflat[i] - fd) / (abs(aflat[i]) + 1e-8)
            worst = max(worst, float(err))
    return worst
