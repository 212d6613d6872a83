"""Dense-array numeric kernel with reverse-mode derivative accumulation.

Everything is float64. Forward primitives record their adjoints on the
active ComputeRecord; ``backward`` replays the record in reverse and
accumulates gradients into the participating Parameters. The op set is
exactly what the cross-peak model needs: embedding lookup, affine maps,
relu, concatenation, neighbor sums, and L1-style reductions.
"""

from __future__ import annotations

import math

import numpy as np


class DimensionError(ValueError):
    pass


class Tensor:
    __slots__ = ("values",)

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape})"


class Parameter(Tensor):
    __slots__ = ("grad", "name")

    def __init__(self, values, name: str):
        super().__init__(values)
        self.grad = np.zeros_like(self.values)
        self.name = name

    @property
    def tensor(self) -> Tensor:
        return self

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.values.shape})"


_ACTIVE: list["ComputeRecord"] = []


class ComputeRecord:
    """Tape of primitive ops from one forward pass, replayable in reverse."""

    def __init__(self) -> None:
        self._steps: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "ComputeRecord":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.pop()

    def __len__(self) -> int:
        return len(self._steps)

    def _push(self, out: Tensor, adjoint) -> None:
        self._steps.append((out, adjoint))


def _tape() -> ComputeRecord | None:
    return _ACTIVE[-1] if _ACTIVE else None


def backward(loss: Tensor, record: ComputeRecord) -> None:
    """Accumulate d(loss)/d(param) into every participating Parameter.

    The loss must be scalar and must have been produced on ``record``.
    Gradients add onto whatever is already in ``param.grad`` so batches can
    accumulate across calls; call ``zero_gradients`` between batches.
    """
    if loss.values.ndim != 0 and loss.values.size != 1:
        raise DimensionError(f"loss must be scalar, got shape {loss.values.shape}")
    if len(record) == 0:
        raise ValueError("empty compute record")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}

    def accumulate(target: Tensor, grad: np.ndarray, row: int | None = None) -> None:
        if isinstance(target, Parameter):
            if row is None:
                target.grad += grad
            else:
                target.grad[row] += grad
            return
        key = id(target)
        if row is not None:  # lookup from a plain tensor: widen to full shape
            full = np.zeros_like(target.values)
            full[row] = grad
            grad = full
        if key in grads:
            grads[key] = grads[key] + grad
        else:
            grads[key] = grad

    for out, adjoint in reversed(record._steps):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        adjoint(g, accumulate)


def zero_gradients(params) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def embedding_lookup(table: Parameter, index: int) -> Tensor:
    rows = table.values.shape[0]
    if not 0 <= index < rows:
        raise IndexError(f"embedding index {index} out of range [0, {rows})")
    out = Tensor(table.values[index].copy())
    tape = _tape()
    if tape is not None:
        tape._push(out, lambda g, acc: acc(table, g, row=index))
    return out


def affine(x: Tensor, weight: Parameter, bias: Parameter) -> Tensor:
    if x.values.ndim != 1 or weight.values.ndim != 2:
        raise DimensionError(
            f"affine expects vector and matrix, got {x.shape} and {weight.shape}"
        )
    if weight.values.shape[1] != x.values.shape[0]:
        raise DimensionError(
            f"affine shape mismatch: weight {weight.shape} vs input {x.shape}"
        )
    if bias.values.shape != (weight.values.shape[0],):
        raise DimensionError(
            f"affine bias shape {bias.shape} does not match weight {weight.shape}"
        )
    out = Tensor(weight.values @ x.values + bias.values)
    tape = _tape()
    if tape is not None:
        xv = x.values

        def adjoint(g, acc):
            acc(weight, np.outer(g, xv))
            acc(bias, g)
            acc(x, weight.values.T @ g)

        tape._push(out, adjoint)
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.values, 0.0))
    tape = _tape()
    if tape is not None:
        mask = x.values > 0.0
        tape._push(out, lambda g, acc: acc(x, g * mask))
    return out


def concat(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise DimensionError("concat of empty list")
    out = Tensor(np.concatenate([p.values for p in parts]))
    tape = _tape()
    if tape is not None:
        sizes = [p.values.shape[0] for p in parts]

        def adjoint(g, acc):
            offset = 0
            for p, size in zip(parts, sizes):
                acc(p, g[offset : offset + size])
                offset += size

        tape._push(out, adjoint)
    return out


def neighbor_sum(node_tensors: list[Tensor], width: int | None = None) -> Tensor:
    """Elementwise sum over a (possibly empty) list of same-shape tensors.

    An empty list yields a zero vector of ``width`` (the isolated-node
    convention); width is then required.
    """
    if not node_tensors:
        if width is None:
            raise DimensionError("neighbor_sum of empty list needs an explicit width")
        return Tensor(np.zeros(width))
    shape = node_tensors[0].values.shape
    for t in node_tensors[1:]:
        if t.values.shape != shape:
            raise DimensionError(
                f"neighbor_sum shape mismatch: {t.values.shape} vs {shape}"
            )
    out = Tensor(np.sum([t.values for t in node_tensors], axis=0))
    tape = _tape()
    if tape is not None:

        def adjoint(g, acc):
            for t in node_tensors:
                acc(t, g)

        tape._push(out, adjoint)
    return out


def scale(x: Tensor, alpha: float) -> Tensor:
    out = Tensor(x.values * alpha)
    tape = _tape()
    if tape is not None:
        tape._push(out, lambda g, acc: acc(x, g * alpha))
    return out


def shift(x: Tensor, offset) -> Tensor:
    """Add a constant (scalar or array) to a tensor; no gradient to offset."""
    out = Tensor(x.values + np.asarray(offset, dtype=np.float64))
    tape = _tape()
    if tape is not None:
        tape._push(out, lambda g, acc: acc(x, g))
    return out


def component(x: Tensor, i: int) -> Tensor:
    if x.values.ndim != 1:
        raise DimensionError(f"component expects a vector, got shape {x.shape}")
    out = Tensor(x.values[i])
    tape = _tape()
    if tape is not None:

        def adjoint(g, acc):
            full = np.zeros_like(x.values)
            full[i] = g
            acc(x, full)

        tape._push(out, adjoint)
    return out


def stack(scalars: list[Tensor]) -> Tensor:
    if not scalars:
        raise DimensionError("stack of empty list")
    out = Tensor(np.array([s.values for s in scalars]))
    tape = _tape()
    if tape is not None:

        def adjoint(g, acc):
            for k, s in enumerate(scalars):
                acc(s, g[k])

        tape._push(out, adjoint)
    return out


def absolute(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.values))
    tape = _tape()
    if tape is not None:
        sign = np.sign(x.values)
        tape._push(out, lambda g, acc: acc(x, g * sign))
    return out


def mean(x: Tensor) -> Tensor:
    out = Tensor(np.mean(x.values))
    tape = _tape()
    if tape is not None:
        n = x.values.size
        tape._push(out, lambda g, acc: acc(x, np.full_like(x.values, g / n)))
    return out


def mean_abs_error(preds: list[Tensor], targets: list[float]) -> Tensor:
    """Mean |pred - target| over scalar predictions; the L1 training loss."""
    if len(preds) != len(targets):
        raise DimensionError(
            f"{len(preds)} predictions vs {len(targets)} targets"
        )
    return mean(absolute(shift(stack(preds), [-t for t in targets])))


# ---------------------------------------------------------------------------
# Parameter initialization and optimization
# ---------------------------------------------------------------------------


def uniform_init(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, name: str
) -> Parameter:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return Parameter(rng.uniform(-bound, bound, size=shape), name)


class Adam:
    """Adam with the usual defaults; operates in place on Parameters."""

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.values) for p in self.params]
        self._v = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        zero_gradients(self.params)
