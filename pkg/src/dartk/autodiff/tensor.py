"""Tensors and the recording tape."""
from __future__ import annotations

import numpy as np

from ..errors import NonScalarLoss


class Tensor:
    """Dense array plus optional gradient.

    ``value`` is float32 by default; float64 tensors (shadow mode) flow
    through every operator unchanged and are used for gradient checks.
    """

    __slots__ = ("value", "requires_grad", "grad", "name")

    def __init__(self, value, requires_grad: bool = False, dtype=None, name: str = ""):
        if dtype is None:
            dtype = value.dtype if isinstance(value, np.ndarray) and value.dtype in (np.float32, np.float64) else np.float32
        self.value = np.asarray(value, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self):
        return self.value

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # sugar so small expressions read naturally in tests
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of operations executed while the tape is active.

    Use as a context manager. Nodes are appended in execution order, so
    walking the list backwards is a valid reverse topological order.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[_Node] = []
        self._tracked: set[int] = set()

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    @classmethod
    def current(cls):
        return cls._stack[-1] if cls._stack else None

    def tracks(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked

    def record(self, out: Tensor, inputs, backward) -> None:
        self.nodes.append(_Node(out, tuple(inputs), backward))
        self._tracked.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf.

        Calling it twice adds the gradients again; intermediates are kept.
        Gradients are plain arrays, so higher-order derivatives are not
        available.
        """
        if loss.value.size != 1:
            raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not self.tracks(t):
                    continue
                k = id(t)
                if k in grads:
                    grads[k] = grads[k] + gi
                else:
                    grads[k] = gi
        for node in self.nodes:
            for t in node.inputs:
                g = grads.pop(id(t), None)
                if g is not None and t.requires_grad:
                    g = g.astype(t.dtype, copy=False)
                    t.grad = g if t.grad is None else t.grad + g
        if loss.requires_grad and id(loss) in grads:
            g = grads.pop(id(loss))
            loss.grad = g if loss.grad is None else loss.grad + g


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    tape = tape or Tape.current()
    if tape is None:
        raise RuntimeError("no active tape; run the forward pass inside `with Tape():`")
    tape.backward(loss)
