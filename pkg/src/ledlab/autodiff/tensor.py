"""Tensor and tape for a small reverse-mode differentiation engine.

Every operation returns a new :class:`Tensor` that remembers its parents and
a closure mapping the upstream gradient to parent gradients. Calling
:func:`backward` on a scalar sorts the recorded graph topologically (the
:class:`Tape`) and walks it once in reverse.
"""
from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

_ids = itertools.count()


class Tensor:
    """A float64 array with an optional gradient slot.

    Values are treated as immutable once the tensor has been created; only
    ``grad`` is ever written to after construction.
    """

    __slots__ = ("values", "grad", "requires_grad", "node_id", "_parents", "_backward", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None,
                 _parents: Sequence["Tensor"] = (), _backward: Callable | None = None):
        values = np.asarray(values, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.values = values if values.flags.c_contiguous else values.copy()
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids)
        self._parents = tuple(_parents)
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; the real definitions live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __sub__(self, other):
        from . import ops
        return ops.add(self, ops.scale(as_tensor(other), -1.0))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(values: np.ndarray, parents: Iterable[Tensor], backward: Callable) -> Tensor:
    """Wrap an op result; the backward closure is kept only if a parent needs it.

    ``backward(g)`` must return one gradient (or ``None``) per parent, in order.
    """
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(values, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(values)


class Tape:
    """Topologically ordered record of the graph reachable from a root."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        # iterative post-order DFS; recursion would overflow on long LSTM graphs
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if node.node_id in seen or not node.requires_grad:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and p.node_id not in seen:
                    stack.append((p, False))
        self._consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def run(self, seed_grad: np.ndarray) -> None:
        if self._consumed:
            raise RuntimeError("tape already consumed; call reset() before reuse")
        self._consumed = True
        grads: dict[int, np.ndarray] = {self.root.node_id: seed_grad}
        for node in reversed(self.nodes):
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            if node._backward is None:
                # leaf: accumulate into the user-visible slot
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise AssertionError(
                        f"gradient shape {pg.shape} does not match parent {parent.shape}")
                prev = grads.get(parent.node_id)
                grads[parent.node_id] = pg if prev is None else prev + pg

    def reset(self) -> None:
        self._consumed = False


def backward(loss: Tensor) -> Tape:
    """Populate ``.grad`` on every leaf tensor with ``requires_grad`` set.

    Gradients accumulate into existing ``.grad`` arrays, so callers zero them
    between optimisation steps.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape(loss)
    if loss.requires_grad:
        tape.run(np.ones_like(loss.values))
    return tape
