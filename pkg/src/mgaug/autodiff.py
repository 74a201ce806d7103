"""Minimal dense-tensor reverse-mode autodiff.

A Tape records every operation of a single forward pass as a Wengert list;
``Tape.backward`` then walks the list once in reverse insertion order and
accumulates adjoints. The engine is deliberately small: float64 everywhere,
dense arrays only, first-order gradients only. Each forward pass builds a
fresh tape; tapes are never reused across passes and are not thread-safe.

Every operation validates its output for NaN/Inf and raises ``NonFiniteError``
instead of letting bad values propagate silently. Gradient computation is
bit-deterministic: identical inputs produce identical tapes, and the fixed
reverse walk produces identical gradients.

Typical use::

    tape = Tape()
    x = tape.leaf(batch)            # constant, no gradient
    w = tape.param(weights)         # tracked, gradient collected
    b = tape.param(bias)
    h = tape.relu(tape.linear(x, w, b))
    loss = tape.cross_entropy(h, labels)
    gw, gb = tape.backward(loss)    # grads in param registration order
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operands are dimensionally incompatible or violate an op contract."""


class NonFiniteError(FloatingPointError):
    """An engine-produced value contains NaN or Inf."""


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def _check_finite(arr: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value produced by {where}")
    return arr


class Tensor:
    """Handle to one node on a tape: a float64 ndarray plus its node id.

    ``data`` is the forward value; ``node`` indexes into the owning tape's
    Wengert list. Tensors are created by Tape methods only.
    """

    __slots__ = ("data", "node", "tape")

    def __init__(self, data: np.ndarray, node: int, tape: "Tape"):
        self.data = data
        self.node = node
        self.tape = tape

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, node={self.node})"


class Tape:
    """Wengert list of one forward pass.

    Nodes are appended in execution order, so reverse insertion order is a
    valid reverse-topological order and ``backward`` visits each node exactly
    once. Leaves carry no backward rule. Parameters are leaves whose gradients
    are collected and returned by ``backward`` in registration order.
    """

    def __init__(self):
        self._values: list[np.ndarray] = []
        self._inputs: list[tuple[int, ...]] = []
        self._backs: list = []      # callable(grad) -> tuple of input grads, or None
        self._param_ids: list[int] = []

    def __len__(self) -> int:
        return len(self._values)

    # ---- node plumbing ----

    def _record(self, value: np.ndarray, inputs: tuple[int, ...], back) -> Tensor:
        self._values.append(value)
        self._inputs.append(inputs)
        self._backs.append(back)
        return Tensor(value, len(self._values) - 1, self)

    def _own(self, t: Tensor, op: str) -> Tensor:
        if t.tape is not self:
            raise ShapeError(f"{op}: operand belongs to a different tape")
        return t

    # ---- leaves ----

    def leaf(self, data) -> Tensor:
        """Record a constant input. No gradient flows into it."""
        arr = _check_finite(_as_f64(data), "leaf")
        return self._record(arr, (), None)

    def param(self, data) -> Tensor:
        """Record a parameter leaf whose gradient backward() will return."""
        arr = _check_finite(_as_f64(data), "param")
        t = self._record(arr, (), None)
        self._param_ids.append(t.node)
        return t

    # ---- operations ----

    def linear(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """Affine map ``x @ w + b`` for x (B,I), w (I,O), b (O,)."""
        self._own(x, "linear"); self._own(w, "linear"); self._own(b, "linear")
        xv, wv, bv = x.data, w.data, b.data
        if xv.ndim != 2 or wv.ndim != 2 or bv.ndim != 1:
            raise ShapeError(f"linear: need x(B,I) w(I,O) b(O), got {xv.shape} {wv.shape} {bv.shape}")
        if xv.shape[1] != wv.shape[0] or wv.shape[1] != bv.shape[0]:
            raise ShapeError(f"linear: incompatible shapes {xv.shape} {wv.shape} {bv.shape}")
        out = xv @ wv + bv

        def back(g):
            return g @ wv.T, xv.T @ g, g.sum(axis=0)

        return self._record(_check_finite(out, "linear"), (x.node, w.node, b.node), back)

    def relu(self, x: Tensor) -> Tensor:
        """Elementwise max(x, 0). The subgradient at exactly 0 is 0."""
        self._own(x, "relu")
        keep = x.data > 0.0
        out = np.where(keep, x.data, 0.0)

        def back(g):
            return (np.where(keep, g, 0.0),)

        return self._record(out, (x.node,), back)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product of same-shape tensors (used for masking)."""
        self._own(a, "mul"); self._own(b, "mul")
        if a.data.shape != b.data.shape:
            raise ShapeError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")
        av, bv = a.data, b.data

        def back(g):
            return g * bv, g * av

        return self._record(_check_finite(av * bv, "mul"), (a.node, b.node), back)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum of same-shape tensors."""
        self._own(a, "add"); self._own(b, "add")
        if a.data.shape != b.data.shape:
            raise ShapeError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")

        def back(g):
            return g, g

        return self._record(_check_finite(a.data + b.data, "add"), (a.node, b.node), back)

    def scale(self, x: Tensor, c: float) -> Tensor:
        """Multiply by a python scalar constant."""
        self._own(x, "scale")
        c = float(c)

        def back(g):
            return (g * c,)

        return self._record(_check_finite(x.data * c, "scale"), (x.node,), back)

    def tsum(self, x: Tensor) -> Tensor:
        """Full reduction to a scalar."""
        self._own(x, "tsum")
        shape = x.data.shape

        def back(g):
            return (np.broadcast_to(g, shape).astype(np.float64, copy=True),)

        return self._record(_check_finite(np.asarray(x.data.sum()), "tsum"), (x.node,), back)

    def cross_entropy(self, logits: Tensor, labels) -> Tensor:
        """Mean softmax cross-entropy, max-subtraction stabilized.

        ``labels`` is an integer vector of length B with entries in [0, C);
        an out-of-range label raises ValueError. Returns a scalar tensor.
        """
        self._own(logits, "cross_entropy")
        z = logits.data
        if z.ndim != 2:
            raise ShapeError(f"cross_entropy: logits must be 2-d, got {z.shape}")
        y = np.asarray(labels)
        if y.ndim != 1 or y.shape[0] != z.shape[0]:
            raise ShapeError(f"cross_entropy: labels shape {y.shape} does not match batch {z.shape[0]}")
        if not np.issubdtype(y.dtype, np.integer):
            raise ValueError("cross_entropy: labels must be integers")
        if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
            raise ValueError(f"cross_entropy: label out of range [0, {z.shape[1]})")
        zs = z - z.max(axis=1, keepdims=True)
        ez = np.exp(zs)
        denom = ez.sum(axis=1, keepdims=True)
        logp = zs - np.log(denom)
        n = z.shape[0]
        loss = -logp[np.arange(n), y].mean()
        p = ez / denom

        def back(g):
            gz = p.copy()
            gz[np.arange(n), y] -= 1.0
            gz *= float(g) / n
            return (gz,)

        return self._record(_check_finite(np.asarray(loss), "cross_entropy"), (logits.node,), back)

    def squared_error(self, pred: Tensor, target) -> Tensor:
        """Mean squared error against a constant target of the same shape."""
        self._own(pred, "squared_error")
        t = _as_f64(target)
        if t.shape != pred.data.shape:
            raise ShapeError(f"squared_error: target shape {t.shape} vs pred {pred.data.shape}")
        diff = pred.data - t
        n = max(diff.size, 1)

        def back(g):
            return (diff * (2.0 * float(g) / n),)

        return self._record(_check_finite(np.asarray((diff * diff).mean()), "squared_error"),
                            (pred.node,), back)

    def proto_logits(self, support_emb: Tensor, query_emb: Tensor, support_labels,
                     n_classes: int) -> Tensor:
        """Negative squared Euclidean distances to class-mean prototypes.

        Prototypes are per-class means of the support embeddings; the logit for
        query q and class c is -||query_q - proto_c||^2. Gradients flow into
        both embedding tensors. Every class in [0, n_classes) must appear at
        least once in ``support_labels``.
        """
        self._own(support_emb, "proto_logits"); self._own(query_emb, "proto_logits")
        s, q = support_emb.data, query_emb.data
        y = np.asarray(support_labels)
        if s.ndim != 2 or q.ndim != 2 or s.shape[1] != q.shape[1]:
            raise ShapeError(f"proto_logits: embedding shapes {s.shape} vs {q.shape}")
        if y.ndim != 1 or y.shape[0] != s.shape[0]:
            raise ShapeError("proto_logits: support labels do not match support rows")
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        if y.size and (y.min() < 0 or y.max() >= n_classes):
            raise ValueError(f"proto_logits: label out of range [0, {n_classes})")
        if np.any(counts == 0):
            raise ValueError("proto_logits: every class needs at least one support sample")
        protos = np.zeros((n_classes, s.shape[1]))
        np.add.at(protos, y, s)
        protos /= counts[:, None]
        # logits[i, c] = -||q_i - protos_c||^2, expanded to avoid the M x C x D temporary
        qq = (q * q).sum(axis=1, keepdims=True)
        pp = (protos * protos).sum(axis=1)
        out = -(qq - 2.0 * q @ protos.T + pp[None, :])

        def back(g):
            # d logits[i,c] / d q_i = -2 (q_i - protos_c)
            gq = -2.0 * (q * g.sum(axis=1, keepdims=True) - g @ protos)
            gp = 2.0 * (g.T @ q - protos * g.sum(axis=0)[:, None])
            gs = gp[y] / counts[y][:, None]
            return gs, gq

        return self._record(_check_finite(out, "proto_logits"),
                            (support_emb.node, query_emb.node), back)

    # ---- reverse pass ----

    def backward(self, loss: Tensor) -> list[np.ndarray]:
        """Accumulate adjoints from a scalar root.

        Visits every node at most once, in reverse insertion order, and
        returns one gradient array per registered parameter, in registration
        order. Parameters the loss never touched get zero gradients.
        """
        self._own(loss, "backward")
        if loss.data.shape != ():
            raise ShapeError(f"backward: root must be scalar, got shape {loss.data.shape}")
        adjoints: list = [None] * len(self._values)
        adjoints[loss.node] = np.ones(())
        for i in range(loss.node, -1, -1):
            g = adjoints[i]
            back = self._backs[i]
            if g is None or back is None:
                continue
            for j, gj in zip(self._inputs[i], back(g)):
                adjoints[j] = gj if adjoints[j] is None else adjoints[j] + gj
        grads = []
        for pid in self._param_ids:
            g = adjoints[pid]
            if g is None:
                g = np.zeros_like(self._values[pid])
            grads.append(_check_finite(np.asarray(g), "backward"))
        return grads
