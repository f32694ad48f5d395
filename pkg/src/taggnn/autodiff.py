"""Reverse-mode automatic differentiation over dense float64 arrays.

A small tape-based engine: every operation produces a new :class:`Tensor`
that remembers its inputs and a closure computing the local backward step.
The op set is deliberately tiny -- just what the tagging models need.
Everything is float64 and single-threaded, so a fixed seed reproduces a
training run bit for bit.
"""

import itertools

import numpy as np

_ids = itertools.count()


class Tensor:
    """A float64 array plus its node in the recorded computation graph.

    Leaf tensors created with ``requires_grad=True`` are trainable
    parameters; everything else is either a constant or an op output.
    ``grad`` is allocated lazily during :func:`backward`.
    """

    __slots__ = ("data", "grad", "op", "inputs", "requires_grad", "_backward", "_id")

    def __init__(self, data, requires_grad=False, op="leaf", inputs=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.op = op
        self.inputs = tuple(inputs)
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._id = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # operator sugar; everything reduces to add/mul on the tape
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _from_op(data, op, inputs, backward_fn):
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs), op=op, inputs=inputs)
    if out.requires_grad:
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _from_op(data, "add", (a, b), back)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _from_op(data, "mul", (a, b), back)


def matmul(a, b, transpose_b=False):
    a, b = _wrap(a), _wrap(b)
    data = a.data @ (b.data.T if transpose_b else b.data)

    def back(g):
        if transpose_b:
            if a.requires_grad:
                a.accumulate_grad(g @ b.data)
            if b.requires_grad:
                b.accumulate_grad(g.T @ a.data)
        else:
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)

    return _from_op(data, "matmul", (a, b), back)


def rowwise_dot(a, b):
    """Per-row dot product: sum of the elementwise product over the last axis."""
    a, b = _wrap(a), _wrap(b)
    data = np.sum(a.data * b.data, axis=-1)

    def back(g):
        ge = np.expand_dims(g, -1)
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(ge * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(ge * a.data, b.data.shape))

    return _from_op(data, "rowwise_dot", (a, b), back)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _from_op(data, "concat", tuple(tensors), back)


def relu(x):
    x = _wrap(x)
    data = np.maximum(x.data, 0.0)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0))

    return _from_op(data, "relu", (x,), back)


def leaky_relu(x, negative_slope=0.2):
    x = _wrap(x)
    data = np.where(x.data > 0, x.data, negative_slope * x.data)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * np.where(x.data > 0, 1.0, negative_slope))

    return _from_op(data, "leaky_relu", (x,), back)


def _sigmoid(x):
    # two-branch form: never exponentiates a large positive argument
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    x = _wrap(x)
    data = _sigmoid(x.data)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * data * (1.0 - data))

    return _from_op(data, "sigmoid", (x,), back)


def mean(x):
    x = _wrap(x)
    data = np.mean(x.data)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, g / x.data.size))

    return _from_op(data, "mean", (x,), back)


def segment_softmax(scores, segments):
    """Softmax normalized independently within each segment.

    ``scores`` is a vector (or column vector); ``segments`` assigns each
    entry a non-negative integer segment id.  Within every segment the
    outputs are positive and sum to 1; the max is subtracted before
    exponentiation for numerical stability.
    """
    scores = _wrap(scores)
    segments = np.asarray(segments)
    if segments.ndim != 1 or not np.issubdtype(segments.dtype, np.integer):
        raise ValueError("segments must be a 1-D integer array")
    flat = scores.data.reshape(-1)
    if flat.shape[0] != segments.shape[0]:
        raise ValueError(
            f"scores ({flat.shape[0]}) and segments ({segments.shape[0]}) differ in length"
        )
    if flat.size == 0:
        return _from_op(np.empty_like(scores.data), "segment_softmax", (scores,), lambda g: None)
    if segments.min() < 0:
        raise ValueError("segment ids must be non-negative")

    nseg = int(segments.max()) + 1
    seg_max = np.full(nseg, -np.inf)
    np.maximum.at(seg_max, segments, flat)
    e = np.exp(flat - seg_max[segments])
    denom = np.zeros(nseg)
    np.add.at(denom, segments, e)
    y = e / denom[segments]
    data = y.reshape(scores.data.shape)

    def back(g):
        if scores.requires_grad:
            gf = g.reshape(-1)
            seg_dot = np.zeros(nseg)
            np.add.at(seg_dot, segments, gf * y)
            gx = y * (gf - seg_dot[segments])
            scores.accumulate_grad(gx.reshape(scores.data.shape))

    return _from_op(data, "segment_softmax", (scores,), back)


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy between logits and 0/1 labels.

    Uses the log-sum-exp form ``max(x,0) - x*y + log1p(exp(-|x|))`` so it
    stays finite for arbitrarily large logits.  Labels are constants.
    """
    logits = _wrap(logits)
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels, dtype=np.float64)
    if y.shape != logits.data.shape:
        raise ValueError(f"logit shape {logits.data.shape} != label shape {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    x = logits.data
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    data = np.mean(per)

    def back(g):
        if logits.requires_grad:
            logits.accumulate_grad((_sigmoid(x) - y) * (g / x.size))

    return _from_op(data, "bce_with_logits", (logits,), back)


def dropout(x, p, rng):
    """Inverted dropout: zero with probability ``p``, scale kept entries by 1/(1-p)."""
    x = _wrap(x)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    data = x.data * keep

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * keep)

    return _from_op(data, "dropout", (x,), back)


def gather_rows(x, index):
    x = _wrap(x)
    index = np.asarray(index, dtype=np.int64)
    data = x.data[index]

    def back(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, index, g)
            x.accumulate_grad(gx)

    return _from_op(data, "gather_rows", (x,), back)


def scatter_add_rows(values, index, num_rows):
    """Sum value rows into ``num_rows`` output rows grouped by ``index``."""
    values = _wrap(values)
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != values.data.shape[0]:
        raise ValueError("one index per value row required")
    data = np.zeros((num_rows,) + values.data.shape[1:])
    np.add.at(data, index, values.data)

    def back(g):
        if values.requires_grad:
            values.accumulate_grad(g[index])

    return _from_op(data, "scatter_add_rows", (values,), back)


def where_rows(mask, a, b):
    """Row-wise select: rows of ``a`` where ``mask`` holds, rows of ``b`` elsewhere.

    Unselected rows are copied bit for bit, which is what lets isolated
    graph nodes pass through a propagation layer exactly unchanged.
    """
    a, b = _wrap(a), _wrap(b)
    mask = np.asarray(mask, dtype=bool)
    if a.data.shape != b.data.shape:
        raise ValueError("branches must share a shape")
    if mask.shape != (a.data.shape[0],):
        raise ValueError("mask must have one entry per row")
    col = mask[:, None] if a.data.ndim > 1 else mask
    data = np.where(col, a.data, b.data)

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(np.where(col, g, 0.0))
        if b.requires_grad:
            b.accumulate_grad(np.where(col, 0.0, g))

    return _from_op(data, "where_rows", (a, b), back)


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss node.

    Every parameter reachable from ``loss`` receives its exact gradient in
    ``.grad``; unreachable parameters are simply left untouched (treated as
    zero).  Accumulation order is fixed by tensor creation order, so repeated
    runs are bit-identical.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    seen = {loss._id}
    nodes = [loss]
    stack = [loss]
    while stack:
        node = stack.pop()
        for parent in node.inputs:
            if parent.requires_grad and parent._id not in seen:
                seen.add(parent._id)
                nodes.append(parent)
                stack.append(parent)

    loss.accumulate_grad(np.ones_like(loss.data))
    for node in sorted(nodes, key=lambda t: t._id, reverse=True):
        if node._backward is not None:
            node._backward(node.grad)


def zero_grads(params):
    for p in params:
        p.zero_grad()


class Adam:
    """Bias-corrected Adam over a fixed parameter list; updates in place.

    With zero gradients the update is exactly zero, so the optimizer is the
    identity on untouched parameters.
    """

    def __init__(self, params, lr=0.003, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else 0.0
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        zero_grads(self.params)


def adam_step(params, grads, state):
    """Functional wrapper: assign ``grads`` to ``params`` and take one Adam step."""
    for p, g in zip(params, grads):
        p.grad = None if g is None else np.asarray(g, dtype=np.float64)
    state.step()
    return params, state


def finite_difference_check(loss_fn, params, eps=1e-5, analytic=None):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be a deterministic closure over ``params`` returning a
    scalar Tensor (dropout off).  The error at each coordinate is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.  Pass
    ``analytic`` to check externally supplied gradients instead of the
    engine's own.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if analytic is None:
        zero_grads(params)
        loss = loss_fn()
        if loss.data.size != 1:
            raise ValueError("loss_fn must return a scalar")
        if not np.isfinite(loss.data):
            raise FloatingPointError("non-finite loss in gradient check")
        backward(loss)
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    max_err = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = np.asarray(a, dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn().data)
            flat[i] = orig - eps
            f_minus = float(loss_fn().data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError("non-finite loss in gradient check")
            numeric = (f_plus - f_minus) / (2 * eps)
            err = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]), abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
