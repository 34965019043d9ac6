"""Batched reverse-mode differentiation.

Nodes hold whole batch matrices (rows = samples), so one recorded op costs a
single numpy call.  Only nodes that depend on a parameter are recorded;
anything built purely from constants is folded eagerly into a constant
:class:`Var`.

    tape = Tape()
    W = tape.parameter("W", np.ones((1, 1)))
    y = tape.reduce("mean_square", tape.affine(W, None, x))
    grads = tape.backward(y)          # {"W": array}
"""

import numpy as np

from .errors import ConfigurationError, NumericDomainError, TrainingError, UsageError

ACTIVATIONS = ("relu_cubed", "tanh")
ELEMENTWISE = ("add", "sub", "mul", "div", "neg", "scale", "pow_const",
               "exp", "sin", "cos", "abs_norm")
REDUCTIONS = ("mean_square", "sum", "mean")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Var:
    """A value living on a tape.  ``index`` is None for constants."""

    __slots__ = ("tape", "value", "index")
    __array_ufunc__ = None  # make ndarray <op> Var dispatch to Var.__r<op>__

    def __init__(self, tape, value, index=None):
        self.tape = tape
        self.value = value
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def requires_grad(self):
        return self.index is not None

    def __repr__(self):
        tag = "param" if self.requires_grad else "const"
        return f"Var({tag}, shape={self.shape})"

    def __add__(self, other):
        return self.tape.elementwise("add", self, other)

    def __radd__(self, other):
        return self.tape.elementwise("add", other, self)

    def __sub__(self, other):
        return self.tape.elementwise("sub", self, other)

    def __rsub__(self, other):
        return self.tape.elementwise("sub", other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.tape.elementwise("scale", self, c=float(other))
        return self.tape.elementwise("mul", self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return self.tape.elementwise("scale", self, c=float(other))
        return self.tape.elementwise("mul", other, self)

    def __truediv__(self, other):
        if np.isscalar(other):
            if other == 0:
                raise NumericDomainError("division by zero")
            return self.tape.elementwise("scale", self, c=1.0 / float(other))
        return self.tape.elementwise("div", self, other)

    def __rtruediv__(self, other):
        return self.tape.elementwise("div", other, self)

    def __neg__(self):
        return self.tape.elementwise("neg", self)

    def __pow__(self, p):
        if not np.isscalar(p):
            raise ConfigurationError("only constant exponents are supported")
        return self.tape.elementwise("pow_const", self, p=float(p))


class Tape:
    """Single-use recording of batch-matrix ops.

    ``backward`` may be called once per tape; record a fresh tape for every
    forward pass.
    """

    def __init__(self):
        self.nodes = []          # (kind, parent indices, vjp)
        self.values = []
        self._params = {}        # key -> node index
        self._consumed = False
        self._memo = {}

    # -- leaves ------------------------------------------------------------
    def constant(self, value):
        return Var(self, np.asarray(value, dtype=np.float64))

    def parameter(self, key, value):
        """Register (or fetch) a trainable leaf under ``key``."""
        if key in self._params:
            idx = self._params[key]
            return Var(self, self.values[idx], idx)
        value = np.array(value, dtype=np.float64)
        idx = self._push("parameter", value, (), None)
        self._params[key] = idx
        return Var(self, value, idx)

    @property
    def parameter_keys(self):
        return list(self._params)

    def memo(self, key, build):
        """Per-tape cache used to bind a parameter vector only once."""
        if key not in self._memo:
            self._memo[key] = build()
        return self._memo[key]

    # -- plumbing ----------------------------------------------------------
    def _push(self, kind, value, parents, vjp):
        self.nodes.append((kind, parents, vjp))
        self.values.append(value)
        return len(self.values) - 1

    def _lift(self, x):
        if isinstance(x, Var):
            if x.tape is not self:
                raise UsageError("Var belongs to a different tape")
            return x
        return self.constant(x)

    def _record(self, kind, value, inputs, vjp):
        # non-finite values are caught at reductions, where the caller can
        # still report the offending sample
        live = [v for v in inputs if v.requires_grad]
        if not live:
            return Var(self, value)
        parents = tuple(v.index if v.requires_grad else -1 for v in inputs)
        return Var(self, value, self._push(kind, value, parents, vjp))

    # -- ops ---------------------------------------------------------------
    def affine(self, W, b, x):
        """x @ W.T + b for x of shape (batch, n_in), W (n_out, n_in), b (n_out,)."""
        W, x = self._lift(W), self._lift(x)
        Wv, xv = W.value, x.value
        if Wv.ndim != 2 or xv.ndim != 2 or Wv.shape[1] != xv.shape[1]:
            raise ConfigurationError(
                f"affine shape mismatch: W{Wv.shape} x{xv.shape}")
        out = xv @ Wv.T
        inputs = [W, x]
        if b is not None:
            b = self._lift(b)
            if b.value.shape != (Wv.shape[0],):
                raise ConfigurationError(
                    f"affine bias shape {b.value.shape} != ({Wv.shape[0]},)")
            out = out + b.value
            inputs.append(b)

        def vjp(g):
            grads = [g.T @ xv, g @ Wv]
            if len(inputs) == 3:
                grads.append(g.sum(axis=0))
            return grads

        return self._record("affine", out, inputs, vjp)

    def activation(self, kind, x):
        x = self._lift(x)
        xv = x.value
        if kind == "relu_cubed":
            z = np.maximum(xv, 0.0)
            zz = z * z
            out = zz * z
            deriv = 3.0 * zz
        elif kind == "tanh":
            out = np.tanh(xv)
            deriv = 1.0 - out ** 2
        else:
            raise ConfigurationError(f"unknown activation {kind!r}")
        return self._record(kind, out, [x], lambda g: [g * deriv])

    def elementwise(self, kind, *inputs, c=None, p=None):
        xs = [self._lift(v) for v in inputs]
        if kind in ("add", "sub", "mul", "div"):
            if len(xs) != 2:
                raise ConfigurationError(f"{kind} takes two operands")
            a, b = xs
            av, bv = a.value, b.value
            try:
                np.broadcast_shapes(av.shape, bv.shape)
            except ValueError as exc:
                raise ConfigurationError(str(exc)) from None
            sa, sb = av.shape, bv.shape
            if kind == "add":
                out = av + bv
                vjp = lambda g: [_unbroadcast(g, sa), _unbroadcast(g, sb)]
            elif kind == "sub":
                out = av - bv
                vjp = lambda g: [_unbroadcast(g, sa), _unbroadcast(-g, sb)]
            elif kind == "mul":
                out = av * bv
                vjp = lambda g: [_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)]
            else:
                if np.any(bv == 0):
                    raise NumericDomainError("division by zero")
                out = av / bv
                vjp = lambda g: [_unbroadcast(g / bv, sa),
                                 _unbroadcast(-g * out / bv, sb)]
            return self._record(kind, out, xs, vjp)

        if len(xs) != 1:
            raise ConfigurationError(f"{kind} takes one operand")
        (a,) = xs
        av = a.value
        if kind == "neg":
            return self._record(kind, -av, xs, lambda g: [-g])
        if kind == "scale":
            return self._record(kind, c * av, xs, lambda g: [c * g])
        if kind == "pow_const":
            if p != int(p) and np.any(av < 0):
                raise NumericDomainError(
                    f"fractional power {p} of a negative base")
            if p < 0 and np.any(av == 0):
                raise NumericDomainError(f"negative power {p} of zero")
            if p == 2.0:
                out = av * av
                return self._record(kind, out, xs, lambda g: [2.0 * g * av])
            out = av ** p
            if p == 1.0:
                return self._record(kind, out, xs, lambda g: [g])
            return self._record(kind, out, xs,
                                lambda g: [g * p * av ** (p - 1.0)])
        if kind == "exp":
            out = np.exp(av)
            return self._record(kind, out, xs, lambda g: [g * out])
        if kind == "sin":
            return self._record(kind, np.sin(av), xs, lambda g: [g * np.cos(av)])
        if kind == "cos":
            return self._record(kind, np.cos(av), xs, lambda g: [-g * np.sin(av)])
        if kind == "abs_norm":
            if av.ndim != 2:
                raise ConfigurationError("abs_norm expects a batch matrix")
            out = np.sqrt((av * av).sum(axis=1, keepdims=True))
            safe = np.where(out > 0, out, 1.0)
            return self._record(kind, out, xs,
                                lambda g: [g * np.where(out > 0, av / safe, 0.0)])
        raise ConfigurationError(f"unknown elementwise op {kind!r}")

    def reduce(self, kind, x):
        x = self._lift(x)
        xv = x.value
        if xv.size == 0:
            raise ConfigurationError("reduction over an empty batch")
        if not np.all(np.isfinite(xv)):
            raise TrainingError(f"non-finite value entering {kind} reduction")
        n = xv.size
        if kind == "mean_square":
            out = np.asarray(np.mean(xv * xv))
            vjp = lambda g: [g * (2.0 / n) * xv]
        elif kind == "sum":
            out = np.asarray(xv.sum())
            vjp = lambda g: [np.broadcast_to(g, xv.shape)]
        elif kind == "mean":
            out = np.asarray(xv.mean())
            vjp = lambda g: [np.broadcast_to(g / n, xv.shape)]
        else:
            raise ConfigurationError(f"unknown reduction {kind!r}")
        return self._record(kind, out, [x], vjp)

    # -- structural ops ----------------------------------------------------
    def block(self, theta, start, shape):
        """View a contiguous slice of a flat parameter vector as ``shape``."""
        theta = self._lift(theta)
        size = int(np.prod(shape))
        total = theta.value.shape
        out = theta.value[start:start + size].reshape(shape)

        def vjp(g):
            full = np.zeros(total)
            full[start:start + size] = g.reshape(-1)
            return [full]

        return self._record("block", out, [theta], vjp)

    def take_rows(self, x, start, stop):
        x = self._lift(x)
        full_shape = x.value.shape
        out = x.value[start:stop]

        def vjp(g):
            full = np.zeros(full_shape)
            full[start:stop] = g
            return [full]

        return self._record("take_rows", out, [x], vjp)

    def split_rows(self, x, sizes):
        """Split a batch into consecutive chunks; one backward node for all."""
        x = self._lift(x)
        bounds = np.cumsum([0] + list(sizes))
        if bounds[-1] != x.value.shape[0]:
            raise ConfigurationError("split sizes do not cover the batch")
        return [self.take_rows(x, int(bounds[i]), int(bounds[i + 1]))
                for i in range(len(sizes))]

    def concat_rows(self, parts):
        xs = [self._lift(v) for v in parts]
        out = np.concatenate([v.value for v in xs], axis=0)
        bounds = np.cumsum([0] + [v.value.shape[0] for v in xs])

        def vjp(g):
            return [g[bounds[i]:bounds[i + 1]] for i in range(len(xs))]

        return self._record("concat_rows", out, xs, vjp)

    # -- reverse sweep -----------------------------------------------------
    def backward(self, root):
        """Gradients of scalar ``root`` w.r.t. every registered parameter."""
        if self._consumed:
            raise UsageError("backward already ran on this tape; record again")
        root = self._lift(root)
        if root.value.size != 1:
            raise UsageError("backward needs a scalar root")
        self._consumed = True
        grads = {k: np.zeros_like(self.values[i]) for k, i in self._params.items()}
        if not root.requires_grad:
            return grads
        adj = [None] * (root.index + 1)
        adj[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            kind, parents, vjp = self.nodes[i]
            if vjp is None:
                continue
            for parent, pg in zip(parents, vjp(g)):
                if parent < 0:
                    continue
                if adj[parent] is None:
                    adj[parent] = np.array(pg, dtype=np.float64)
                else:
                    adj[parent] = adj[parent] + pg
        for key, i in self._params.items():
            if i <= root.index and adj[i] is not None:
                grads[key] = adj[i].reshape(self.values[i].shape)
        return grads
