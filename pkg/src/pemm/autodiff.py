"""Small reverse-mode autodiff over numpy arrays.

Every primitive records its parents and a vector-Jacobian closure; calling
``backward`` on a scalar walks the graph in reverse topological order.
Everything is float64.
"""
from dataclasses import dataclass, field

import numpy as np

L2_EPS = 1e-12


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}")


class NonFiniteError(AutodiffError):
    def __init__(self, op, where="forward"):
        self.op = op
        self.where = where
        super().__init__(f"{op}: non-finite value in {where} pass")


class Tensor:
    """A float64 array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._vjp = vjp
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if self.data.size != 1:
            raise ShapeError("backward", self.shape)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._vjp(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if not np.all(np.isfinite(pg)):
                    raise NonFiniteError(node.op, "backward")
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(out, parents, vjp, op):
    out = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(op)
    return Tensor(out, parents=parents, vjp=vjp, op=op)


def custom_op(op, value, parents, vjp):
    """Register a composite primitive whose gradient is supplied by the caller.

    ``vjp(g)`` must return one array (or None) per parent.
    """
    return _node(value, tuple(parents), vjp, op)


# -- primitives --------------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    A, Bm = a.data, b.data
    return _node(A @ Bm, (a, b), lambda g: (g @ Bm.T, A.T @ g), "matmul")


def add_bias(x, b):
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.data.shape != (x.shape[1],):
        raise ShapeError("add_bias", x.shape, b.shape)
    return _node(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)), "add_bias")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError("add", a.shape, b.shape)

    def vjp(g):
        ga = g if a.data.size == g.size else np.sum(g).reshape(a.shape)
        gb = g if b.data.size == g.size else np.sum(g).reshape(b.shape)
        return ga, gb

    return _node(a.data + b.data, (a, b), vjp, "add")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("mul", a.shape, b.shape)
    A, Bv = a.data, b.data
    return _node(A * Bv, (a, b), lambda g: (g * Bv, g * A), "mul")


def scale(x, c):
    x = as_tensor(x)
    return _node(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0.0  # derivative at exactly 0 is 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _node(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise NonFiniteError("log")
    X = x.data
    return _node(np.log(X), (x,), lambda g: (g / X,), "log")


def power(x, p):
    x = as_tensor(x)
    X = x.data
    p = float(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = X ** p
    return _node(out, (x,), lambda g: (g * p * X ** (p - 1.0),), "power")


def sqrt(x):
    return power(x, 0.5)


def l2_normalize(x, eps=L2_EPS):
    """Scale each row of a 2-D tensor (or a 1-D vector) to unit L2 norm."""
    x = as_tensor(x)
    X = x.data
    squeeze = X.ndim == 1
    X2 = X[None, :] if squeeze else X
    if X2.ndim != 2:
        raise ShapeError("l2_normalize", X.shape)
    norm = np.sqrt(np.sum(X2 * X2, axis=1, keepdims=True) + eps)
    Y = X2 / norm

    def vjp(g):
        G = g[None, :] if squeeze else g
        out = (G - Y * np.sum(G * Y, axis=1, keepdims=True)) / norm
        return (out[0] if squeeze else out,)

    return _node(Y[0] if squeeze else Y, (x,), vjp, "l2_normalize")


def sum(x, axis=None):
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(np.sum(x.data, axis=axis), (x,), vjp, "sum")


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis), 1.0 / n)


def sq_distances(z, c):
    """Pairwise squared Euclidean distances between rows of ``z`` (B×m) and ``c`` (K×m)."""
    z, c = as_tensor(z), as_tensor(c)
    if z.data.ndim != 2 or c.data.ndim != 2 or z.shape[1] != c.shape[1]:
        raise ShapeError("sq_distances", z.shape, c.shape)
    diff = z.data[:, None, :] - c.data[None, :, :]

    def vjp(g):
        gd = 2.0 * g[:, :, None] * diff
        return gd.sum(axis=1), -gd.sum(axis=0)

    return _node(np.sum(diff * diff, axis=2), (z, c), vjp, "sq_distances")


def pick(x, index):
    """Gather ``x[i, index[i]]`` from a 2-D tensor."""
    x = as_tensor(x)
    index = np.asarray(index)
    rows = np.arange(x.shape[0])
    if x.data.ndim != 2 or index.shape != (x.shape[0],):
        raise ShapeError("pick", x.shape, index.shape)

    def vjp(g):
        out = np.zeros(x.shape)
        out[rows, index] = g
        return (out,)

    return _node(x.data[rows, index], (x,), vjp, "pick")


def divide_rows(x, s):
    """``x[i, :] / s[i]`` for a 2-D ``x`` and 1-D ``s``."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.shape != (x.shape[0],):
        raise ShapeError("divide_rows", x.shape, s.shape)
    X, S = x.data, s.data
    out = X / S[:, None]
    return _node(out, (x, s), lambda g: (g / S[:, None], -np.sum(g * out, axis=1) / S), "divide_rows")


# -- parameter containers ----------------------------------------------------


@dataclass
class ParamSet:
    """Named float64 parameters with matching gradient accumulators."""

    values: dict = field(default_factory=dict)
    grads: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = {k: np.asarray(v, dtype=np.float64) for k, v in self.values.items()}
        for k, v in self.values.items():
            g = self.grads.get(k)
            self.grads[k] = np.zeros_like(v) if g is None else np.asarray(g, dtype=np.float64)
            if self.grads[k].shape != v.shape:
                raise ShapeError("ParamSet", v.shape, self.grads[k].shape)

    def __getitem__(self, name):
        return self.values[name]

    def __setitem__(self, name, value):
        self.values[name] = np.asarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.values[name])

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def names(self):
        return list(self.values)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self):
        return ParamSet({k: v.copy() for k, v in self.values.items()},
                        {k: g.copy() for k, g in self.grads.items()})

    def size(self):
        return int(np.sum([v.size for v in self.values.values()]))

    def checksum(self):
        import hashlib

        h = hashlib.sha256()
        for k in sorted(self.values):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.values[k]).tobytes())
        return h.hexdigest()


def forward_backward(fn, params, *inputs):
    """Evaluate ``fn(leaves, *inputs)`` and differentiate it wrt every parameter.

    ``leaves`` maps parameter names to graph leaves. ``fn`` must return a
    scalar Tensor. Returns ``(value, grads)`` where ``grads`` is a fresh
    ParamSet holding the parameter values and their exact gradients.
    """
    leaves = {k: Tensor(v, requires_grad=True) for k, v in params.values.items()}
    out = fn(leaves, *inputs)
    if not isinstance(out, Tensor):
        raise AutodiffError("forward_backward: fn must return a Tensor")
    out.backward()
    grads = {k: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
             for k, leaf in leaves.items()}
    return out, ParamSet({k: v for k, v in params.values.items()}, grads)


# -- finite differences ------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict
    passed: bool
    tol: float
    h: float
    failure: str = ""


def finite_diff_check(scalar_fn, params, grads=None, h=1e-5, tol=1e-6, coords=None,
                      n_coords=None, rng=None):
    """Compare analytic gradients with central differences.

    ``scalar_fn(params) -> float`` is re-evaluated at perturbed copies.
    ``grads`` maps names to analytic gradients; if omitted, ``scalar_fn`` must
    instead return ``(value, grads_dict)``. Either probe every coordinate,
    an explicit list of ``(name, flat_index)`` pairs in ``coords``, or
    ``n_coords`` random coordinates drawn from ``rng``.

    The error measure is |analytic - numeric| / max(1, |numeric|).
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step size h={h} outside [1e-7, 1e-3]")
    values = {k: np.array(v, dtype=np.float64) for k, v in params.values.items()}

    def evaluate(vals):
        out = scalar_fn(ParamSet(vals))
        return out if grads is None else (out, None)

    if grads is None:
        _, analytic = evaluate(values)
    else:
        analytic = grads.grads if isinstance(grads, ParamSet) else grads

    if coords is None:
        coords = [(k, i) for k in values for i in range(values[k].size)]
        if n_coords is not None and n_coords < len(coords):
            rng = np.random.default_rng(0) if rng is None else rng
            picks = rng.choice(len(coords), size=n_coords, replace=False)
            coords = [coords[i] for i in sorted(picks)]

    def probe(name, idx, step):
        x0 = values[name].flat[idx]
        values[name].flat[idx] = x0 + step
        fp = float(evaluate(values)[0])
        values[name].flat[idx] = x0 - step
        fm = float(evaluate(values)[0])
        values[name].flat[idx] = x0
        return fp, fm

    f0 = float(evaluate(values)[0])
    eps = np.finfo(np.float64).eps
    per_param = {}
    for name, idx in coords:
        a = float(np.asarray(analytic[name]).flat[idx])
        fp, fm = probe(name, idx, h)
        num = (fp - fm) / (2.0 * h)
        if not (np.isfinite(a) and np.isfinite(num)):
            return GradCheckReport(np.inf, per_param, False, tol, h,
                                   failure=f"non-finite gradient at {name}[{idx}]")
        # A kink shows up as a one-sided slope jump that does not shrink with h.
        jump = abs((fp - f0) - (f0 - fm)) / h
        h2 = h / 10.0
        fp2, fm2 = probe(name, idx, h2)
        jump2 = abs((fp2 - f0) - (f0 - fm2)) / h2
        floor = 1e-4 * max(1.0, abs(num)) + 1e3 * eps * max(1.0, abs(f0)) / h2
        if jump > floor and jump2 > 0.5 * jump:
            return GradCheckReport(np.inf, per_param, False, tol, h,
                                   failure=f"non-differentiable point at {name}[{idx}]")
        err = abs(a - num) / max(1.0, abs(num))
        per_param[name] = max(per_param.get(name, 0.0), err)
    worst = max(per_param.values(), default=0.0)
    return GradCheckReport(worst, per_param, worst <= tol, tol, h)
