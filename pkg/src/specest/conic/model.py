"""A small modeling layer that compiles affine constraints to a conic program.

Expressions are :class:`Affine` objects: a dense coefficient tensor with the
variable axis first plus a constant.  Constraints are ``expr >= 0``
(elementwise), ``expr == 0`` and ``expr`` PSD for square symmetric
expressions.  :meth:`Model.compile` produces a :class:`ConicProgram` in the
form

    minimize  c'x   s.t.  G x + s = h,  A x = b,  s in K

where ``K`` is a product of a nonnegative orthant and PSD cones stored in
svec coordinates.
"""

from dataclasses import dataclass, field

import numpy as np

from ..symlin import smat, svec, svec_len, sym_basis


def _pad(coef, nv):
    if coef.shape[0] == nv:
        return coef
    extra = np.zeros((nv - coef.shape[0],) + coef.shape[1:])
    return np.concatenate([coef, extra], axis=0)


class Affine:
    """An affine function of the model variables with array shape ``shape``."""

    __array_ufunc__ = None

    def __init__(self, coef, const):
        self.coef = coef
        self.const = const

    @classmethod
    def constant(cls, value, nv=0):
        value = np.asarray(value, dtype=float)
        return cls(np.zeros((nv,) + value.shape), value.copy())

    @property
    def shape(self):
        return self.const.shape

    @property
    def nv(self):
        return self.coef.shape[0]

    @property
    def T(self):
        return Affine(np.swapaxes(self.coef, -1, -2), self.const.T)

    def __len__(self):
        return self.shape[0]

    def broadcast_to(self, shape):
        shape = tuple(shape)
        if shape == self.shape:
            return self
        const = np.broadcast_to(self.const, shape).copy()
        extra = len(shape) - len(self.shape)
        coef = self.coef.reshape((self.nv,) + (1,) * extra + self.shape)
        return Affine(np.broadcast_to(coef, (self.nv,) + shape).copy(), const)

    def _lift(self, other):
        if isinstance(other, Affine):
            return other
        return Affine.constant(other)

    def __add__(self, other):
        other = self._lift(other)
        shape = np.broadcast_shapes(self.shape, other.shape)
        a, b = self.broadcast_to(shape), other.broadcast_to(shape)
        nv = max(a.nv, b.nv)
        return Affine(_pad(a.coef, nv) + _pad(b.coef, nv), a.const + b.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.coef, -self.const)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        other = np.asarray(other, dtype=float)
        extra = other.ndim - len(self.shape)
        coef = self.coef
        if extra > 0:
            coef = coef.reshape((self.nv,) + (1,) * extra + self.shape)
        return Affine(coef * other, self.const * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / np.asarray(other, dtype=float))

    def __matmul__(self, M):
        M = np.asarray(M, dtype=float)
        return Affine(self.coef @ M, self.const @ M)

    def __rmatmul__(self, M):
        M = np.asarray(M, dtype=float)
        if len(self.shape) == 1:
            return Affine(self.coef @ M.T, M @ self.const)
        return Affine(M @ self.coef, M @ self.const)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Affine(self.coef[(slice(None),) + key], self.const[key])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Affine(self.coef.reshape((self.nv,) + tuple(shape)), self.const.reshape(shape))

    def sum(self):
        return Affine(self.coef.reshape(self.nv, -1).sum(axis=1), np.asarray(self.const.sum()))

    def trace(self):
        return Affine(np.trace(self.coef, axis1=1, axis2=2), np.asarray(np.trace(self.const)))

    def dot(self, w):
        """Inner product with a constant array of the same shape."""
        w = np.asarray(w, dtype=float)
        axes = tuple(range(1, self.coef.ndim))
        return Affine(np.tensordot(self.coef, w, axes=(axes, tuple(range(w.ndim)))),
                      np.asarray(np.sum(self.const * w)))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.tensordot(x[: self.nv], self.coef, axes=1) + self.const


def stack(exprs, axis=0):
    exprs = [e if isinstance(e, Affine) else Affine.constant(e) for e in exprs]
    nv = max(e.nv for e in exprs)
    return Affine(np.stack([_pad(e.coef, nv) for e in exprs], axis=axis + 1),
                  np.stack([e.const for e in exprs], axis=axis))


def concat(exprs, axis=0):
    exprs = [e if isinstance(e, Affine) else Affine.constant(e) for e in exprs]
    nv = max(e.nv for e in exprs)
    return Affine(np.concatenate([_pad(e.coef, nv) for e in exprs], axis=axis + 1),
                  np.concatenate([e.const for e in exprs], axis=axis))


def bmat(blocks):
    """Assemble a block matrix; ``None`` entries are zero blocks."""
    heights = []
    for row in blocks:
        h = [b.shape[0] for b in row if b is not None]
        heights.append(h[0])
    widths = []
    for j in range(len(blocks[0])):
        w = [row[j].shape[1] for row in blocks if row[j] is not None]
        widths.append(w[0])
    rows = []
    for i, row in enumerate(blocks):
        parts = []
        for j, b in enumerate(row):
            if b is None:
                b = np.zeros((heights[i], widths[j]))
            parts.append(b)
        rows.append(concat(parts, axis=1))
    return concat(rows, axis=0)


@dataclass
class ConicProgram:
    """minimize c'x + offset  s.t.  G x + s = h, A x = b, s in K(dims)."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    dims: dict
    offset: float = 0.0
    names: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.c.shape[0]

    def block_slices(self):
        """Row slices of G for the nonnegative block and each PSD block."""
        slices = [slice(0, self.dims["l"])]
        start = self.dims["l"]
        for d in self.dims["s"]:
            slices.append(slice(start, start + svec_len(d)))
            start += svec_len(d)
        return slices

    def scaled(self, alpha):
        return ConicProgram(self.c * alpha, self.G, self.h, self.A, self.b, self.dims,
                            self.offset * alpha, self.names)


class Model:
    """Builder for conic programs from :class:`Affine` expressions."""

    def __init__(self):
        self.nvar = 0
        self._nonneg = []
        self._psd = []
        self._eq = []
        self._objective = None
        self._labels = {}

    def var(self, *shape):
        shape = tuple(shape) if shape else ()
        k = int(np.prod(shape)) if shape else 1
        start = self.nvar
        self.nvar += k
        coef = np.zeros((self.nvar, k))
        coef[start:, :] = np.eye(k)
        return Affine(coef.reshape((self.nvar,) + shape), np.zeros(shape))

    def sym_var(self, d):
        """A free symmetric d x d matrix variable parameterized by svec coordinates."""
        x = self.var(svec_len(d))
        E = sym_basis(d)
        return Affine(np.tensordot(x.coef, E, axes=1), np.zeros((d, d)))

    def psd_var(self, d):
        X = self.sym_var(d)
        self.add_psd(X)
        return X

    def nonneg_var(self, *shape):
        x = self.var(*shape)
        self.add_nonneg(x)
        return x

    def add_nonneg(self, expr, label=None):
        expr = expr if isinstance(expr, Affine) else Affine.constant(expr)
        flat = expr.reshape(-1) if expr.shape != () else expr.reshape(1)
        self._nonneg.append(flat)
        return self._tag(label, "l", len(self._nonneg) - 1)

    def add_eq(self, expr, label=None):
        expr = expr if isinstance(expr, Affine) else Affine.constant(expr)
        flat = expr.reshape(-1) if expr.shape != () else expr.reshape(1)
        self._eq.append(flat)
        return self._tag(label, "eq", len(self._eq) - 1)

    def add_psd(self, expr, label=None):
        """Constrain a square expression to be PSD; it is symmetrized first."""
        d = expr.shape[0]
        if expr.shape != (d, d):
            raise ValueError(f"PSD constraint needs a square expression, got {expr.shape}")
        expr = Affine(0.5 * (expr.coef + np.swapaxes(expr.coef, 1, 2)), 0.5 * (expr.const + expr.const.T))
        if d == 1:
            return self.add_nonneg(expr.reshape(1), label)
        self._psd.append(expr)
        return self._tag(label, "s", len(self._psd) - 1)

    def _tag(self, label, kind, idx):
        key = (kind, idx)
        if label is not None:
            self._labels[label] = key
        return key

    def minimize(self, expr):
        if expr.shape not in ((), (1,)):
            raise ValueError("objective must be scalar")
        self._objective = expr.reshape(())

    def compile(self):
        nv = self.nvar
        if self._objective is None:
            c, offset = np.zeros(nv), 0.0
        else:
            c, offset = _pad(self._objective.coef, nv), float(self._objective.const)
        G_rows, h_rows, l_count = [], [], 0
        layout = {}
        for i, e in enumerate(self._nonneg):
            layout[("l", i)] = slice(l_count, l_count + e.shape[0])
            l_count += e.shape[0]
            G_rows.append(-_pad(e.coef, nv).T)
            h_rows.append(e.const)
        sizes = []
        start = l_count
        for i, e in enumerate(self._psd):
            d = e.shape[0]
            sizes.append(d)
            layout[("s", i)] = slice(start, start + svec_len(d))
            start += svec_len(d)
            G_rows.append(-svec(_pad(e.coef, nv)).T)
            h_rows.append(svec(e.const))
        G = np.vstack(G_rows) if G_rows else np.zeros((0, nv))
        h = np.concatenate(h_rows) if h_rows else np.zeros(0)
        if self._eq:
            A = np.vstack([_pad(e.coef, nv).T for e in self._eq])
            b = -np.concatenate([e.const for e in self._eq])
        else:
            A, b = np.zeros((0, nv)), np.zeros(0)
        eq_layout, start = {}, 0
        for i, e in enumerate(self._eq):
            eq_layout[("eq", i)] = slice(start, start + e.shape[0])
            start += e.shape[0]
        layout.update(eq_layout)
        names = {"layout": layout, "labels": dict(self._labels)}
        return ConicProgram(c, G, h, A, b, {"l": l_count, "s": sizes}, offset, names)


def constraint_dual(prog, sol, key):
    """Dual multiplier of a constraint returned by ``add_*`` (matrix for PSD blocks)."""
    sl = prog.names["layout"][key]
    if key[0] == "s":
        return smat(sol.z[sl])
    if key[0] == "eq":
        return sol.y[sl]
    return sol.z[sl]
