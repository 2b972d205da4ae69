"""Spectratopes: sets {x = P y : exists t in T, R_k[y]^2 <= t_k I} and their calculus."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from . import monotone as mono
from .conic import NEAR_OPTIMAL, OPTIMAL, PRIMAL_INFEASIBLE, Affine, Model, SolverError, bmat, solve
from .symlin import PSD_TOL, eigh, smat, svec_len, sym, sym_basis


class DegenerateSetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearMatrixMap:
    """y -> sum_i y_i R^i with symmetric d x d coefficients, stored as (n, d, d)."""

    coeffs: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.coeffs, dtype=float)
        if C.ndim != 3 or C.shape[1] != C.shape[2]:
            raise ValueError(f"coefficients must have shape (n, d, d), got {C.shape}")
        C = sym(C)
        C.setflags(write=False)
        object.__setattr__(self, "coeffs", C)

    @property
    def n(self):
        return self.coeffs.shape[0]

    @property
    def d(self):
        return self.coeffs.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected vectors of length {self.n}, got {x.shape[-1]}")
        return np.tensordot(x, self.coeffs, axes=1)

    def calR(self, Q):
        """sum_ij Q_ij R^i R^j, symmetrized."""
        Q = np.asarray(Q, dtype=float)
        if Q.shape != (self.n, self.n):
            raise ValueError(f"expected {self.n}x{self.n} matrix, got {Q.shape}")
        tmp = np.tensordot(Q, self.coeffs, axes=(1, 0))
        return sym(np.einsum("iab,ibc->ac", self.coeffs, tmp))

    @cached_property
    def _adjoint_kernel(self):
        # K[a, b, i, j] = 1/2 (R^i R^j + R^j R^i)[b, a]
        RR = np.einsum("iac,jcb->ijab", self.coeffs, self.coeffs)
        RR = 0.5 * (RR + RR.transpose(1, 0, 2, 3))
        K = RR.transpose(3, 2, 0, 1).copy()
        K.setflags(write=False)
        return K

    def calR_star(self, L):
        """Adjoint of :meth:`calR`; batched over leading axes of ``L``."""
        L = np.asarray(L, dtype=float)
        if L.shape[-2:] != (self.d, self.d):
            raise ValueError(f"expected {self.d}x{self.d} matrix, got {L.shape[-2:]}")
        return np.tensordot(L, self._adjoint_kernel, axes=([-2, -1], [0, 1]))

    def calR_star_affine(self, L):
        """Apply the adjoint to an affine matrix expression."""
        coef = L.coef
        out = np.zeros((coef.shape[0], self.n, self.n))
        rows = np.flatnonzero(np.any(coef.reshape(coef.shape[0], -1) != 0, axis=1))
        if rows.size:
            out[rows] = self.calR_star(coef[rows])
        return Affine(out, self.calR_star(L.const))

    def calR_affine(self, Q):
        """Apply :meth:`calR` to an affine matrix expression."""
        K = self._adjoint_kernel
        return Affine(np.tensordot(Q.coef, K, axes=([1, 2], [2, 3])), np.tensordot(Q.const, K, axes=([0, 1], [2, 3])))

    def eval_affine(self, y):
        """R[y] for an affine vector expression y."""
        return Affine(np.tensordot(y.coef, self.coeffs, axes=1), np.tensordot(y.const, self.coeffs, axes=1))

    def restrict(self, E):
        """The map z -> R[E z]."""
        E = np.asarray(E, dtype=float)
        return LinearMatrixMap(np.tensordot(E.T, self.coeffs, axes=1))


@dataclass(frozen=True, eq=False)
class BasicSpectratope:
    maps: tuple
    T: mono.MonotoneSet

    def __post_init__(self):
        maps = tuple(m if isinstance(m, LinearMatrixMap) else LinearMatrixMap(m) for m in self.maps)
        object.__setattr__(self, "maps", maps)
        if not maps:
            raise ValueError("a spectratope needs at least one map")
        if len({m.n for m in maps}) != 1:
            raise ValueError("all maps must act on the same space")
        if self.T.dim != len(maps):
            raise ValueError(f"T has dimension {self.T.dim} but there are {len(maps)} maps")
        stacked = np.hstack([m.coeffs.reshape(m.n, -1) for m in maps])
        if np.linalg.matrix_rank(stacked) < self.n:
            raise DegenerateSetError("maps have a common kernel; the set is unbounded")

    @property
    def n(self):
        return self.maps[0].n

    @property
    def K(self):
        return len(self.maps)

    @property
    def sizes(self):
        return [m.d for m in self.maps]

    @property
    def size(self):
        """D = sum of block sizes."""
        return sum(self.sizes)

    def squared_norms(self, y):
        """(||R_k[y]||^2)_k, batched over leading axes of y."""
        y = np.asarray(y, dtype=float)
        out = []
        for m in self.maps:
            R = m(y)
            if m.d == 1:
                out.append(R[..., 0, 0] ** 2)
            else:
                w = np.linalg.eigvalsh(R)
                out.append(np.maximum(w[..., 0] ** 2, w[..., -1] ** 2))
        return np.stack(out, axis=-1)

    def gauge_sq(self, y):
        """The squared gauge: smallest rho with y in sqrt(rho) X."""
        s = self.squared_norms(y)
        if s.ndim == 1:
            return self.T.gauge(s)
        return np.array([self.T.gauge(row) for row in s.reshape(-1, self.K)]).reshape(s.shape[:-1])

    def contains(self, y, tol=1e-8):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}")
        return self.T.contains(self.squared_norms(y) * (1.0 - tol))


@dataclass(frozen=True, eq=False)
class Spectratope:
    """The image P * core of a basic spectratope (P = I when ``P`` is None)."""

    core: BasicSpectratope
    P: np.ndarray = None

    def __post_init__(self):
        if self.P is not None:
            P = np.asarray(self.P, dtype=float)
            if P.ndim != 2 or P.shape[1] != self.core.n:
                raise ValueError(f"P must have {self.core.n} columns")
            P = P.copy()
            P.setflags(write=False)
            object.__setattr__(self, "P", P)

    @property
    def is_basic(self):
        return self.P is None

    @property
    def dim(self):
        return self.core.n if self.P is None else self.P.shape[0]

    @property
    def Pmat(self):
        return np.eye(self.core.n) if self.P is None else self.P

    @property
    def size(self):
        return self.core.size

    @property
    def maps(self):
        return self.core.maps

    @property
    def T(self):
        return self.core.T

    @cached_property
    def _injective(self):
        return self.P is None or np.linalg.matrix_rank(self.P) == self.core.n

    def contains(self, x, tol=1e-8):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.dim:
            raise ValueError(f"expected a vector of length {self.dim}")
        if self.P is None:
            return self.core.contains(x, tol)
        if self._injective:
            P = self.P
            y = np.linalg.solve(P.T @ P + 1e-12 * np.eye(P.shape[1]), P.T @ x)
            if np.linalg.norm(P @ y - x) > tol * max(1.0, np.linalg.norm(x)):
                return False
            return self.core.contains(y, tol)
        return membership_gauge(self, x) <= 1.0 + max(tol, 1e-6)

    def sample(self, rng, size=None):
        """Points of the set: uniform direction in the core, uniform radius to the boundary."""
        count = 1 if size is None else int(size)
        n = self.core.n
        u = rng.standard_normal((count, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        g = np.atleast_1d(self.core.gauge_sq(u))
        radius = rng.uniform(0.0, 1.0, count) / np.sqrt(g) * (1.0 - 1e-12)
        y = u * radius[:, None]
        x = y if self.P is None else y @ self.P.T
        return x[0] if size is None else x

    def boundary_scale(self, direction):
        """Largest a with a * direction in the set (for a core-space direction when P is None)."""
        if self.P is not None and not self._injective:
            raise ValueError("boundary scaling needs an injective image map")
        direction = np.asarray(direction, dtype=float)
        if self.P is not None:
            P = self.P
            direction = np.linalg.lstsq(P, direction, rcond=None)[0]
        g = self.core.gauge_sq(direction)
        return np.inf if g <= 0 else 1.0 / np.sqrt(g)

    def to_record(self):
        rec = {"maps": [m.coeffs.tolist() for m in self.core.maps], "T": self.core.T.to_record()}
        if self.P is not None:
            rec["P"] = self.P.tolist()
        return rec


def as_spectratope(X):
    if isinstance(X, Spectratope):
        return X
    if isinstance(X, BasicSpectratope):
        return Spectratope(X)
    raise TypeError(f"not a spectratope: {type(X).__name__}")


def from_record(rec):
    maps = tuple(LinearMatrixMap(np.asarray(c, dtype=float)) for c in rec["maps"])
    core = BasicSpectratope(maps, mono.from_record(rec["T"]))
    P = rec.get("P")
    return Spectratope(core, None if P is None else np.asarray(P, dtype=float))


# ---------------------------------------------------------------- conic helpers

def add_lmi_membership(model, X, y, tau):
    """Constrain [[t_k I, R_k[y]], [R_k[y], tau I]] >= 0 with t in tau*T.

    With tau fixed to one this says y lies in the core of X.
    """
    t = model.var(X.core.K)
    mono.add_membership(model, X.core.T, t, tau)
    for k, m in enumerate(X.core.maps):
        R = m.eval_affine(y)
        I = np.eye(m.d)
        model.add_psd(bmat([[t[k] * I, R], [R, tau * I]]))
    return t


def membership_gauge(X, x):
    """The gauge min{tau : x in tau X}, from the Schur-complement SDP."""
    X = as_spectratope(X)
    model = Model()
    y = model.var(X.core.n)
    tau = model.var()
    model.add_eq(X.Pmat @ y - x)
    add_lmi_membership(model, X, y, tau)
    model.minimize(tau)
    sol = solve(model.compile())
    if sol.status == PRIMAL_INFEASIBLE:
        # x is outside the range of P
        return np.inf
    if sol.status not in (OPTIMAL, NEAR_OPTIMAL):
        raise SolverError(f"membership gauge: solver status {sol.status}")
    return sol.primal_objective


def support_value(X, w):
    """max_{x in X} w'x, computed exactly by the Schur-complement SDP."""
    X = as_spectratope(X)
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        return 0.0
    model = Model()
    y = model.var(X.core.n)
    add_lmi_membership(model, X, y, 1.0)
    model.minimize(-(y.dot(X.Pmat.T @ w)))
    sol = solve(model.compile())
    return -sol.primal_objective


# ---------------------------------------------------------------- constructors

def _scalar_maps(rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return tuple(LinearMatrixMap(r.reshape(-1, 1, 1)) for r in rows)


def box(n, half_widths=None):
    """{x : |x_i| <= w_i}."""
    w = np.ones(n) if half_widths is None else np.asarray(half_widths, dtype=float)
    return Spectratope(BasicSpectratope(_scalar_maps(np.diag(1.0 / w)), mono.UnitBox(n)))


def parallelotope(N):
    """{x : |N_i x| <= 1 for every row N_i} for a nonsingular square N."""
    N = np.asarray(N, dtype=float)
    return Spectratope(BasicSpectratope(_scalar_maps(N), mono.UnitBox(N.shape[0])))


def lp_ball(n, p):
    """Unit ball of the l_p norm, p >= 2 (p = inf allowed)."""
    if p < 2:
        raise ValueError("l_p balls are spectratopes here only for p >= 2")
    if np.isinf(p):
        T = mono.UnitBox(n)
    elif p == 2:
        T = mono.SimplexCap(n, 1.0)
    else:
        T = mono.PNormCap(n, p / 2.0)
    return Spectratope(BasicSpectratope(_scalar_maps(np.eye(n)), T))


def from_ellitope(S_matrices, T, P=None, rank_tol=1e-10):
    """The spectratope of {x = P y : exists t in T, y' S_k y <= t_k}.

    Each S_k is split into rank-one terms s s' from its eigendecomposition and
    T is replaced by the set that lets the terms of group k share t_k.
    """
    S = [sym(s) for s in S_matrices]
    n = S[0].shape[0]
    total = sum(S)
    if np.linalg.eigvalsh(total)[0] <= rank_tol * max(1.0, np.abs(total).max()):
        raise DegenerateSetError("sum of the quadratic forms is singular")
    rows, groups = [], []
    for s in S:
        w, V = eigh(s)
        if w[0] < -PSD_TOL:
            raise ValueError("ellitope forms must be PSD")
        keep = w > rank_tol * max(w[-1], 1e-300)
        rows.append((V[:, keep] * np.sqrt(w[keep])).T)
        groups.append(int(keep.sum()))
    if min(groups) == 0:
        raise DegenerateSetError("an ellitope form is zero")
    core = BasicSpectratope(_scalar_maps(np.vstack(rows)), mono.lift(T, groups))
    return Spectratope(core, P)


def ell2_ball(n):
    return from_ellitope([np.eye(n)], mono.UnitBox(1))


def matrix_box(L):
    """{X in S^d : -L <= X <= L} over svec coordinates of X."""
    L = sym(L)
    w, V = eigh(L)
    if w[0] <= 1e-10:
        raise ValueError("matrix_box needs a positive definite L")
    Lih = (V / np.sqrt(w)) @ V.T
    E = sym_basis(L.shape[0])
    coeffs = Lih @ E @ Lih
    return Spectratope(BasicSpectratope((LinearMatrixMap(coeffs),), mono.UnitBox(1)))


def spectral_ball(u, v):
    """Unit ball of the spectral norm on u x v matrices vectorized row-major."""
    coeffs = np.zeros((u * v, u + v, u + v))
    for i in range(u):
        for j in range(v):
            k = i * v + j
            coeffs[k, v + i, j] = 1.0
            coeffs[k, j, v + i] = 1.0
    return Spectratope(BasicSpectratope((LinearMatrixMap(coeffs),), mono.UnitBox(1)))


def zero(p):
    """The set {0} in R^p."""
    core = BasicSpectratope((LinearMatrixMap(np.ones((1, 1, 1))),), mono.UnitBox(1))
    return Spectratope(core, np.zeros((p, 1)))


# ---------------------------------------------------------------- calculus

def _padded_maps(parts):
    """Maps of several cores placed on the concatenated core space."""
    total = sum(X.core.n for X in parts)
    maps, start = [], 0
    for X in parts:
        for m in X.core.maps:
            C = np.zeros((total, m.d, m.d))
            C[start:start + m.n] = m.coeffs
            maps.append(LinearMatrixMap(C))
        start += X.core.n
    return tuple(maps)


def _product_T(parts):
    Ts = [X.core.T for X in parts]
    return Ts[0] if len(Ts) == 1 else mono.Product(tuple(Ts))


def product(*parts):
    parts = [as_spectratope(X) for X in parts]
    core = BasicSpectratope(_padded_maps(parts), _product_T(parts))
    if all(X.P is None for X in parts):
        return Spectratope(core)
    return Spectratope(core, linalg.block_diag(*[X.Pmat for X in parts]))


def linear_image(X, S):
    X = as_spectratope(X)
    S = np.asarray(S, dtype=float)
    if S.shape[1] != X.dim:
        raise ValueError(f"image map needs {X.dim} columns")
    return Spectratope(X.core, S @ X.Pmat)


def minkowski_sum(*parts):
    parts = [as_spectratope(X) for X in parts]
    p = parts[0].dim
    if any(X.dim != p for X in parts):
        raise ValueError("summands must share the ambient dimension")
    return linear_image(product(*parts), np.hstack([np.eye(p)] * len(parts)))


def _restricted(parts, E, P_first):
    """Core maps restricted to the subspace y = E w of the concatenated core."""
    maps, start = [], 0
    for X in parts:
        block = E[start:start + X.core.n]
        for m in X.core.maps:
            maps.append(m.restrict(block))
        start += X.core.n
    core = BasicSpectratope(tuple(maps), _product_T(parts))
    return Spectratope(core, P_first)


def intersect(*parts):
    parts = [as_spectratope(X) for X in parts]
    p = parts[0].dim
    if any(X.dim != p for X in parts):
        raise ValueError("operands must share the ambient dimension")
    sizes = [X.core.n for X in parts]
    total = sum(sizes)
    rows = []
    offsets = np.cumsum([0] + sizes)
    for i in range(1, len(parts)):
        R = np.zeros((p, total))
        R[:, offsets[0]:offsets[1]] = parts[0].Pmat
        R[:, offsets[i]:offsets[i + 1]] = -parts[i].Pmat
        rows.append(R)
    E = linalg.null_space(np.vstack(rows)) if rows else np.eye(total)
    if E.shape[1] == 0:
        return zero(p)
    return _restricted(parts, E, parts[0].Pmat @ E[offsets[0]:offsets[1]])


def inverse_image(X, S):
    """{z : S z in X} for S with trivial kernel."""
    X = as_spectratope(X)
    S = np.asarray(S, dtype=float)
    if S.shape[0] != X.dim:
        raise ValueError(f"S needs {X.dim} rows")
    if np.linalg.matrix_rank(S) < S.shape[1]:
        raise ValueError("inverse image needs a map with trivial kernel")
    Sp = np.linalg.pinv(S)
    P = X.Pmat
    # core points whose image lies in the range of S
    E = linalg.null_space(P - S @ (Sp @ P))
    if E.shape[1] == 0:
        return zero(S.shape[1])
    core = BasicSpectratope(tuple(m.restrict(E) for m in X.core.maps), X.core.T)
    return Spectratope(core, Sp @ P @ E)


def compose(kind, *operands):
    ops = {"intersect": intersect, "product": product, "linear_image": linear_image,
           "inverse_image": inverse_image, "sum": minkowski_sum}
    if kind not in ops:
        raise ValueError(f"unknown composition {kind!r}")
    return ops[kind](*operands)


# ---------------------------------------------------------------- norms

@dataclass(frozen=True, eq=False)
class NormDescriptor:
    """A norm given by the unit ball of its conjugate, with an optional closed form."""

    dual_ball: Spectratope
    kind: str = "none"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        B = as_spectratope(self.dual_ball)
        object.__setattr__(self, "dual_ball", B)
        if np.linalg.matrix_rank(B.Pmat) < B.dim:
            raise DegenerateSetError("the conjugate unit ball must be full dimensional")

    @property
    def dim(self):
        return self.dual_ball.dim

    def __call__(self, u):
        """Evaluate the norm, batched over leading axes."""
        u = np.asarray(u, dtype=float)
        if self.kind == "lp":
            return np.linalg.norm(u, self.params["p"], axis=-1)
        if self.kind == "nuclear":
            a, b = self.params["shape"]
            return np.linalg.svd(u.reshape(u.shape[:-1] + (a, b)), compute_uv=False).sum(axis=-1)
        if self.kind == "sym_nuclear":
            return np.abs(np.linalg.eigvalsh(smat(u))).sum(axis=-1)
        flat = u.reshape(-1, u.shape[-1])
        vals = np.array([support_value(self.dual_ball, row) for row in flat])
        return vals.reshape(u.shape[:-1])

    def to_record(self):
        rec = {"type": self.kind}
        rec.update({k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()})
        if self.kind == "none":
            rec["dual_ball"] = self.dual_ball.to_record()
        return rec


def lp_norm(nu, p):
    """l_p norm on R^nu for p in [1, 2]."""
    if not 1 <= p <= 2:
        raise ValueError("l_p norms are supported for p in [1, 2]")
    q = np.inf if p == 1 else p / (p - 1.0)
    return NormDescriptor(lp_ball(nu, q), "lp", {"p": float(p), "dim": int(nu)})


def nuclear_norm(u, v):
    return NormDescriptor(spectral_ball(u, v), "nuclear", {"shape": (int(u), int(v))})


def sym_nuclear_norm(k):
    """Nuclear norm of symmetric k x k matrices in svec coordinates."""
    return NormDescriptor(matrix_box(np.eye(k)), "sym_nuclear", {"dim": int(k)})


def sym_frobenius_norm(k):
    return lp_norm(svec_len(k), 2.0)


def norm_from_record(rec):
    kind = rec["type"]
    if kind == "lp":
        return lp_norm(int(rec["dim"]), float(rec["p"]))
    if kind == "nuclear":
        u, v = rec["shape"]
        return nuclear_norm(int(u), int(v))
    if kind == "sym_nuclear":
        return sym_nuclear_norm(int(rec["dim"]))
    if kind == "none":
        return NormDescriptor(from_record(rec["dual_ball"]))
    raise ValueError(f"unknown norm kind {kind!r}")
