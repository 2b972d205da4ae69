"""Monotone compact sets T in the nonnegative orthant and their support functions.

Each variant knows its support function, membership test and gauge
``min{rho >= 0 : s in rho*T}`` for ``s >= 0``, and can emit conic constraints
for ``t in tau*T`` and for epigraphs ``s >= phi_T(g)``.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .conic import Affine, ConicProgram, Model, bmat, solve, stack
from .symlin import svec, svec_len

MEMBER_TOL = 1e-10


class UnsupportedVariantError(ValueError):
    pass


def _dual_exponent(r):
    if r == 1:
        return np.inf
    if np.isinf(r):
        return 1.0
    return r / (r - 1.0)


def _check_dim(T, g):
    g = np.asarray(g, dtype=float).ravel()
    if g.shape[0] != T.dim:
        raise ValueError(f"vector of length {g.shape[0]} for a set of dimension {T.dim}")
    return g


class MonotoneSet:
    """Base class; concrete variants are frozen dataclasses."""

    dim: int

    def support(self, g):
        raise NotImplementedError

    def gauge(self, s):
        raise NotImplementedError

    def positive_point(self):
        raise NotImplementedError

    def contains(self, t, tol=MEMBER_TOL):
        t = _check_dim(self, t)
        if np.any(t < -1e-12):
            return False
        return self.gauge(np.clip(t, 0.0, None)) <= 1.0 + tol

    def to_record(self):
        raise NotImplementedError


@dataclass(frozen=True)
class UnitBox(MonotoneSet):
    dim: int

    def support(self, g):
        return float(np.clip(_check_dim(self, g), 0.0, None).sum())

    def gauge(self, s):
        return float(np.max(s, initial=0.0))

    def positive_point(self):
        return np.full(self.dim, 0.5)

    def to_record(self):
        return {"type": "unit_box", "dim": self.dim}


@dataclass(frozen=True)
class ScaledBox(MonotoneSet):
    upper: tuple

    def __post_init__(self):
        u = tuple(float(v) for v in np.ravel(self.upper))
        if not u or min(u) <= 0:
            raise ValueError("ScaledBox needs a positive upper vector")
        object.__setattr__(self, "upper", u)

    @property
    def dim(self):
        return len(self.upper)

    def support(self, g):
        return float(np.clip(_check_dim(self, g), 0.0, None) @ np.array(self.upper))

    def gauge(self, s):
        return float(np.max(np.asarray(s) / np.array(self.upper), initial=0.0))

    def positive_point(self):
        return 0.5 * np.array(self.upper)

    def to_record(self):
        return {"type": "scaled_box", "upper": list(self.upper)}


@dataclass(frozen=True)
class SimplexCap(MonotoneSet):
    dim: int
    budget: float = 1.0

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("SimplexCap needs a positive budget")

    def support(self, g):
        return float(self.budget * max(_check_dim(self, g).max(), 0.0))

    def gauge(self, s):
        return float(np.sum(s) / self.budget)

    def positive_point(self):
        return np.full(self.dim, 0.5 * self.budget / self.dim)

    def to_record(self):
        return {"type": "simplex_cap", "dim": self.dim, "budget": self.budget}


@dataclass(frozen=True)
class PNormCap(MonotoneSet):
    """{t >= 0 : ||t||_r <= 1}."""

    dim: int
    r: float

    def __post_init__(self):
        if not self.r >= 1:
            raise ValueError("PNormCap needs r >= 1")

    def support(self, g):
        gp = np.clip(_check_dim(self, g), 0.0, None)
        return float(np.linalg.norm(gp, _dual_exponent(self.r)))

    def gauge(self, s):
        return float(np.linalg.norm(np.asarray(s, dtype=float), self.r))

    def positive_point(self):
        if np.isinf(self.r):
            return np.full(self.dim, 0.5)
        return np.full(self.dim, 0.5 * self.dim ** (-1.0 / self.r))

    def to_record(self):
        return {"type": "pnorm_cap", "dim": self.dim, "r": "inf" if np.isinf(self.r) else self.r}


@dataclass(frozen=True)
class Product(MonotoneSet):
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dim(self):
        return sum(f.dim for f in self.factors)

    def _split(self, v):
        out, start = [], 0
        for f in self.factors:
            out.append(v[start:start + f.dim])
            start += f.dim
        return out

    def support(self, g):
        g = _check_dim(self, g)
        return float(sum(f.support(part) for f, part in zip(self.factors, self._split(g))))

    def gauge(self, s):
        return float(max((f.gauge(part) for f, part in zip(self.factors, self._split(np.asarray(s)))),
                         default=0.0))

    def positive_point(self):
        return np.concatenate([f.positive_point() for f in self.factors])

    def to_record(self):
        return {"type": "product", "factors": [f.to_record() for f in self.factors]}


@dataclass(frozen=True)
class Lifted(MonotoneSet):
    """{t >= 0 : the vector of group sums of t lies in base}.

    Splitting the budget of each coordinate of ``base`` among a group of new
    coordinates; this is the set that goes with the rank-one decomposition of
    an ellitope.
    """

    base: MonotoneSet
    groups: tuple

    def __post_init__(self):
        groups = tuple(int(g) for g in self.groups)
        if len(groups) != self.base.dim or min(groups) < 1:
            raise ValueError("one positive group size per base coordinate is required")
        object.__setattr__(self, "groups", groups)

    @property
    def dim(self):
        return sum(self.groups)

    def _ends(self):
        return np.cumsum((0,) + self.groups)

    def group_sums(self, v):
        return np.add.reduceat(np.asarray(v, dtype=float), self._ends()[:-1])

    def group_max(self, v):
        return np.maximum.reduceat(np.asarray(v, dtype=float), self._ends()[:-1])

    def support(self, g):
        g = _check_dim(self, g)
        return self.base.support(np.clip(self.group_max(g), 0.0, None))

    def gauge(self, s):
        return self.base.gauge(self.group_sums(s))

    def positive_point(self):
        base = self.base.positive_point()
        return np.repeat(base / np.array(self.groups), self.groups)

    def to_record(self):
        return {"type": "lifted", "base": self.base.to_record(), "groups": list(self.groups)}


def from_record(rec):
    kind = rec["type"]
    if kind == "unit_box":
        return UnitBox(int(rec["dim"]))
    if kind == "scaled_box":
        return ScaledBox(tuple(rec["upper"]))
    if kind == "simplex_cap":
        return SimplexCap(int(rec["dim"]), float(rec.get("budget", 1.0)))
    if kind == "pnorm_cap":
        r = rec["r"]
        return PNormCap(int(rec["dim"]), np.inf if r in ("inf", None) else float(r))
    if kind == "product":
        return Product(tuple(from_record(f) for f in rec["factors"]))
    if kind == "lifted":
        return Lifted(from_record(rec["base"]), tuple(rec["groups"]))
    raise UnsupportedVariantError(f"unknown monotone set type {kind!r}")


def lift(T, groups):
    """The set for splitting each coordinate of T into a group of the given size."""
    groups = tuple(int(g) for g in groups)
    if all(g == 1 for g in groups):
        return T
    if isinstance(T, UnitBox):
        return Product(tuple(SimplexCap(g, 1.0) for g in groups))
    return Lifted(T, groups)


# ---------------------------------------------------------------- conic encodings

def _rational(alpha, max_den=64):
    frac = Fraction(alpha).limit_denominator(max_den)
    if abs(float(frac) - alpha) > 1e-12:
        raise UnsupportedVariantError(f"exponent {alpha} is not a small rational")
    return frac


def add_geo_mean(model, u, leaves, weights):
    """Constrain u <= prod(leaves_j ** (weights_j / sum(weights))) for u >= 0.

    ``leaves`` are scalar expressions and ``weights`` positive integers.  The
    product is padded to a power of two with copies of ``u`` and built from
    2x2 PSD blocks [[a, m], [m, b]], each giving m <= sqrt(a b).
    """
    total = sum(weights)
    k = max(1, int(np.ceil(np.log2(total))))
    nodes = []
    for leaf, w in zip(leaves, weights):
        nodes += [leaf] * w
    nodes += [u] * (2**k - total)
    while len(nodes) > 1:
        nxt = []
        for a, b in zip(nodes[0::2], nodes[1::2]):
            m_ = model.var()
            model.add_psd(bmat([[a.reshape(1, 1), m_.reshape(1, 1)], [m_.reshape(1, 1), b.reshape(1, 1)]]))
            nxt.append(m_)
        nodes = nxt
    model.add_nonneg(nodes[0] - u)


def add_norm_cone(model, u, s, q):
    """Constrain s >= ||u||_q for an expression u that the caller keeps >= 0."""
    u = u.reshape(-1)
    K = u.shape[0]
    if q == 1:
        model.add_nonneg(s - u.sum())
    elif np.isinf(q):
        model.add_nonneg(s.reshape(1) - u)
    elif q == 2:
        S = s.reshape(1, 1)
        blocks = [[S, u.reshape(1, K)], [u.reshape(K, 1), s * np.eye(K)]]
        model.add_psd(bmat(blocks))
    else:
        # ||u||_q <= s  <=>  r >= 0, sum r <= s, u_i <= r_i^{1/q} s^{1 - 1/q}
        frac = _rational(1.0 / q)
        a, b = frac.numerator, frac.denominator
        r = model.nonneg_var(K)
        model.add_nonneg(s - r.sum())
        for i in range(K):
            add_geo_mean(model, u[i], [r[i], s], [a, b - a])


def add_membership(model, T, t, tau=1.0):
    """Constrain t in tau*T (the conic hull of T) for expressions t and tau."""
    t = t.reshape(-1)
    tau = tau if isinstance(tau, Affine) else Affine.constant(float(tau))
    tau = tau.reshape(())
    model.add_nonneg(t)
    if isinstance(T, UnitBox):
        model.add_nonneg(tau.reshape(1) - t)
    elif isinstance(T, ScaledBox):
        model.add_nonneg(tau.reshape(1) * np.array(T.upper) - t)
    elif isinstance(T, SimplexCap):
        model.add_nonneg(tau * T.budget - t.sum())
    elif isinstance(T, PNormCap):
        add_norm_cone(model, t, tau, T.r)
    elif isinstance(T, Product):
        start = 0
        for f in T.factors:
            add_membership(model, f, t[start:start + f.dim], tau)
            start += f.dim
    elif isinstance(T, Lifted):
        ends = T._ends()
        sums = stack([t[ends[i]:ends[i + 1]].sum() for i in range(T.base.dim)])
        add_membership(model, T.base, sums, tau)
    else:
        raise UnsupportedVariantError(f"no conic encoding for {type(T).__name__}")


def add_support_epigraph(model, T, g):
    """Return a scalar expression s with s >= phi_T(g) enforced (tight at optimum)."""
    g = g.reshape(-1)
    if isinstance(T, SimplexCap):
        s = model.var()
        model.add_nonneg(s)
        model.add_nonneg(s.reshape(1) - g * T.budget)
        return s
    if isinstance(T, Product):
        parts, start = [], 0
        for f in T.factors:
            parts.append(add_support_epigraph(model, f, g[start:start + f.dim]))
            start += f.dim
        return stack(parts).sum()
    if isinstance(T, Lifted):
        w = model.nonneg_var(T.base.dim)
        ends = T._ends()
        for i in range(T.base.dim):
            model.add_nonneg(w[i].reshape(1) - g[ends[i]:ends[i + 1]])
        return add_support_epigraph(model, T.base, w)
    # positive part of g for the remaining variants
    u = model.nonneg_var(T.dim)
    model.add_nonneg(u - g)
    if isinstance(T, UnitBox):
        return u.sum()
    if isinstance(T, ScaledBox):
        return u.dot(np.array(T.upper))
    if isinstance(T, PNormCap):
        s = model.var()
        add_norm_cone(model, u, s, _dual_exponent(T.r))
        return s
    raise UnsupportedVariantError(f"no conic encoding for {type(T).__name__}")


@dataclass
class EpigraphRows:
    """Conic description of {(g, s) : s >= phi_T(-g)} over [g; s; aux].

    The constraints read ``G v + slack = h`` with slack in the cone ``dims``.
    """

    dim: int
    n_aux: int
    G: np.ndarray
    h: np.ndarray
    dims: dict

    def satisfied(self, g, s, tol=1e-7):
        """Check membership of (g, s) by solving for the auxiliary variables."""
        nv = self.dim + 1 + self.n_aux
        fixed = np.concatenate([np.asarray(g, float), [s]])
        c = np.zeros(self.n_aux + 1)
        c[-1] = 1.0
        # slack variable tau relaxes every cone row uniformly: G v + tau*e
        e = np.zeros(self.G.shape[0])
        e[: self.dims["l"]] = 1.0
        start = self.dims["l"]
        for d in self.dims["s"]:
            e[start:start + svec_len(d)] = svec(np.eye(d))
            start += svec_len(d)
        Gaux = np.hstack([self.G[:, self.dim + 1:], -e[:, None]])
        h = self.h - self.G[:, : self.dim + 1] @ fixed
        prog = ConicProgram(c, Gaux, h, np.zeros((0, nv - self.dim)), np.zeros(0), self.dims)
        sol = solve(prog)
        return sol.primal_objective <= tol


def dual_epigraph_rows(T):
    m = Model()
    g = m.var(T.dim)
    s = m.var()
    phi = add_support_epigraph(m, T, -g)
    m.add_nonneg(s - phi)
    prog = m.compile()
    return EpigraphRows(T.dim, prog.n - T.dim - 1, prog.G, prog.h, prog.dims)
