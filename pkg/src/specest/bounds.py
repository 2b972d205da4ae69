"""Certified bounds: quadratic maximization over spectratopes, bias and noise terms.

Every builder here assembles a small SDP with :mod:`specest.conic`, solves
it and returns the optimal value together with the multipliers certifying it.
"""

from dataclasses import dataclass, field
from math import gamma, log, pi, sqrt

import numpy as np

from . import monotone as mono
from .conic import Model, SolverSettings, bmat, stack
from .conic.solve import solve_checked
from .spectratope import as_spectratope
from .symlin import NotPSDError, min_eig, psd_factor, sqrt_psd, sym


def tightness_factor(D):
    """2 max(ln(2D), 1)."""
    return 2.0 * max(log(2.0 * D), 1.0)


# ---------------------------------------------------------------- noise models

class NoiseModel:
    dim: int

    def gamma_expr(self, model, Theta):
        """Affine expression (with auxiliary constraints) for max_{Q in Pi} Tr(Q Theta)."""
        raise NotImplementedError

    def gamma(self, Theta):
        raise NotImplementedError

    def stress_covariance(self):
        """Covariance used for Gaussian Monte Carlo stress tests."""
        raise NotImplementedError


def _check_psd(Q, name, strict=False):
    Q = sym(Q)
    m = min_eig(Q)
    if m < -1e-10 or (strict and m <= 1e-12):
        raise NotPSDError(f"{name} must be positive {'definite' if strict else 'semidefinite'}")
    return Q


@dataclass(frozen=True, eq=False)
class Singleton(NoiseModel):
    Q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_psd(self.Q, "noise covariance"))

    @property
    def dim(self):
        return self.Q.shape[0]

    def gamma_expr(self, model, Theta):
        return Theta.dot(self.Q)

    def gamma(self, Theta):
        return float(np.sum(self.Q * Theta))

    def stress_covariance(self):
        return self.Q

    def to_record(self):
        return {"type": "singleton", "Q": self.Q.tolist()}


@dataclass(frozen=True, eq=False)
class DominatedBy(NoiseModel):
    """All covariances between 0 and Qmax; Gamma uses Theta >= 0 implied by the LMI."""

    Qmax: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Qmax", _check_psd(self.Qmax, "dominating covariance", strict=True))

    @property
    def dim(self):
        return self.Qmax.shape[0]

    def gamma_expr(self, model, Theta):
        return Theta.dot(self.Qmax)

    def gamma(self, Theta):
        return float(np.sum(self.Qmax * Theta))

    def stress_covariance(self):
        return self.Qmax

    def to_record(self):
        return {"type": "dominated_by", "Qmax": self.Qmax.tolist()}


@dataclass(frozen=True, eq=False)
class Hull(NoiseModel):
    members: tuple

    def __post_init__(self):
        members = tuple(_check_psd(Q, "hull member", strict=True) for Q in self.members)
        if not members:
            raise ValueError("a hull needs at least one member")
        object.__setattr__(self, "members", members)

    @property
    def dim(self):
        return self.members[0].shape[0]

    def gamma_expr(self, model, Theta):
        g = model.var()
        for Q in self.members:
            model.add_nonneg(g - Theta.dot(Q))
        return g

    def gamma(self, Theta):
        return max(float(np.sum(Q * Theta)) for Q in self.members)

    def stress_covariance(self):
        return max(self.members, key=lambda Q: np.trace(Q))

    def to_record(self):
        return {"type": "hull", "members": [Q.tolist() for Q in self.members]}


def noise_from_record(rec):
    kind = rec["type"]
    if kind == "singleton":
        return Singleton(np.asarray(rec["Q"], dtype=float))
    if kind == "dominated_by":
        return DominatedBy(np.asarray(rec["Qmax"], dtype=float))
    if kind == "hull":
        return Hull(tuple(np.asarray(Q, dtype=float) for Q in rec["members"]))
    raise ValueError(f"unknown noise model {kind!r}")


# ---------------------------------------------------------------- builder helpers

@dataclass
class Multipliers:
    """PSD multipliers attached to the blocks of one spectratope."""

    blocks: list
    phi: object
    adjoint_sum: object

    def values(self, x):
        return [sym(b.value(x)) for b in self.blocks]


def add_multipliers(model, X):
    """PSD Lambda_k per block of X's core; returns phi_T(lambda[Lambda]) and sum_k R_k^*(Lambda_k)."""
    X = as_spectratope(X)
    blocks = [model.psd_var(m.d) for m in X.core.maps]
    traces = stack([L.trace() for L in blocks])
    phi = mono.add_support_epigraph(model, X.core.T, traces)
    total = None
    for m, L in zip(X.core.maps, blocks):
        term = m.calR_star_affine(L)
        total = term if total is None else total + term
    return Multipliers(blocks, phi, total)


def multiplier_objective(X, lambdas):
    X = as_spectratope(X)
    return X.core.T.support(np.array([np.trace(L) for L in lambdas]))


def adjoint_sum(X, lambdas):
    X = as_spectratope(X)
    return sum(m.calR_star(L) for m, L in zip(X.core.maps, lambdas))


# ---------------------------------------------------------------- quadratic bound

@dataclass
class QuadBoundCert:
    opt_star: float
    lambdas: list
    tight_factor: float
    size: int
    diagnostics: dict = field(default_factory=dict)

    def check(self, C, X, tol=1e-8):
        """Recompute feasibility and the objective from the multipliers alone."""
        X = as_spectratope(X)
        Cbar = X.Pmat.T @ sym(C) @ X.Pmat
        slack = adjoint_sum(X, self.lambdas) - Cbar
        ok_lmi = min_eig(slack) >= -tol * max(1.0, np.abs(Cbar).max())
        ok_psd = all(min_eig(L) >= -tol for L in self.lambdas)
        value = multiplier_objective(X, self.lambdas)
        return ok_lmi and ok_psd and abs(value - self.opt_star) <= 1e-6 * max(1.0, abs(value))


def quad_upper_bound(C, X, settings=None):
    """Upper bound on max_{x in X} x'Cx from the Lagrangian SDP."""
    X = as_spectratope(X)
    C = sym(C)
    if C.shape != (X.dim, X.dim):
        raise ValueError(f"C must be {X.dim}x{X.dim}")
    Cbar = sym(X.Pmat.T @ C @ X.Pmat)
    model = Model()
    mult = add_multipliers(model, X)
    model.add_psd(mult.adjoint_sum - Cbar)
    model.minimize(mult.phi)
    prog = model.compile()
    sol = solve_checked(prog, settings)
    return QuadBoundCert(
        opt_star=sol.value,
        lambdas=mult.values(sol.x),
        tight_factor=tightness_factor(X.size),
        size=X.size,
        diagnostics={"iterations": sol.iterations, "gap": sol.gap},
    )


def quad_relaxation(C, X, settings=None):
    """Solve max Tr(Cbar Q) over Q >= 0, calR_k(Q) <= t_k I, t in T; returns (value, Q)."""
    X = as_spectratope(X)
    Cbar = sym(X.Pmat.T @ sym(C) @ X.Pmat)
    model = Model()
    Q = model.psd_var(X.core.n)
    t = model.var(X.core.K)
    mono.add_membership(model, X.core.T, t, 1.0)
    for k, m in enumerate(X.core.maps):
        model.add_psd(t[k] * np.eye(m.d) - m.calR_affine(Q))
    model.minimize(-Q.dot(Cbar))
    sol = solve_checked(model.compile(), settings)
    return -sol.value, sym(Q.value(sol.x))


def quad_lower_round(C, X, cert=None, trials=64, rng=None, settings=None):
    """Feasible near-maximizer of x'Cx on X by Rademacher rounding of the relaxation.

    Returns ``(x, value)`` with x in X and value = x'Cx.
    """
    X = as_spectratope(X)
    rng = np.random.default_rng() if rng is None else rng
    Cbar = sym(X.Pmat.T @ sym(C) @ X.Pmat)
    relax_value, Q = quad_relaxation(C, X, settings)
    w, U = np.linalg.eigh(Q)
    # interior-point solutions carry O(gap) eigenvalues on the null space
    w = np.where(w > 1e-7 * max(w[-1], 0.0), w, 0.0)
    if w[-1] <= 1e-14:
        return np.zeros(X.dim), 0.0
    root = (U * np.sqrt(w)) @ U.T
    _, Urot = np.linalg.eigh(sym(root @ Cbar @ root))
    V = root @ Urot
    eta = rng.choice([-1.0, 1.0], size=(trials, V.shape[1]))
    xi = eta @ V.T
    g = np.atleast_1d(X.core.gauge_sq(xi))
    best, best_val = np.zeros(X.core.n), 0.0
    for k in range(trials):
        if g[k] <= 0:
            continue
        y = xi[k] / np.sqrt(g[k]) * (1.0 - 1e-10)
        val = float(y @ Cbar @ y)
        if val > best_val:
            best, best_val = y, val
    return X.Pmat @ best, best_val


# ---------------------------------------------------------------- bias and noise terms

def _dual_ball_parts(norm):
    B = norm.dual_ball
    return B, B.Pmat


def phi_bar(V, X, norm, settings=None):
    """Upper bound on max_{x in X} ||V x||; returns (value, Lambdas, Upsilons)."""
    X = as_spectratope(X)
    V = np.atleast_2d(np.asarray(V, dtype=float)) @ X.Pmat
    B, M = _dual_ball_parts(norm)
    if V.shape[0] != B.dim:
        raise ValueError(f"V must have {B.dim} rows")
    model = Model()
    lam = add_multipliers(model, X)
    ups = add_multipliers(model, B)
    off = 0.5 * V.T @ M
    model.add_psd(bmat([[lam.adjoint_sum, off], [off.T, ups.adjoint_sum]]))
    model.minimize(lam.phi + ups.phi)
    sol = solve_checked(model.compile(), settings)
    return sol.value, lam.values(sol.x), ups.values(sol.x)


def psi_bar(H, noise, norm, settings=None):
    """Upper bound on sup over the noise family of E||H' xi||; returns (value, Upsilons, Theta)."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    B, M = _dual_ball_parts(norm)
    m = H.shape[0]
    if H.shape[1] != B.dim or noise.dim != m:
        raise ValueError("dimension mismatch between H, the noise model and the norm")
    model = Model()
    Theta = model.sym_var(m)
    ups = add_multipliers(model, B)
    off = 0.5 * H @ M
    model.add_psd(bmat([[Theta, off], [off.T, ups.adjoint_sum]]))
    model.minimize(noise.gamma_expr(model, Theta) + ups.phi)
    sol = solve_checked(model.compile(), settings)
    return sol.value, ups.values(sol.x), sym(Theta.value(sol.x))


def gaussian_moment_factor(p):
    """(E|g|^p)^{1/p} for standard normal g."""
    return sqrt(2.0) * gamma((p + 1.0) / 2.0) ** (1.0 / p) / pi ** (1.0 / (2.0 * p))


def psi_bar_lp(H, Q, p):
    """Closed form for l_p norms, p in [1, 2]; returns (bound, gaussian_bound).

    ``bound`` is the l_p norm of the column norms of Q^{1/2} H.  ``gaussian_bound``
    is the sharper value (E ||H' xi||_p^p)^{1/p} for xi ~ N(0, Q).
    """
    if not 1 <= p <= 2:
        raise ValueError("p must lie in [1, 2]")
    root = sqrt_psd(Q)
    a = np.linalg.norm(root @ np.atleast_2d(H), axis=0)
    value = float(np.linalg.norm(a, p))
    return value, gaussian_moment_factor(p) * value


def gaussian_norm_bound(Y, Q, norm, settings=None, check=True):
    """Upper bound on E||Y' zeta||, zeta ~ N(0, Q), solved in both equivalent forms.

    Returns ``(value, value_alt)`` where ``value_alt`` uses the variables
    G = Q^{1/2} Theta Q^{1/2}.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Q = sym(Q)
    B, M = _dual_ball_parts(norm)
    N = Y.shape[0]

    model = Model()
    Theta = model.sym_var(N)
    ups = add_multipliers(model, B)
    off = 0.5 * Y @ M
    model.add_psd(bmat([[Theta, off], [off.T, ups.adjoint_sum]]))
    model.minimize(Theta.dot(Q) + ups.phi)
    first = solve_checked(model.compile(), settings).value

    model = Model()
    G = model.sym_var(N)
    ups = add_multipliers(model, B)
    off = 0.5 * sqrt_psd(Q) @ Y @ M
    model.add_psd(bmat([[G, off], [off.T, ups.adjoint_sum]]))
    model.minimize(G.trace() + ups.phi)
    second = solve_checked(model.compile(), settings).value
    if check and abs(first - second) > 1e-6 * (1.0 + abs(first)):
        raise ArithmeticError(f"equivalent formulations disagree: {first} vs {second}")
    return first, second


def concentration_bound(X, Q):
    """(rho, min(2D exp(-1/(2 rho)), 1)) for xi ~ N(0, Q) leaving a basic spectratope X.

    rho is the smallest value with calR_k(Q) <= rho t_k I for some t in T; by
    monotonicity of T it equals the gauge of the vector of top eigenvalues.
    """
    X = as_spectratope(X)
    if not X.is_basic:
        raise ValueError("concentration bound needs a basic spectratope")
    Q = _check_psd(Q, "Q")
    s = np.array([max(np.linalg.eigvalsh(m.calR(Q))[-1], 0.0) for m in X.core.maps])
    rho = X.core.T.gauge(s)
    if rho <= 0:
        return 0.0, 0.0
    if rho > 1e4:
        return float(rho), 1.0
    return float(rho), float(min(2.0 * X.size * np.exp(-1.0 / (2.0 * rho)), 1.0))
