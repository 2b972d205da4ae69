"""Synthesis of linear estimates x_hat = H' omega with certified risk bounds.

Three observation regimes are handled by one SDP builder: random noise,
repeated observations (averaging T samples), and uncertain-but-bounded noise,
which is folded into the signal before solving.  Mixed noise reduces to the
random regime the same way.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import bounds as bd
from .conic import Model, SolverSettings, bmat
from .conic.solve import solve_checked
from .spectratope import (NormDescriptor, Spectratope, as_spectratope, linear_image, product,
                          zero)
from .symlin import min_eig, sym

REGIMES = ("random", "repeated", "ubb", "mixed")


class CertificateViolation(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class EstimationProblem:
    A: np.ndarray
    B: np.ndarray
    X: Spectratope
    norm: NormDescriptor
    noise: bd.NoiseModel = None
    regime: str = "random"
    T: int = 1
    noise_set: Spectratope = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        X = as_spectratope(self.X)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "X", X)
        if self.noise_set is not None:
            object.__setattr__(self, "noise_set", as_spectratope(self.noise_set))
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if A.shape[1] != X.dim or B.shape[1] != X.dim:
            raise ValueError(f"A and B need {X.dim} columns to match the signal set")
        if B.shape[0] != self.norm.dim:
            raise ValueError(f"B has {B.shape[0]} rows but the norm acts on R^{self.norm.dim}")
        if self.regime in ("random", "repeated", "mixed"):
            if self.noise is None:
                raise ValueError(f"regime {self.regime!r} needs a noise model")
        if self.noise is not None and self.noise.dim != A.shape[0]:
            raise ValueError("noise dimension differs from the number of observations")
        if self.regime in ("mixed",) and self.noise_set is None:
            raise ValueError("mixed regime needs a noise set")
        if self.noise_set is not None and self.noise_set.dim != A.shape[0]:
            raise ValueError("noise set dimension differs from the number of observations")
        if int(self.T) < 1:
            raise ValueError("repeated observations need T >= 1")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def nu(self):
        return self.B.shape[0]

    def to_record(self):
        rec = {"A": self.A.tolist(), "B": self.B.tolist(), "signal_set": self.X.to_record(),
               "norm": self.norm.to_record(), "regime": self.regime, "T": int(self.T)}
        if self.noise is not None:
            rec["noise"] = self.noise.to_record()
        if self.noise_set is not None:
            rec["noise_set"] = self.noise_set.to_record()
        return rec

    def digest(self):
        text = json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class LinearEstimate:
    H: np.ndarray
    regime: str = "random"
    T: int = 1


@dataclass
class RiskCertificate:
    opt: float
    multipliers: dict
    problem_hash: str
    diagnostics: dict = field(default_factory=dict)


def reduce_to_basic(p):
    """Move the image map of the signal set into A and B."""
    if p.X.is_basic:
        return p
    P = p.X.P
    return replace(p, A=p.A @ P, B=p.B @ P, X=Spectratope(p.X.core))


def _solve_design(p, settings, with_noise):
    """Joint SDP over (H, Lambda, Upsilon[, Upsilon', Theta]) for a basic signal set."""
    M = p.norm.dual_ball.Pmat
    model = Model()
    H = model.var(p.m, p.nu)
    lam = bd.add_multipliers(model, p.X)
    ups = bd.add_multipliers(model, p.norm.dual_ball)
    off = 0.5 * ((p.B.T - p.A.T @ H) @ M)
    model.add_psd(bmat([[lam.adjoint_sum, off], [off.T, ups.adjoint_sum]]))
    objective = lam.phi + ups.phi
    noise_parts = None
    if with_noise:
        Theta = model.sym_var(p.m)
        ups2 = bd.add_multipliers(model, p.norm.dual_ball)
        off2 = 0.5 * (H @ M)
        model.add_psd(bmat([[Theta, off2], [off2.T, ups2.adjoint_sum]]))
        objective = objective + ups2.phi + p.noise.gamma_expr(model, Theta) / float(p.T)
        noise_parts = (Theta, ups2)
    model.minimize(objective)
    prog = model.compile()
    sol = solve_checked(prog, settings)
    x = sol.x
    mult = {"Lambda": lam.values(x), "Upsilon": ups.values(x)}
    if noise_parts is not None:
        mult["Theta"] = sym(noise_parts[0].value(x))
        mult["Upsilon_noise"] = noise_parts[1].values(x)
    diag = {"iterations": sol.iterations, "gap": sol.gap, "primal_residual": sol.primal_residual,
            "dual_residual": sol.dual_residual, "dual_objective": sol.dual_objective}
    return H.value(x), sol.value, mult, diag


def synthesize(p, settings=None):
    """Linear estimate minimizing the certified risk bound for random noise."""
    if p.regime not in ("random", "repeated"):
        raise ValueError("synthesize handles the random and repeated regimes")
    q = reduce_to_basic(p)
    H, opt, mult, diag = _solve_design(q, settings, with_noise=True)
    est = LinearEstimate(H, p.regime, int(p.T))
    return est, RiskCertificate(opt, mult, p.digest(), diag)


def synthesize_repeated(p, settings=None):
    if p.regime != "repeated":
        p = replace(p, regime="repeated")
    return synthesize(p, settings)


def stacked_problem(p):
    """The repeated problem written as one observation of T stacked samples."""
    T = int(p.T)
    A = np.vstack([p.A] * T)
    noise = p.noise
    if isinstance(noise, bd.Singleton):
        stacked = bd.Singleton(np.kron(np.eye(T), noise.Q))
    elif isinstance(noise, bd.DominatedBy):
        stacked = bd.DominatedBy(np.kron(np.eye(T), noise.Qmax))
    else:
        raise ValueError("stacking is implemented for single and dominated noise models")
    return replace(p, A=A, noise=stacked, regime="random", T=1)


def augment_noise_set(p):
    """Fold a bounded perturbation into the signal: x+ = [x; eta], A+ = [A, I], B+ = [B, 0]."""
    A = np.hstack([p.A, np.eye(p.m)])
    B = np.hstack([p.B, np.zeros((p.nu, p.m))])
    return replace(p, A=A, B=B, X=product(p.X, p.noise_set), noise_set=None)


def reduce_mixed(p):
    if p.noise_set is None:
        raise ValueError("mixed regime needs a noise set")
    return augment_noise_set(replace(p, regime="random"))


def synthesize_ubb(p, settings=None, trials=64, rng=None):
    """Estimate for uncertain-but-bounded noise; returns (estimate, certificate, lower bound)."""
    q = augment_noise_set(p) if p.noise_set is not None else p
    q = reduce_to_basic(replace(q, regime="ubb", noise=None))
    H, opt, mult, diag = _solve_design(q, settings, with_noise=False)
    lower, witness, relax = lower_bound_rho(q, trials=trials, rng=rng, settings=settings)
    diag.update({"rho_relax": relax, "witness": witness,
                 "size": q.X.size + q.norm.dual_ball.size,
                 "tight_factor": bd.tightness_factor(q.X.size + q.norm.dual_ball.size)})
    est = LinearEstimate(H, "ubb", 1)
    return est, RiskCertificate(opt, mult, p.digest(), diag), lower


def kernel_basis(A, rtol=1e-10):
    u, s, vt = np.linalg.svd(A)
    smax = s.max(initial=0.0)
    rank = int(np.sum(s > rtol * smax)) if smax > 0 else 0
    return vt[rank:].T


def lower_bound_rho(p, trials=64, rng=None, settings=None):
    """Lower bound on the minimax risk from signals that produce zero observation.

    Returns ``(rho_hat, x_bar, rho_relax)``: the rounded bilinear value, its
    witness in X with A x_bar = 0, and the relaxation value bounding the
    maximum from above.
    """
    q = reduce_to_basic(p)
    E = kernel_basis(q.A)
    if E.shape[1] == 0:
        return 0.0, np.zeros(q.n), 0.0
    core = q.X.core
    Z = Spectratope(type(core)(tuple(m.restrict(E) for m in core.maps), core.T))
    Y = Spectratope(q.norm.dual_ball.core)
    M = q.norm.dual_ball.Pmat
    W = product(Y, Z)
    ny, nz = Y.dim, Z.dim
    C = np.zeros((ny + nz, ny + nz))
    C[:ny, ny:] = 0.5 * M.T @ q.B @ E
    C[ny:, :ny] = C[:ny, ny:].T
    cert = bd.quad_upper_bound(C, W, settings)
    rng = np.random.default_rng(0) if rng is None else rng
    w, value = bd.quad_lower_round(C, W, cert, trials, rng, settings)
    y, z = w[:ny], w[ny:]
    if value < 0:
        value, z = -value, -z
    x_bar = E @ z
    # the paired dual vector is only a feasible point; the norm itself is sharper
    value = max(value, float(q.norm(q.B @ x_bar)))
    return float(value), p.X.Pmat @ x_bar, cert.opt_star


def apply(est, omega):
    """H' omega, or H' (mean of the T samples) for repeated observations.

    For repeated estimates ``omega`` has shape (..., T, m).
    """
    omega = np.asarray(omega, dtype=float)
    if est.regime == "repeated":
        if omega.ndim < 2 or omega.shape[-2] != est.T:
            raise ValueError(f"repeated estimate needs {est.T} samples")
        omega = omega.mean(axis=-2)
    return omega @ est.H


def check_certificate(p, est, cert, tol=1e-7):
    """Recompute LMI feasibility and the objective from the stored multipliers."""
    q = reduce_to_basic(p)
    if q.regime in ("ubb",) and q.noise_set is not None:
        q = reduce_to_basic(augment_noise_set(q))
    if q.regime == "mixed":
        q = reduce_to_basic(reduce_mixed(q))
    mult = cert.multipliers
    H = est.H
    M = q.norm.dual_ball.Pmat
    Yb = q.norm.dual_ball
    off = 0.5 * (q.B.T - q.A.T @ H) @ M
    L1 = np.block([[bd.adjoint_sum(q.X, mult["Lambda"]), off], [off.T, bd.adjoint_sum(Yb, mult["Upsilon"])]])
    scale = max(1.0, abs(cert.opt))
    ok = min_eig(L1) >= -tol * scale
    ok &= all(min_eig(L) >= -tol * scale for L in mult["Lambda"] + mult["Upsilon"])
    value = bd.multiplier_objective(q.X, mult["Lambda"]) + bd.multiplier_objective(Yb, mult["Upsilon"])
    if "Theta" in mult:
        off2 = 0.5 * H @ M
        L2 = np.block([[mult["Theta"], off2], [off2.T, bd.adjoint_sum(Yb, mult["Upsilon_noise"])]])
        ok &= min_eig(L2) >= -tol * scale
        ok &= all(min_eig(L) >= -tol * scale for L in mult["Upsilon_noise"])
        value += bd.multiplier_objective(Yb, mult["Upsilon_noise"]) + p.noise.gamma(mult["Theta"]) / float(p.T)
    return bool(ok) and abs(value - cert.opt) <= tol * scale, value


# ---------------------------------------------------------------- Monte Carlo

@dataclass
class MonteCarloRisk:
    mean: float
    stderr: float
    grid_max: float
    worst_x: np.ndarray
    opt: float

    @property
    def valid(self):
        return self.mean <= self.opt + 3.0 * self.stderr


def _candidate_signals(p, est, rng, n_signals):
    X = p.X
    xs = [X.sample(rng, n_signals)]
    V = (p.B - est.H.T @ p.A) @ X.Pmat
    if np.any(V):
        _, _, vt = np.linalg.svd(V)
        d = vt[0]
        scale = 1.0 / np.sqrt(X.core.gauge_sq(d)) * (1.0 - 1e-10)
        y = d * scale
        xs.append(np.vstack([X.Pmat @ y, -X.Pmat @ y]))
    return np.vstack(xs)


def _noise_covariances(p):
    noise = p.noise
    if isinstance(noise, bd.Hull):
        return list(noise.members)
    return [noise.stress_covariance()]


def monte_carlo_risk(p, est, cert, trials=10_000, rng=None, n_signals=256, select_trials=500,
                     check=True):
    """Estimate sup_x E||Bx - x_hat(Ax + xi)|| with Gaussian noise.

    Candidate signals are scored with ``select_trials`` common noise draws;
    the worst one is re-evaluated with ``trials`` fresh draws so the reported
    mean is unbiased for that signal.
    """
    rng = np.random.default_rng() if rng is None else rng
    if p.regime == "mixed":
        p = reduce_mixed(p)
    if p.regime not in ("random", "repeated"):
        raise ValueError("Monte Carlo risk needs a random or repeated regime")
    T = int(p.T) if p.regime == "repeated" else 1
    xs = _candidate_signals(p, est, rng, n_signals)
    H = est.H
    bias = xs @ (p.B - H.T @ p.A).T
    best = (-np.inf, None, None)
    for Q in _noise_covariances(p):
        root = _psd_root(Q / T)
        xi = rng.standard_normal((select_trials, p.m)) @ root.T
        noise_err = xi @ H
        scores = np.array([p.norm(b - noise_err).mean() for b in bias])
        k = int(np.argmax(scores))
        if scores[k] > best[0]:
            best = (scores[k], k, root)
    grid_max, k, root = best
    xi = rng.standard_normal((trials, p.m)) @ root.T
    errs = p.norm(bias[k] - xi @ H)
    res = MonteCarloRisk(float(errs.mean()), float(errs.std(ddof=1) / np.sqrt(trials)), float(grid_max),
                         xs[k], float(cert.opt))
    if check and not res.valid:
        raise CertificateViolation(
            f"empirical risk {res.mean:.6g} exceeds bound {res.opt:.6g} by more than 3 stderr")
    return res


def _psd_root(Q):
    w, U = np.linalg.eigh(sym(Q))
    return U * np.sqrt(np.clip(w, 0.0, None))


# ---------------------------------------------------------------- estimator API

class LinearEstimator(BaseEstimator):
    """Minimax-oriented linear estimator of B x from observations A x + noise.

    ``fit(A, B)`` solves the design SDP; ``predict(observations)`` applies the
    estimate to rows of observations (shape (n, m), or (n, T, m) for repeated
    observations).
    """

    def __init__(self, signal_set=None, norm=None, noise=None, regime="random", n_repeats=1,
                 noise_set=None, tol=1e-8, backend="reference"):
        self.signal_set = signal_set
        self.norm = norm
        self.noise = noise
        self.regime = regime
        self.n_repeats = n_repeats
        self.noise_set = noise_set
        self.tol = tol
        self.backend = backend

    def _problem(self, A, B):
        return EstimationProblem(A, B, self.signal_set, self.norm, self.noise, self.regime,
                                 int(self.n_repeats), self.noise_set)

    def fit(self, A, B):
        A = check_array(A, ensure_min_samples=1)
        B = check_array(B, ensure_min_samples=1)
        settings = SolverSettings(gap_tol=self.tol, feas_tol=self.tol, backend=self.backend)
        problem = self._problem(A, B)
        self.lower_bound_ = None
        if self.regime == "ubb":
            est, cert, lower = synthesize_ubb(problem, settings)
            self.lower_bound_ = lower
        elif self.regime == "mixed":
            est, cert = synthesize(reduce_mixed(problem), settings)
        else:
            est, cert = synthesize(problem, settings)
        self.problem_ = problem
        self.estimate_ = est
        self.certificate_ = cert
        self.H_ = est.H
        self.risk_bound_ = cert.opt
        self.n_features_in_ = A.shape[0]
        return self

    def predict(self, observations):
        check_is_fitted(self, "H_")
        obs = np.asarray(observations, dtype=float)
        if self.regime == "repeated":
            if obs.ndim == 2:
                obs = obs[None]
            return apply(self.estimate_, obs)
        obs = check_array(obs)
        if obs.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} observation coordinates, got {obs.shape[1]}")
        return obs @ self.H_
