"""Covariance estimation from indirect Gaussian observations eta_t = A xi_t.

The unknown covariance theta, known to satisfy gamma*S <= theta <= S, is
written as theta = theta0 + sigma * S^{1/2} v S^{1/2} with v in the matrix box
{v : v^2 <= I}.  Lifted observations eta eta' - A theta0 A' are then repeated
noisy linear observations of v, which the estimator module handles directly.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import special_ortho_group

from . import bounds as bd
from .conic import Model, bmat
from .conic.solve import solve_checked
from .estimator import EstimationProblem, LinearEstimate, RiskCertificate, apply
from .spectratope import matrix_box, sym_frobenius_norm, sym_nuclear_norm
from .symlin import smat, sqrt_psd, svec, svec_len, sym, sym_basis

NORMS = ("frobenius", "nuclear")


@dataclass(frozen=True, eq=False)
class CovProblem:
    """Covariance recovery setup.

    ``B`` defines the target B theta B'.  ``samples`` holds one eta_t per row.
    """

    A: np.ndarray
    bound: np.ndarray
    gamma: float = 0.0
    B: np.ndarray = None
    norm: str = "frobenius"
    T: int = 1
    samples: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        S = sym(np.atleast_2d(np.asarray(self.bound, dtype=float)))
        if S.shape != (A.shape[1],) * 2:
            raise ValueError(f"bound must be {A.shape[1]}x{A.shape[1]}")
        if np.linalg.eigvalsh(S)[0] <= 0:
            raise ValueError("bound must be positive definite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        B = np.eye(A.shape[1]) if self.B is None else np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape[1] != A.shape[1]:
            raise ValueError("B must have as many columns as A")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "bound", S)
        object.__setattr__(self, "B", B)
        if self.samples is not None:
            X = np.atleast_2d(np.asarray(self.samples, dtype=float))
            if X.shape[1] != A.shape[0]:
                raise ValueError(f"samples need {A.shape[0]} columns")
            object.__setattr__(self, "samples", X)
            object.__setattr__(self, "T", X.shape[0])

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def center(self):
        return 0.5 * (1.0 + self.gamma) * self.bound

    @property
    def sigma(self):
        return 0.5 * (1.0 - self.gamma)

    def covariance(self, v):
        """theta = theta0 + sigma S^{1/2} v S^{1/2}."""
        R = sqrt_psd(self.bound)
        return self.center + self.sigma * R @ sym(v) @ R

    def signal(self, theta):
        """Inverse of ``covariance``."""
        R = sqrt_psd(self.bound)
        Ri = np.linalg.inv(R)
        return sym(Ri @ (sym(theta) - self.center) @ Ri) / self.sigma


def _svec_operator(left, right_scale, n_in):
    """Matrix over svec coordinates of v -> right_scale * L v L' with L = ``left``."""
    E = sym_basis(n_in)
    return right_scale * svec(left @ E @ left.T).T


def signal_operator(cp):
    """Lifted sensing map v -> sigma A S^{1/2} v S^{1/2} A' over svec coordinates."""
    return _svec_operator(cp.A @ sqrt_psd(cp.bound), cp.sigma, cp.n)


def target_operator(cp):
    """v -> sigma B S^{1/2} v S^{1/2} B', the v-dependent part of the target."""
    return _svec_operator(cp.B @ sqrt_psd(cp.bound), cp.sigma, cp.n)


def target_offset(cp):
    return cp.B @ cp.center @ cp.B.T


def lift_observations(cp, samples=None):
    """omega_t = svec(eta_t eta_t' - A theta0 A'), one per row."""
    eta = cp.samples if samples is None else np.atleast_2d(np.asarray(samples, dtype=float))
    if eta is None:
        raise ValueError("no samples to lift")
    if eta.shape[1] != cp.m:
        raise ValueError(f"samples need {cp.m} columns")
    base = cp.A @ cp.center @ cp.A.T
    return svec(eta[:, :, None] * eta[:, None, :] - base)


def noise_dominance(cp, conservative=False):
    """Q over svec(S^m) with <e, Q h> = c Tr(S A'hA S A'eA); c = 2, or n + 2 if ``conservative``."""
    E = sym_basis(cp.m)
    R = sqrt_psd(cp.bound)
    M = R @ cp.A.T @ E @ cp.A @ R
    F = svec(M)
    c = cp.n + 2.0 if conservative else 2.0
    return sym(c * F @ F.T)


def build_cov_problem(cp, conservative=False):
    """The repeated-observation problem for the signal v in svec coordinates."""
    p = svec_len(cp.B.shape[0])
    norm = sym_frobenius_norm(cp.B.shape[0]) if cp.norm == "frobenius" else sym_nuclear_norm(cp.B.shape[0])
    assert norm.dim == p
    return EstimationProblem(signal_operator(cp), target_operator(cp), matrix_box(np.eye(cp.n)), norm,
                             bd.Singleton(noise_dominance(cp, conservative)), "repeated", int(cp.T))


def estimate_target(cp, est, samples=None):
    """B theta_hat B' from the lifted observations."""
    omega = lift_observations(cp, samples)
    return target_offset(cp) + smat(apply(est, omega))


def _is_diag(M, tol=0.0):
    return np.all(np.abs(M - np.diag(np.diag(M))) <= tol)


def diagonal_fast_path(cp, settings=None):
    """Solve the covariance design for A = I, S = I, gamma = 0 and diagonal B.

    Every matrix variable of the general design can be taken diagonal here, so
    the two large LMIs split into one 2x2 LMI per svec coordinate.
    """
    n = cp.n
    if (cp.A.shape != (n, n) or not np.allclose(cp.A, np.eye(n)) or not np.allclose(cp.bound, np.eye(n))
            or cp.gamma != 0.0 or cp.B.shape != (n, n) or not _is_diag(cp.B)):
        raise ValueError("the fast path needs A = I, bound = I, gamma = 0 and a diagonal B")
    b = np.diag(cp.B)
    iu, ju = np.triu_indices(n)
    N = len(iu)
    target = 0.5 * b[iu] * b[ju]
    # R*[diag(l)] is diagonal with entry (l_i + l_j)/2 at svec coordinate (i, j)
    avg = np.zeros((N, n))
    avg[np.arange(N), iu] += 0.5
    avg[np.arange(N), ju] += 0.5
    model = Model()
    h = model.var(N)
    theta = model.var(N)
    lam = model.nonneg_var(n)
    r_lam = avg @ lam
    if cp.norm == "frobenius":
        ups, ups2 = model.nonneg_var(1), model.nonneg_var(1)
        r_ups, r_ups2 = [ups[0]] * N, [ups2[0]] * N
        dual_cost = ups.sum() + ups2.sum()
    else:
        ups, ups2 = model.nonneg_var(n), model.nonneg_var(n)
        r_ups, r_ups2 = avg @ ups, avg @ ups2
        dual_cost = ups.sum() + ups2.sum()
    for c in range(N):
        off = 0.5 * (target[c] - 0.5 * h[c])
        model.add_psd(_pair(r_lam[c], off, r_ups[c]))
        model.add_psd(_pair(theta[c], 0.5 * h[c], r_ups2[c]))
    model.minimize(lam.sum() + dual_cost + (2.0 / cp.T) * theta.sum())
    sol = solve_checked(model.compile(), settings)
    x = sol.x
    H = np.diag(h.value(x))
    mult = {"lambda": lam.value(x), "upsilon": ups.value(x), "upsilon_noise": ups2.value(x),
            "theta": theta.value(x)}
    diag = {"iterations": sol.iterations, "gap": sol.gap}
    return LinearEstimate(H, "repeated", int(cp.T)), RiskCertificate(sol.value, mult, "", diag)


def _pair(a, b, c):
    return bmat([[a.reshape(1, 1), b.reshape(1, 1)], [b.reshape(1, 1), c.reshape(1, 1)]])


def mle_baseline(samples, B=None, lower=0.0, upper=1.0):
    """Empirical covariance with eigenvalues clipped to [lower, upper]; returns B theta B'."""
    eta = np.atleast_2d(np.asarray(samples, dtype=float))
    C = eta.T @ eta / eta.shape[0]
    w, U = np.linalg.eigh(C)
    theta = (U * np.clip(w, lower, upper)) @ U.T
    return theta if B is None else B @ theta @ B.T


def read_samples(path):
    """One observation per row, whitespace or comma separated, ``#`` comments."""
    with open(path) as fh:
        text = fh.read()
    delim = "," if "," in text.split("\n", 1)[0] else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        data = np.loadtxt(path, delimiter=delim, comments="#", ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no samples")
    return data


def random_covariance(n, rng):
    """A Haar-random rotation of diag(u), u ~ Uniform[0, 1]^n."""
    U = special_ortho_group.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))
    return (U * rng.uniform(0.0, 1.0, n)) @ U.T


def simulate_samples(theta, T, rng, A=None):
    L = sqrt_psd(theta)
    xi = rng.standard_normal((T, theta.shape[0])) @ L.T
    return xi if A is None else xi @ np.asarray(A).T


def matrix_norm(M, kind):
    if kind == "frobenius":
        return float(np.linalg.norm(M, "fro"))
    return float(np.abs(np.linalg.eigvalsh(sym(M))).sum())
