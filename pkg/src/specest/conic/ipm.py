"""Primal-dual interior-point method for programs with LP and PSD cones.

Path following with Nesterov-Todd scaling and Mehrotra's predictor-corrector,
in the non-embedded form of Vandenberghe's cvxopt ``coneqp`` notes.  The
Newton systems are reduced to dense normal equations solved by Cholesky.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ..symlin import smat, svec, svec_len

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
MAX_ITER = "max_iter"
# best iterate within near_factor of the tolerances after the solver stalled
NEAR_OPTIMAL = "near_optimal"


@dataclass
class SolverSettings:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 200
    near_factor: float = 1e3
    stall_iters: int = 8
    backend: str = "reference"
    verbose: bool = False


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def value(self):
        return self.primal_objective


class _Cone:
    """Index bookkeeping and Jordan-algebra helpers for R^l_+ x S^{d1}_+ x ..."""

    def __init__(self, dims):
        self.l = int(dims["l"])
        self.sizes = [int(d) for d in dims["s"]]
        self.slices = []
        start = self.l
        for d in self.sizes:
            self.slices.append(slice(start, start + svec_len(d)))
            start += svec_len(d)
        self.size = start
        self.degree = self.l + sum(self.sizes)
        # per-coordinate index pairs for diagonal-lambda operations
        self.pairs = []
        for d in self.sizes:
            r, c = np.triu_indices(d)
            self.pairs.append((r, c))

    def identity(self):
        e = np.zeros(self.size)
        e[: self.l] = 1.0
        for d, sl in zip(self.sizes, self.slices):
            e[sl] = svec(np.eye(d))
        return e

    def min_eig_shift(self, v):
        """Smallest t with v + t*e in the cone interior boundary, i.e. -min eig."""
        t = -np.inf
        if self.l:
            t = max(t, -v[: self.l].min())
        for sl in self.slices:
            t = max(t, -np.linalg.eigvalsh(smat(v[sl]))[0])
        return t

    def product(self, u, v):
        """Jordan product u o v."""
        out = np.empty(self.size)
        out[: self.l] = u[: self.l] * v[: self.l]
        for sl in self.slices:
            U, V = smat(u[sl]), smat(v[sl])
            out[sl] = svec(0.5 * (U @ V + V @ U))
        return out

    def max_step(self, lam_diag, v):
        """Largest alpha with lam + alpha v in the cone (lam diagonal per block)."""
        alpha = np.inf
        if self.l:
            ratio = v[: self.l] / lam_diag[0]
            m = ratio.min()
            if m < 0:
                alpha = min(alpha, -1.0 / m)
        for (r, c), sl, lm in zip(self.pairs, self.slices, lam_diag[1:]):
            scaled = v[sl] / np.sqrt(lm[r] * lm[c])
            m = np.linalg.eigvalsh(smat(scaled))[0]
            if m < 0:
                alpha = min(alpha, -1.0 / m)
        return alpha


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-T} s = lambda (diagonal per block)."""

    def __init__(self, cone, s, z):
        self.cone = cone
        sl_, zl = s[: cone.l], z[: cone.l]
        self.w = np.sqrt(sl_ / zl)
        lam_lin = np.sqrt(sl_ * zl)
        self.R, self.Rinv = [], []
        self.lam_diag = [lam_lin]
        for sl in cone.slices:
            Ls = linalg.cholesky(smat(s[sl]), lower=True)
            Lz = linalg.cholesky(smat(z[sl]), lower=True)
            U, sv, Vt = linalg.svd(Lz.T @ Ls)
            isq = 1.0 / np.sqrt(sv)
            self.R.append(Ls @ Vt.T * isq)
            self.Rinv.append((U * isq).T @ Lz.T)
            self.lam_diag.append(sv)
        lam = np.empty(cone.size)
        lam[: cone.l] = lam_lin
        for sl, lm in zip(cone.slices, self.lam_diag[1:]):
            lam[sl] = svec(np.diag(lm))
        self.lam = lam
        f = np.empty(cone.size)
        f[: cone.l] = lam_lin
        for (r, c), sl, lm in zip(cone.pairs, cone.slices, self.lam_diag[1:]):
            f[sl] = 0.5 * (lm[r] + lm[c])
        self.f = f

    def scale(self, v, mode):
        """Apply W ('W'), W^T ('WT'), W^{-1} ('Winv') or W^{-T} ('WinvT') to v.

        ``v`` may be a vector or a matrix whose columns are cone vectors.
        """
        cone = self.cone
        out = np.empty_like(v)
        lin = v[: cone.l]
        if mode in ("W", "WT"):
            w = self.w
        else:
            w = 1.0 / self.w
        out[: cone.l] = lin * (w[:, None] if v.ndim == 2 else w)
        for k, sl in enumerate(cone.slices):
            blk = v[sl]
            M = smat(blk.T if v.ndim == 2 else blk)
            if mode == "W":
                L = self.R[k].T
            elif mode == "WT":
                L = self.R[k]
            elif mode == "Winv":
                L = self.Rinv[k].T
            else:
                L = self.Rinv[k]
            res = svec(L @ M @ L.T)
            out[sl] = res.T if v.ndim == 2 else res
        return out


class _KKT:
    """Solver for  A'dy + G'dz = bx,  A dx = by,  G dx - W'W dz = bz."""

    refine = 3

    def __init__(self, G, A, scaling):
        self.G, self.A, self.W = G, A, scaling
        if scaling is None:
            self.Gs = G
        else:
            self.Gs = scaling.scale(G, "WinvT")
        H = self.Gs.T @ self.Gs
        n = H.shape[0]
        p = A.shape[0]
        self.p = p
        K = H + A.T @ A if p else H
        scale = max(1.0, np.abs(np.diag(K)).max(initial=0.0))
        self.reg = 0.0
        try:
            self.Kf = linalg.cho_factor(K, lower=True, check_finite=False)
        except linalg.LinAlgError:
            self.reg = 1e-13 * scale
            self.Kf = linalg.cho_factor(K + self.reg * np.eye(n), lower=True, check_finite=False)
        self.H, self.K = H, K
        if p:
            KiAt = linalg.cho_solve(self.Kf, A.T, check_finite=False)
            S = A @ KiAt
            self.KiAt = KiAt
            try:
                self.Sf = linalg.cho_factor(S, lower=True, check_finite=False)
            except linalg.LinAlgError:
                self.Sf = linalg.cho_factor(S + 1e-13 * max(1.0, np.abs(np.diag(S)).max()) * np.eye(p),
                                            lower=True, check_finite=False)

    def _reduced(self, r1, r2):
        if not self.p:
            return linalg.cho_solve(self.Kf, r1, check_finite=False), np.zeros(0)
        rhs = r1 + self.A.T @ r2
        Kr = linalg.cho_solve(self.Kf, rhs, check_finite=False)
        dy = linalg.cho_solve(self.Sf, self.A @ Kr - r2, check_finite=False)
        dx = Kr - self.KiAt @ dy
        return dx, dy

    def solve_scaled(self, bx, by, bzs):
        """Return dx, dy and the scaled dual step W dz given W^{-T} bz."""
        r1 = bx + self.Gs.T @ bzs
        dx, dy = self._reduced(r1, by)
        # iterative refinement on the reduced system while it keeps helping
        size = max(1.0, np.linalg.norm(r1), np.linalg.norm(by) if self.p else 0.0)
        last = np.inf
        for _ in range(self.refine):
            res1 = r1 - self.Gs.T @ (self.Gs @ dx) - (self.A.T @ dy if self.p else 0.0)
            res2 = by - self.A @ dx if self.p else np.zeros(0)
            err = max(np.linalg.norm(res1), np.linalg.norm(res2) if self.p else 0.0)
            if err <= 1e-15 * size or err >= 0.5 * last:
                break
            last = err
            ex, ey = self._reduced(res1, res2)
            dx, dy = dx + ex, dy + ey
        dzs = self.Gs @ dx - bzs
        return dx, dy, dzs


def _norm(v):
    return float(np.linalg.norm(v)) if v.size else 0.0


def solve_reference(prog, settings=None):
    settings = settings or SolverSettings()
    c, G, h, A, b = prog.c, prog.G, prog.h, prog.A, prog.b
    cone = _Cone(prog.dims)
    n, p = c.shape[0], A.shape[0]
    e = cone.identity()

    if G.shape[0] == 0:
        raise ValueError("program has no cone constraints")

    resx0 = max(1.0, _norm(c))
    resy0 = max(1.0, _norm(b))
    resz0 = max(1.0, _norm(h))

    # starting points from least-squares problems with W = I
    kkt = _KKT(G, A, None)
    x, y, dzs = kkt.solve_scaled(np.zeros(n), b, h)
    s = -dzs
    _, y_d, z = kkt.solve_scaled(-c, np.zeros(p), np.zeros(cone.size))
    y = y_d
    nrms, nrmz = _norm(s), _norm(z)
    ts = cone.min_eig_shift(s)
    tz = cone.min_eig_shift(z)
    if ts >= -1e-8 * max(nrms, 1.0):
        s = s + (1.0 + ts) * e
    if tz >= -1e-8 * max(nrmz, 1.0):
        z = z + (1.0 + tz) * e

    best = None
    status = MAX_ITER
    info = {}
    it = 0
    for it in range(settings.max_iter + 1):
        rx = G.T @ z + c + (A.T @ y if p else 0.0)
        ry = A @ x - b if p else np.zeros(0)
        rz = G @ x + s - h
        pcost = float(c @ x)
        dcost = float(-h @ z - (b @ y if p else 0.0))
        gap = float(s @ z)
        pres = max(_norm(ry) / resy0, _norm(rz) / resz0)
        dres = _norm(rx) / resx0
        scale = max(1.0, abs(pcost), abs(dcost))
        relgap = max(gap, abs(pcost - dcost)) / scale
        score = max(pres, dres, relgap)
        if best is None or score < best[0]:
            best = (score, x.copy(), s.copy(), y.copy(), z.copy(), it)
        elif it - best[5] >= settings.stall_iters:
            info["stalled"] = True
            break
        if settings.verbose:
            print(f"{it:3d} {pcost: .8e} {dcost: .8e} gap={gap:.2e} pres={pres:.2e} dres={dres:.2e}")
        if pres <= settings.feas_tol and dres <= settings.feas_tol and relgap <= settings.gap_tol:
            status = OPTIMAL
            break
        # infeasibility certificates from diverging iterates
        hz = float(h @ z + (b @ y if p else 0.0))
        if hz < 0:
            pinf = _norm(G.T @ z + (A.T @ y if p else 0.0)) / resx0 / (-hz)
            if pinf <= settings.feas_tol:
                status = PRIMAL_INFEASIBLE
                break
        cx = pcost
        if cx < 0:
            dinf = max(_norm(A @ x) / resy0 if p else 0.0, _norm(G @ x + s) / resz0) / (-cx)
            if dinf <= settings.feas_tol:
                status = DUAL_INFEASIBLE
                break
        if it == settings.max_iter:
            break

        try:
            W = _Scaling(cone, s, z)
            kkt = _KKT(G, A, W)
        except (linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            info["numerical_failure"] = str(exc)
            break
        lam = W.lam
        f = W.f
        mu = gap / cone.degree

        minus_rz_s = W.scale(-rz, "WinvT")

        def newton(rs):
            lam_inv_rs = rs / f
            bzs = minus_rz_s - lam_inv_rs
            dx, dy, dzs = kkt.solve_scaled(-rx, -ry, bzs)
            dss = lam_inv_rs - dzs
            return dx, dy, dzs, dss

        rs_aff = -cone.product(lam, lam)
        dx, dy, dzs, dss = newton(rs_aff)
        step = min(cone.max_step(W.lam_diag, dss), cone.max_step(W.lam_diag, dzs))
        alpha_aff = min(1.0, step)
        sigma = (1.0 - alpha_aff) ** 3

        rs = rs_aff - cone.product(dss, dzs) + sigma * mu * e
        dx, dy, dzs, dss = newton(rs)
        step = min(cone.max_step(W.lam_diag, dss), cone.max_step(W.lam_diag, dzs))
        alpha = min(1.0, 0.99 * step)

        x = x + alpha * dx
        if p:
            y = y + alpha * dy
        s = s + alpha * W.scale(dss, "WT")
        z = z + alpha * W.scale(dzs, "Winv")

    if status == MAX_ITER and best is not None:
        score, x, s, y, z, _ = best
        if score <= settings.near_factor * max(settings.gap_tol, settings.feas_tol):
            status = NEAR_OPTIMAL
    rx = G.T @ z + c + (A.T @ y if p else 0.0)
    ry = A @ x - b if p else np.zeros(0)
    rz = G @ x + s - h
    pcost = float(c @ x)
    dcost = float(-h @ z - (b @ y if p else 0.0))
    gap = max(float(s @ z), abs(pcost - dcost)) / max(1.0, abs(pcost), abs(dcost))
    return ConicSolution(
        status=status,
        x=x, s=s, y=y, z=z,
        primal_objective=pcost + prog.offset,
        dual_objective=dcost + prog.offset,
        gap=gap,
        primal_residual=max(_norm(ry) / resy0, _norm(rz) / resz0),
        dual_residual=_norm(rx) / resx0,
        iterations=it,
        info=info,
    )
