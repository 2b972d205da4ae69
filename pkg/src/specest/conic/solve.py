"""Backend dispatch and duality-based verification of conic solutions."""

from dataclasses import dataclass, field

import numpy as np

from ..symlin import smat, svec, svec_len
from .ipm import NEAR_OPTIMAL, OPTIMAL, ConicSolution, SolverSettings, solve_reference


class SolverError(RuntimeError):
    """A solve that did not reach optimality; carries the solution and program."""

    def __init__(self, message, solution=None, program=None):
        super().__init__(message)
        self.solution = solution
        self.program = program


def solve(prog, settings=None):
    settings = settings or SolverSettings()
    if settings.backend == "reference":
        return solve_reference(prog, settings)
    if settings.backend == "external":
        return solve_cvxopt(prog, settings)
    raise ValueError(f"unknown backend {settings.backend!r}")


def solve_checked(prog, settings=None):
    """Solve and raise :class:`SolverError` unless the status is optimal or near optimal."""
    sol = solve(prog, settings)
    if sol.status not in (OPTIMAL, NEAR_OPTIMAL):
        raise SolverError(
            f"conic solve ended with status {sol.status} "
            f"(gap={sol.gap:.2e}, pres={sol.primal_residual:.2e}, dres={sol.dual_residual:.2e})",
            sol, prog)
    return sol


def _full_rows(d):
    """Map svec rows of a d x d block to cvxopt's column-major full storage."""
    rows, cols = np.triu_indices(d)
    T = np.zeros((d * d, svec_len(d)))
    for k, (i, j) in enumerate(zip(rows, cols)):
        if i == j:
            T[i + j * d, k] = 1.0
        else:
            T[i + j * d, k] = 1.0 / np.sqrt(2.0)
            T[j + i * d, k] = 1.0 / np.sqrt(2.0)
    return T


def solve_cvxopt(prog, settings):
    import cvxopt
    from cvxopt import solvers

    l = prog.dims["l"]
    parts_G = [prog.G[:l]]
    parts_h = [prog.h[:l]]
    start = l
    maps = []
    for d in prog.dims["s"]:
        T = _full_rows(d)
        maps.append(T)
        sl = slice(start, start + svec_len(d))
        parts_G.append(T @ prog.G[sl])
        parts_h.append(T @ prog.h[sl])
        start += svec_len(d)
    G = np.vstack(parts_G)
    h = np.concatenate(parts_h)
    opts = {"show_progress": settings.verbose, "abstol": settings.gap_tol, "reltol": settings.gap_tol,
            "feastol": settings.feas_tol, "maxiters": settings.max_iter}
    args = dict(dims={"l": l, "q": [], "s": list(prog.dims["s"])}, options=opts)
    if prog.A.shape[0]:
        args["A"] = cvxopt.matrix(prog.A)
        args["b"] = cvxopt.matrix(prog.b)
    res = solvers.conelp(cvxopt.matrix(prog.c), cvxopt.matrix(G), cvxopt.matrix(h), **args)
    x = np.array(res["x"]).ravel()
    zf = np.array(res["z"]).ravel()
    sf = np.array(res["s"]).ravel()
    y = np.array(res["y"]).ravel() if prog.A.shape[0] else np.zeros(0)
    z = np.empty(prog.G.shape[0])
    s = np.empty(prog.G.shape[0])
    z[:l], s[:l] = zf[:l], sf[:l]
    start, fstart = l, l
    for d in prog.dims["s"]:
        z[start:start + svec_len(d)] = svec(zf[fstart:fstart + d * d].reshape(d, d).T)
        s[start:start + svec_len(d)] = svec(sf[fstart:fstart + d * d].reshape(d, d).T)
        start += svec_len(d)
        fstart += d * d
    status = {"optimal": OPTIMAL, "primal infeasible": "primal_infeasible",
              "dual infeasible": "dual_infeasible"}.get(res["status"], "max_iter")
    pcost = float(prog.c @ x)
    dcost = float(-prog.h @ z - prog.b @ y)
    rep = residuals(prog, x, s, y, z)
    return ConicSolution(status, x, s, y, z, pcost + prog.offset, dcost + prog.offset,
                         rep["gap"], rep["primal_residual"], rep["dual_residual"],
                         int(res.get("iterations", 0)), {"backend": "cvxopt"})


def residuals(prog, x, s, y, z):
    p = prog.A.shape[0]
    rx = prog.G.T @ z + prog.c + (prog.A.T @ y if p else 0.0)
    ry = prog.A @ x - prog.b if p else np.zeros(0)
    rz = prog.G @ x + s - prog.h
    pcost = float(prog.c @ x)
    dcost = float(-prog.h @ z - (prog.b @ y if p else 0.0))
    scale = max(1.0, abs(pcost), abs(dcost))
    return {
        "rx": rx, "ry": ry, "rz": rz,
        "primal_objective": pcost, "dual_objective": dcost,
        "gap": max(float(s @ z), abs(pcost - dcost)) / scale,
        "primal_residual": max(np.linalg.norm(ry) / max(1.0, np.linalg.norm(prog.b)) if p else 0.0,
                               np.linalg.norm(rz) / max(1.0, np.linalg.norm(prog.h))),
        "dual_residual": np.linalg.norm(rx) / max(1.0, np.linalg.norm(prog.c)),
        "scale": scale,
    }


@dataclass
class VerifyReport:
    ok: bool
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    min_eig_s: float
    min_eig_z: float
    failures: list = field(default_factory=list)

    def raise_if_failed(self):
        if not self.ok:
            raise SolverError("verification failed: " + "; ".join(self.failures))


def _cone_min_eigs(prog, v):
    out = []
    l = prog.dims["l"]
    if l:
        out.append(("nonneg", float(v[:l].min())))
    start = l
    for k, d in enumerate(prog.dims["s"]):
        out.append((f"psd[{k}]", float(np.linalg.eigvalsh(smat(v[start:start + svec_len(d)]))[0])))
        start += svec_len(d)
    return out


def verify(prog, sol, tol=1e-7):
    """Recompute residuals, cone membership and weak duality for a solution."""
    rep = residuals(prog, sol.x, sol.s, sol.y, sol.z)
    failures = []
    if rep["primal_residual"] > tol:
        worst = int(np.argmax(np.abs(rep["rz"]))) if rep["rz"].size else -1
        failures.append(f"primal residual {rep['primal_residual']:.3e} (worst cone row {worst})")
    if rep["dual_residual"] > tol:
        worst = int(np.argmax(np.abs(rep["rx"])))
        failures.append(f"dual residual {rep['dual_residual']:.3e} (worst variable {worst})")
    se = _cone_min_eigs(prog, sol.s)
    ze = _cone_min_eigs(prog, sol.z)
    for (name, m) in se:
        if m < -tol * rep["scale"]:
            failures.append(f"slack outside cone in {name} (min eig {m:.3e})")
    for (name, m) in ze:
        if m < -tol * rep["scale"]:
            failures.append(f"dual outside cone in {name} (min eig {m:.3e})")
    if rep["primal_objective"] < rep["dual_objective"] - tol * rep["scale"]:
        failures.append(
            f"weak duality violated: primal {rep['primal_objective']:.9g} < dual {rep['dual_objective']:.9g}")
    return VerifyReport(
        ok=not failures,
        primal_objective=rep["primal_objective"] + prog.offset,
        dual_objective=rep["dual_objective"] + prog.offset,
        primal_residual=rep["primal_residual"],
        dual_residual=rep["dual_residual"],
        min_eig_s=min((m for _, m in se), default=0.0),
        min_eig_z=min((m for _, m in ze), default=0.0),
        failures=failures,
    )
