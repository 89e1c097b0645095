"""The complex Tzitzeica (Gauss) equation and its continuation.

Residual, exact linearization, Newton solver, and pseudo-arclength
continuation along the twistor and minimal-Lagrangian rays:

    G(u) = Delta_h u - e^{2u} + s e^{-4u} + 1,     s = (1/4) h(Q1, Q2bar)

with linearization L v = Delta_h v - 2 e^{2u} v - 4 s e^{-4u} v; at
(Q, u) = (0, 0) that is the shifted Laplacian Delta_h - 2.  On the
constant-coefficient model, zeros of G are roots of x^3 - x^2 - s with
x = e^{2u}; the ray s(t) = -t^2 s0 develops the fold at s* = -4/27,
e^{2u*} = 2/3, where constants span the kernel of L.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .cmetric import ComplexMetric, CubicPair, pair_cubics, require_positive
from .grid import ComplexField
from .spectra import OperatorMatrix, apply_operator, discretize, spectrum

__all__ = [
    "GaussSolution",
    "RaySchedule",
    "FoldReport",
    "RayBranch",
    "NewtonError",
    "SingularLinearizationError",
    "StepUnderflowError",
    "residual",
    "linearize",
    "newton_solve",
    "continue_ray",
    "constant_root",
]

DENSE_LIMIT = 4096  # unknowns; dense LU at <= 64^2, GMRES above


class NewtonError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


class SingularLinearizationError(NewtonError):
    """Smallest singular value below threshold: infinitesimally non-rigid
    at grid scale."""


class StepUnderflowError(RuntimeError):
    def __init__(self, msg, bracket):
        super().__init__(msg)
        self.bracket = bracket


def residual(h: ComplexMetric, Q: CubicPair, u: ComplexField,
             backend: str | None = None) -> ComplexField:
    """Pointwise field Delta_h u - e^{2u} + s e^{-4u} + 1."""
    require_positive(h)
    from .cmetric import laplacian

    s = pair_cubics(h, Q).data
    lap = laplacian(h, u, backend=backend).data
    out = lap - np.exp(2 * u.data) + s * np.exp(-4 * u.data) + 1.0
    return h.field(out, "gauss residual")


def linearize(h: ComplexMetric, Q: CubicPair, u: ComplexField,
              v: ComplexField | None = None, dense: bool = False,
              bc: str = "periodic", ring: int = 4,
              backend: str | None = None):
    """Linearization of G at (h, Q, u).

    Applied form (``v`` given): returns the field
    Delta_h v - 2 e^{2u} v - 4 s e^{-4u} v.  With ``dense=True`` returns the
    nodal :class:`OperatorMatrix` instead.
    """
    require_positive(h)
    s = pair_cubics(h, Q)
    if dense:
        return discretize(h, u, s, bc=bc, ring=ring, backend=backend)
    if v is None:
        raise ValueError("pass v or set dense=True")
    out = apply_operator(h, v.data, u, s, backend=backend)
    return h.field(out, "linearized")


@dataclass(frozen=True)
class GaussSolution:
    h: ComplexMetric
    cubics: CubicPair
    u: ComplexField
    residual_norm: float
    newton_trace: tuple[float, ...]
    # (smallest |eigenvalue|, kernel-alignment with constants) or None
    spectral_summary: tuple[float, float] | None = None
    params: dict = field(default_factory=dict)

    def quadratic_tail(self, count: int = 3) -> bool:
        """r_{k+1} <= C r_k^2 heuristic on the final iterates."""
        tr = [t for t in self.newton_trace if t > 0]
        if len(tr) < count + 1:
            return True
        tail = tr[-(count + 1):]
        return all(tail[i + 1] <= 10.0 * tail[i] ** 2 + 1e-15 for i in range(count))

    def to_json(self) -> str:
        payload = {
            "params": self.params,
            "residual_norm": self.residual_norm,
            "newton_trace": list(self.newton_trace),
            "spectral_summary": None if self.spectral_summary is None else {
                "min_abs_eigenvalue": self.spectral_summary[0],
                "constant_kernel_alignment": self.spectral_summary[1],
            },
            "grid": [self.h.domain.nx, self.h.domain.ny],
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _rms(data: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(data) ** 2)))


def _flat_precondition(h: ComplexMetric, dom) -> spla.LinearOperator:
    # inverse of the constant-coefficient part Delta_mean - 2 in Fourier space
    kx = 2.0 * np.pi * np.fft.fftfreq(dom.nx, d=dom.hx)
    ky = 2.0 * np.pi * np.fft.fftfreq(dom.ny, d=dom.hy)
    kappa2 = kx[None, :] ** 2 + ky[:, None] ** 2
    qbar = np.mean(h.Q)
    symbol = -kappa2 / qbar - 2.0

    def apply(x):
        spec = np.fft.fft2(x.reshape(dom.shape))
        return (np.fft.ifft2(spec / symbol)).ravel()

    n = dom.nx * dom.ny
    return spla.LinearOperator((n, n), matvec=apply, dtype=complex)


def _lu_with_kernel_probe(mat: np.ndarray, singular_floor: float):
    lu = sla.lu_factor(mat)
    x = np.ones(mat.shape[0], dtype=complex) / np.sqrt(mat.shape[0])
    nrm = 1.0
    for _ in range(6):
        x = sla.lu_solve(lu, x)
        nrm = np.linalg.norm(x)
        x /= nrm
    smin_est = 1.0 / nrm
    if smin_est < singular_floor:
        raise SingularLinearizationError(
            f"linearization singular at grid scale (sigma_min ~ {smin_est:.3g}); "
            "infinitesimally non-rigid at grid scale", trace=None)
    return lu


def _solve_linear(h: ComplexMetric, Q: CubicPair, u: ComplexField, rhs: np.ndarray,
                  backend: str | None, singular_floor: float = 1e-10):
    """Periodic-chart solve of L delta = rhs; dense LU on small grids,
    preconditioned GMRES above."""
    dom = h.domain
    s = pair_cubics(h, Q)
    if dom.nx * dom.ny <= DENSE_LIMIT:
        Lm = discretize(h, u, s, backend=backend)
        lu = _lu_with_kernel_probe(Lm.mat, singular_floor)
        return sla.lu_solve(lu, rhs.ravel()).reshape(dom.shape)
    op = spla.LinearOperator(
        (dom.nx * dom.ny,) * 2,
        matvec=lambda x: apply_operator(h, x.reshape(dom.shape), u, s).ravel(),
        dtype=complex)
    M = _flat_precondition(h, dom)
    sol, info = spla.gmres(op, rhs.ravel(), rtol=1e-12, atol=0.0, restart=40,
                           maxiter=200, M=M)
    if info != 0:
        raise NewtonError(f"GMRES failed to converge (info={info})", trace=None)
    return sol.reshape(dom.shape)


def newton_solve(h: ComplexMetric, Q: CubicPair, u0: ComplexField,
                 tol: float = 1e-12, max_iter: int = 30,
                 bc: str = "periodic", ring: int = 4,
                 backend: str | None = None, compute_spectrum: bool = False,
                 singular_floor: float = 1e-10,
                 params: dict | None = None) -> GaussSolution:
    """Newton iteration on G(u) = 0 from the initial guess u0.

    The complex exponential e^{2u} is evaluated on u directly; no branch
    choices enter.  Residual norms are grid RMS values; for Dirichlet
    windows they are measured on the interior nodes.
    """
    require_positive(h)
    u = u0
    trace = []
    dom = h.domain
    if bc == "dirichlet":
        # homogeneous Dirichlet on the window: the unknowns are the interior
        # nodes behind the zero boundary lines; the sine-basis operator of
        # the spectra module discretizes both residual and Jacobian
        from .spectra import apply_operator_dirichlet, interior_slices

        sy, sx = interior_slices(dom, ring)
        mask = np.zeros(dom.shape, dtype=bool)
        mask[sy, sx] = True
        u = u.with_data(np.where(mask, u.data, 0.0), label=u.label)
        s_field = pair_cubics(h, Q)
        s_int = s_field.data[sy, sx]
        for _ in range(max_iter):
            u_int = u.data[sy, sx]
            lap = apply_operator_dirichlet(h, u_int, None, None, 0.0, ring)
            r = lap - np.exp(2 * u_int) + s_int * np.exp(-4 * u_int) + 1.0
            rn = _rms(r)
            trace.append(rn)
            if rn <= tol:
                break
            Lm = discretize(h, u, s_field, bc="dirichlet", ring=ring)
            lu = _lu_with_kernel_probe(Lm.mat, singular_floor)
            delta = sla.lu_solve(lu, -r.ravel()).reshape(r.shape)
            if not np.all(np.isfinite(delta)):
                raise NewtonError("Newton step diverged (non-finite update)", trace)
            new = u.data.copy()
            new[sy, sx] += delta
            u = u.with_data(new, label="u")
        else:
            raise NewtonError(
                f"Newton did not reach tol={tol} in {max_iter} iterations "
                f"(last residual {trace[-1]:.3g})", trace)
    else:
        for _ in range(max_iter):
            r = residual(h, Q, u, backend=backend).data
            rn = _rms(r)
            trace.append(rn)
            if rn <= tol:
                break
            delta = _solve_linear(h, Q, u, -r, backend,
                                  singular_floor=singular_floor)
            if not np.all(np.isfinite(delta)):
                raise NewtonError("Newton step diverged (non-finite update)", trace)
            u = u.with_data(u.data + delta, label="u")
        else:
            raise NewtonError(
                f"Newton did not reach tol={tol} in {max_iter} iterations "
                f"(last residual {trace[-1]:.3g})", trace)
    summary = None
    if compute_spectrum:
        s = pair_cubics(h, Q)
        Lm = discretize(h, u, s, bc=bc, ring=ring, backend=backend)
        rep = spectrum(Lm, k=3)
        v = rep.eigenvectors[:, 0]
        ones = np.ones_like(v) / np.sqrt(v.shape[0])
        align = abs(np.vdot(ones, v)) / np.linalg.norm(v)
        summary = (float(np.abs(rep.eigenvalues[0])), float(align))
    return GaussSolution(h, Q, u, trace[-1], tuple(trace), summary,
                         params=params or {})


def constant_root(s: complex, near: complex = 1.0) -> complex:
    """Root of x^3 - x^2 - s closest to ``near`` (independent scalar oracle
    for constant-model solutions, x = e^{2u})."""
    roots = np.roots([1.0, -1.0, 0.0, -s])
    return complex(roots[np.argmin(np.abs(roots - near))])


# ---------------------------------------------------------------------------
# ray continuation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RaySchedule:
    """Parameter schedule for a ray of cubic data.

    ``mode="twistor"``: parameters are zeta values; data (zeta Q1, Q2bar/zeta).
    ``mode="hll"``: parameters are t values; data (t Q1, -t Q2bar), so the
    sign convention of the minimal-Lagrangian ray is explicit in the pair.
    """

    mode: str
    parameters: tuple
    ds0: float = 0.1
    ds_min: float = 1e-7
    ds_max: float = 0.5

    def __post_init__(self):
        if self.mode not in ("twistor", "hll"):
            raise ValueError(f"unknown ray mode {self.mode!r}")
        p = np.asarray(self.parameters, dtype=float) if self.mode == "hll" else None
        if p is not None and not np.all(np.diff(p) > 0):
            raise ValueError("hll parameters must be strictly increasing")


@dataclass(frozen=True)
class FoldReport:
    t_star: float
    s_star: complex          # mean of the source field at the fold
    e2u_star: complex        # mean of e^{2u} at the fold
    min_abs_eigenvalue: float
    kernel_alignment: float
    bracket: tuple[float, float]
    eig_bracket: tuple[float, float]


@dataclass(frozen=True)
class RayBranch:
    points: tuple[dict, ...]          # per-point records
    fold: FoldReport | None
    fold_u: ComplexField | None = None


def _eig_near_zero(h, Q, u, t, s_base):
    s = h.field(-(t ** 2) * s_base)
    Lm = discretize(h, u, s)
    vals = np.linalg.eigvals(Lm.mat)
    i = int(np.argmin(np.abs(vals)))
    return complex(vals[i])


def continue_ray(h: ComplexMetric, Q: CubicPair, schedule: RaySchedule,
                 u0: ComplexField | None = None, tol: float = 1e-12,
                 fold_tol: float = 1e-8, backend: str | None = None) -> RayBranch:
    """Continuation of Gauss-equation solutions along a ray of cubic data.

    Twistor rays re-solve at each zeta (the source s is invariant, so the
    solution should not move).  HLL rays run pseudo-arclength continuation in
    (u, t) with fold detection by eigenvalue crossing and parameter turning
    point; both locators must agree on the bracket.
    """
    require_positive(h)
    dom = h.domain
    if u0 is None:
        u0 = h.field(np.zeros(dom.shape, dtype=complex), "u")

    if schedule.mode == "twistor":
        points = []
        u = u0
        for zeta in schedule.parameters:
            Qz = Q.twistor(zeta)
            sol = newton_solve(h, Qz, u, tol=tol, backend=backend)
            u = sol.u
            s = pair_cubics(h, Qz)
            points.append({
                "zeta": complex(zeta),
                "s_mean": complex(np.mean(s.data)),
                "u_mean": complex(np.mean(u.data)),
                "u_rms": u.rms(),
                "residual_norm": sol.residual_norm,
            })
        return RayBranch(tuple(points), None)

    # ---- HLL pseudo-arclength ------------------------------------------
    s_base = pair_cubics(h, Q).data
    n = dom.nx * dom.ny

    def _G_direct(u_data, t):
        lap = apply_operator(h, u_data, None, None, shift=0.0, backend=backend)
        return lap - np.exp(2 * u_data) - (t ** 2) * s_base * np.exp(-4 * u_data) + 1.0

    def pack(u_data, t):
        return np.concatenate([u_data.real.ravel(), u_data.imag.ravel(), [t]])

    def unpack(X):
        u_data = (X[:n] + 1j * X[n:2 * n]).reshape(dom.shape)
        return u_data, float(X[-1])

    def G_real(X):
        u_data, t = unpack(X)
        g = _G_direct(u_data, t)
        return np.concatenate([g.real.ravel(), g.imag.ravel()])

    def jacobian(X):
        u_data, t = unpack(X)
        s = -(t ** 2) * s_base
        Lm = discretize(h, h.field(u_data), h.field(s), backend=backend).mat
        A = np.zeros((2 * n + 1, 2 * n + 1))
        A[:n, :n] = Lm.real
        A[:n, n:2 * n] = -Lm.imag
        A[n:2 * n, :n] = Lm.imag
        A[n:2 * n, n:2 * n] = Lm.real
        dGdt = (-2.0 * t * s_base * np.exp(-4 * u_data)).ravel()
        A[:n, -1] = dGdt.real
        A[n:2 * n, -1] = dGdt.imag
        return A

    def corrector(X_pred, tangent, ds, x_prev):
        X = X_pred.copy()
        for _ in range(30):
            g = G_real(X)
            c = tangent @ (X - x_prev) - ds
            if np.linalg.norm(g) <= tol * np.sqrt(len(g)) and abs(c) <= tol * 10:
                return X
            A = jacobian(X)
            A[-1, :] = tangent
            rhs = -np.concatenate([g, [c]])
            try:
                step = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                return None
            X = X + step
            if not np.all(np.isfinite(X)):
                return None
        return None

    def tangent_at(X, t_prev):
        A = jacobian(X)
        A[-1, :] = t_prev
        rhs = np.zeros(2 * n + 1)
        rhs[-1] = 1.0
        tau = np.linalg.solve(A, rhs)
        return tau / np.linalg.norm(tau)

    t0 = float(schedule.parameters[0])
    sol0 = newton_solve(h, Q.scaled(t0, -t0), u0, tol=tol, backend=backend)
    X = pack(sol0.u.data, t0)
    tau0 = np.zeros(2 * n + 1)
    tau0[-1] = 1.0
    tau = tangent_at(X, tau0)
    if tau[-1] < 0:
        tau = -tau

    t_max = float(schedule.parameters[-1])
    ds = schedule.ds0
    points = []

    def record(X, tau):
        u_data, t = unpack(X)
        lam = _eig_near_zero(h, Q, h.field(u_data), t, s_base)
        e2u = np.exp(2 * u_data)
        points.append({
            "t": t,
            "s_mean": complex(np.mean(-(t ** 2) * s_base)),
            "e2u_mean": complex(np.mean(e2u)),
            "u_rms": float(np.sqrt(np.mean(np.abs(u_data) ** 2))),
            "min_abs_eig": float(abs(lam)),
            "eig_re": float(lam.real),
            "tangent_t": float(tau[-1]),
        })
        return lam

    lam = record(X, tau)
    fold_bracket = None
    eig_bracket = None
    fold_state = None
    prev_eig_re = lam.real
    ds_loc = max(4.0 * schedule.ds_min, 1e-7)
    steps = 0
    while steps < 2000:
        steps += 1
        X_new = corrector(X + ds * tau, tau, ds, X)
        if X_new is None:
            ds *= 0.5
            if ds < schedule.ds_min:
                raise StepUnderflowError(
                    "pseudo-arclength step underflow near the fold",
                    bracket=fold_bracket or (unpack(X)[1],) * 2)
            continue
        tau_new = tangent_at(X_new, tau)
        if tau_new @ tau < 0:
            tau_new = -tau_new
        crossing = fold_state is None and tau[-1] > 0 and tau_new[-1] <= 0
        if crossing and ds > ds_loc:
            # home in on the turning point before stepping across it
            ds *= 0.5
            continue
        t_prev = unpack(X)[1]
        X, tau = X_new, tau_new
        lam = record(X, tau)
        u_data, t = unpack(X)
        if crossing:
            fold_bracket = (t_prev, t)
            fold_state = (X.copy(), t)
        if eig_bracket is None and np.sign(lam.real) != np.sign(prev_eig_re):
            eig_bracket = (min(t_prev, t), max(t_prev, t))
        prev_eig_re = lam.real
        if fold_state is not None:
            ds = min(ds * 2.0, schedule.ds0)
            if t < 0.5 * t0 or np.max(np.abs(u_data)) > 20:
                break
        else:
            if t >= t_max:
                break
            ds = min(ds * 1.3, schedule.ds_max)

    fold = None
    fold_u = None
    if fold_state is not None:
        Xf, _ = fold_state
        u_f, t_f = unpack(Xf)
        sfield = -(t_f ** 2) * s_base
        Lm = discretize(h, h.field(u_f), h.field(sfield), backend=backend)
        vals, vecs = np.linalg.eig(Lm.mat)
        i0 = int(np.argmin(np.abs(vals)))
        v = vecs[:, i0]
        ones = np.ones_like(v) / np.sqrt(v.shape[0])
        align = abs(np.vdot(ones, v)) / np.linalg.norm(v)
        if eig_bracket is not None and fold_bracket is not None:
            lo = min(fold_bracket)
            hi = max(fold_bracket)
            if not (eig_bracket[0] <= hi + 1e-3 and eig_bracket[1] >= lo - 1e-3):
                raise RuntimeError(
                    f"fold locators disagree: turning point {fold_bracket}, "
                    f"eigenvalue crossing {eig_bracket}")
        fold = FoldReport(
            t_star=t_f,
            s_star=complex(np.mean(sfield)),
            e2u_star=complex(np.mean(np.exp(2 * u_f))),
            min_abs_eigenvalue=float(np.abs(vals[i0])),
            kernel_alignment=float(align),
            bracket=fold_bracket,
            eig_bracket=eig_bracket if eig_bracket is not None else fold_bracket,
        )
        fold_u = h.field(u_f, "u at fold")
    return RayBranch(tuple(points), fold, fold_u)
