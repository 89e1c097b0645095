"""Discretization and eigenanalysis of the shifted Laplacian and the
Gauss-equation linearization.

The operator is v -> Delta_h v - 2 e^{2u} v - 4 s e^{-4u} v (the Theorem-D
operator Delta_h - k for u = s = 0, with the shift k an exploratory knob).
Dense matrices are assembled by applying the matrix-free operator to nodal
basis vectors in vectorized batches; invertibility is judged by the smallest
singular value (the operator is not normal for mu != 0), always qualified
"at grid scale".
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .cmetric import ComplexMetric, check_positive
from .grid import ComplexField, GridDomain

__all__ = [
    "OperatorMatrix",
    "SpectrumReport",
    "ScanRow",
    "ScanResult",
    "apply_operator",
    "discretize",
    "spectrum",
    "sigma_min_estimate",
    "invertibility_scan",
    "verify_against_matrix_free",
]


def _dz_batch(arr: np.ndarray, dom: GridDomain, backend: str) -> np.ndarray:
    # arr shape (B, ny, nx); Wirtinger d_z over the trailing axes
    if backend == "spectral":
        kx = 2.0 * np.pi * np.fft.fftfreq(dom.nx, d=dom.hx)
        ky = 2.0 * np.pi * np.fft.fftfreq(dom.ny, d=dom.hy)
        mx = 1j * kx
        my = 1j * ky
        spec = np.fft.fft2(arr, axes=(-2, -1))
        fx = np.fft.ifft2(spec * mx[None, None, :], axes=(-2, -1))
        fy = np.fft.ifft2(spec * my[None, :, None], axes=(-2, -1))
    else:
        def d(a, ax, h):
            return (-np.roll(a, -2, axis=ax) + 8 * np.roll(a, -1, axis=ax)
                    - 8 * np.roll(a, 1, axis=ax) + np.roll(a, 2, axis=ax)) / (12 * h)
        fx = d(arr, -1, dom.hx)
        fy = d(arr, -2, dom.hy)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def interior_slices(dom: GridDomain, ring: int) -> tuple[slice, slice]:
    """Index slices of the interior nodes strictly inside the Dirichlet
    boundary lines at node indices ring and n - ring."""
    return slice(ring + 1, dom.ny - ring), slice(ring + 1, dom.nx - ring)


def _odd_extend(a: np.ndarray) -> np.ndarray:
    # a has shape (B, my, mx); odd reflection across the zero boundary lines
    B, my, mx = a.shape
    out = np.zeros((B, 2 * (my + 1), 2 * (mx + 1)), dtype=complex)
    out[:, 1:my + 1, 1:mx + 1] = a
    out[:, 1:my + 1, mx + 2:] = -a[:, :, ::-1]
    out[:, my + 2:, 1:mx + 1] = -a[:, ::-1, :]
    out[:, my + 2:, mx + 2:] = a[:, ::-1, ::-1]
    return out


def apply_operator_dirichlet(h: ComplexMetric, v: np.ndarray, u=None, s=None,
                             shift: complex = 2.0, ring: int = 4) -> np.ndarray:
    """Dirichlet-window application via odd (sine-basis) extension.

    ``v`` holds interior values, shape (my, mx) or (B, my, mx), with zero
    boundary on the lines at node indices ring and n - ring of the chart.
    Spectral differentiation of the odd extension places the boundary
    exactly on those grid lines; for mu = 0 the scheme is exact on the sine
    basis, and for mu != 0 only the Beltrami term sees the extension kinks.
    """
    dom = h.domain
    sy, sx = interior_slices(dom, ring)
    Q = h.Q[sy, sx]
    nu = h.nu[sy, sx]
    single = v.ndim == 2
    arr = v[None] if single else v
    B, my, mx = arr.shape
    V = _odd_extend(arr)
    kx = 2.0 * np.pi * np.fft.fftfreq(2 * (mx + 1), d=dom.hx)
    ky = 2.0 * np.pi * np.fft.fftfreq(2 * (my + 1), d=dom.hy)
    spec = np.fft.fft2(V, axes=(-2, -1))
    Vx = np.fft.ifft2(spec * (1j * kx)[None, None, :], axes=(-2, -1))
    Vy = np.fft.ifft2(spec * (1j * ky)[None, :, None], axes=(-2, -1))
    Vz = 0.5 * (Vx - 1j * Vy)
    Vzb = 0.5 * (Vx + 1j * Vy)
    W = Vz
    if np.any(nu != 0):
        prod = np.zeros_like(V)
        prod[:, 1:my + 1, 1:mx + 1] = nu[None] * Vzb[:, 1:my + 1, 1:mx + 1]
        W = Vz - prod
    spec = np.fft.fft2(W, axes=(-2, -1))
    Wx = np.fft.ifft2(spec * (1j * kx)[None, None, :], axes=(-2, -1))
    Wy = np.fft.ifft2(spec * (1j * ky)[None, :, None], axes=(-2, -1))
    Wzb = 0.5 * (Wx + 1j * Wy)
    lap = 4.0 / Q[None] * Wzb[:, 1:my + 1, 1:mx + 1]
    if u is None and s is None:
        c0 = np.full((my, mx), -shift, dtype=complex)
    else:
        u_int = (u.data if isinstance(u, ComplexField) else np.asarray(u))[sy, sx]
        s_int = (s.data if isinstance(s, ComplexField) else np.asarray(s))[sy, sx]
        c0 = -2.0 * np.exp(2.0 * u_int) - 4.0 * s_int * np.exp(-4.0 * u_int)
    out = lap + c0[None] * arr
    return out[0] if single else out


def _zero_order(h: ComplexMetric, u, s, shift: complex) -> np.ndarray:
    if u is None and s is None:
        return np.full(h.domain.shape, -shift, dtype=complex)
    u_data = u.data if isinstance(u, ComplexField) else np.asarray(u, dtype=complex)
    s_data = s.data if isinstance(s, ComplexField) else np.asarray(s, dtype=complex)
    e2u = np.exp(2.0 * u_data)
    return -2.0 * e2u - 4.0 * s_data * np.exp(-4.0 * u_data)


def apply_operator(h: ComplexMetric, v: np.ndarray, u=None, s=None,
                   shift: complex = 2.0, backend: str | None = None) -> np.ndarray:
    """Matrix-free application of Delta_h - 2 e^{2u} - 4 s e^{-4u} (batched).

    ``v`` has shape (ny, nx) or (B, ny, nx).
    """
    bk = h.backend if backend is None else backend
    dom = h.domain
    single = v.ndim == 2
    arr = v[None] if single else v
    vz, vzb = _dz_batch(arr, dom, bk)
    inner = vz - h.nu[None] * vzb
    _, lap = _dz_batch(inner, dom, bk)
    out = 4.0 / h.Q[None] * lap + _zero_order(h, u, s, shift)[None] * arr
    return out[0] if single else out


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense nodal-basis matrix of the linearized operator."""

    mat: np.ndarray
    domain: GridDomain
    interior: np.ndarray | None  # flat node indices for Dirichlet mode
    descriptor: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.mat.shape[0]


def discretize(h: ComplexMetric, u=None, s=None, bc: str = "periodic",
               ring: int = 4, shift: complex = 2.0, backend: str | None = None,
               max_dense: int = 4096, batch: int = 256) -> OperatorMatrix:
    """Dense matrix of the operator in the nodal basis.

    ``bc="periodic"`` uses all nodes of the torus chart; ``bc="dirichlet"``
    restricts to the interior nodes behind the zero boundary lines at node
    indices ``ring`` and ``n - ring`` and differentiates the odd (sine)
    extension, which pins the boundary exactly on those grid lines.
    """
    dom = h.domain
    if bc == "periodic":
        n_total = dom.nx * dom.ny
        n = n_total
        if n > max_dense:
            raise ValueError(f"dense mode capped at {max_dense} unknowns, got {n}")
        mat = np.empty((n, n), dtype=complex)
        for start in range(0, n, batch):
            sel = np.arange(start, min(start + batch, n))
            basis = np.zeros((len(sel), n_total), dtype=complex)
            basis[np.arange(len(sel)), sel] = 1.0
            out = apply_operator(h, basis.reshape(-1, dom.ny, dom.nx), u, s,
                                 shift, backend)
            mat[:, sel] = out.reshape(len(sel), n_total).T
        idx = None
    elif bc == "dirichlet":
        sy, sx = interior_slices(dom, ring)
        my = sy.stop - sy.start
        mx = sx.stop - sx.start
        n = my * mx
        if n > max_dense:
            raise ValueError(f"dense mode capped at {max_dense} unknowns, got {n}")
        mask = np.zeros(dom.shape, dtype=bool)
        mask[sy, sx] = True
        idx = np.flatnonzero(mask.ravel())
        mat = np.empty((n, n), dtype=complex)
        for start in range(0, n, batch):
            m = min(batch, n - start)
            basis = np.zeros((m, n), dtype=complex)
            basis[np.arange(m), np.arange(start, start + m)] = 1.0
            out = apply_operator_dirichlet(h, basis.reshape(m, my, mx), u, s,
                                           shift, ring)
            mat[:, start:start + m] = out.reshape(m, n).T
    else:
        raise ValueError(f"unknown bc {bc!r}")
    desc = {"bc": bc, "shift": shift, "grid": [dom.nx, dom.ny], "ring": ring,
            "has_u": u is not None, "has_s": s is not None}
    return OperatorMatrix(mat, dom, idx, desc)


def verify_against_matrix_free(Lm: OperatorMatrix, h: ComplexMetric, u=None, s=None,
                               shift: complex = 2.0, n_vectors: int = 20,
                               seed: int = 0) -> float:
    """Max relative deviation between Lm @ v and the matrix-free application."""
    rng = np.random.default_rng(seed)
    dom = h.domain
    worst = 0.0
    for _ in range(n_vectors):
        if Lm.interior is None:
            v = rng.standard_normal(dom.shape) + 1j * rng.standard_normal(dom.shape)
            lhs = Lm.mat @ v.ravel()
            rhs = apply_operator(h, v, u, s, shift).ravel()
        else:
            ring = Lm.descriptor["ring"]
            sy, sx = interior_slices(dom, ring)
            shape = (sy.stop - sy.start, sx.stop - sx.start)
            v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            lhs = Lm.mat @ v.ravel()
            rhs = apply_operator_dirichlet(h, v, u, s, shift, ring).ravel()
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300)))
    return worst


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray          # k eigenvalues nearest 0
    eigenvectors: np.ndarray         # matching columns
    residuals: np.ndarray            # ||L v - lambda v|| / ||v||
    sigma_min: float
    sigma_max: float
    condition_estimate: float
    grid: tuple[int, int]
    converged: bool


def _power_sigma(lu_piv, mat: np.ndarray, iters: int = 60, seed: int = 1,
                 tol: float = 1e-10) -> tuple[float, float]:
    """(sigma_min, sigma_max) by power iteration on L^-1 L^-H and L^H L."""
    rng = np.random.default_rng(seed)
    n = mat.shape[0]
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    val = 0.0
    for _ in range(iters):
        y = sla.lu_solve(lu_piv, x, trans=0)
        y = sla.lu_solve(lu_piv, y, trans=2)
        nrm = np.linalg.norm(y)
        new = nrm  # approximates 1/sigma_min^2
        x = y / nrm
        if abs(new - val) <= tol * abs(new):
            val = new
            break
        val = new
    smin = 1.0 / np.sqrt(val)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    val = 0.0
    for _ in range(30):
        y = mat.conj().T @ (mat @ x)
        nrm = np.linalg.norm(y)
        x = y / nrm
        if abs(nrm - val) <= 1e-8 * abs(nrm):
            val = nrm
            break
        val = nrm
    return smin, float(np.sqrt(val))


def spectrum(Lm: OperatorMatrix, k: int = 4, seed: int = 1) -> SpectrumReport:
    """k eigenvalues nearest 0 by shift-invert plus SVD-based sigma_min."""
    mat = Lm.mat
    n = mat.shape[0]
    lu_piv = sla.lu_factor(mat)
    smin, smax = _power_sigma(lu_piv, mat, seed=seed)
    k_eff = min(k, n - 2)
    converged = True
    if n <= 600:
        vals, vecs = np.linalg.eig(mat)
        order = np.argsort(np.abs(vals))[:k_eff]
        lam = vals[order]
        V = vecs[:, order]
    else:
        op = spla.LinearOperator((n, n), matvec=lambda x: sla.lu_solve(lu_piv, x),
                                 dtype=complex)
        try:
            theta, V = spla.eigs(op, k=k_eff, which="LM",
                                 v0=np.ones(n, dtype=complex), maxiter=3000)
            lam = 1.0 / theta
            order = np.argsort(np.abs(lam))
            lam = lam[order]
            V = V[:, order]
        except spla.ArpackNoConvergence as exc:  # pragma: no cover
            converged = False
            lam = np.asarray(exc.eigenvalues if exc.eigenvalues is not None else [])
            V = np.asarray(exc.eigenvectors if exc.eigenvectors is not None else
                           np.zeros((n, 0)))
    res = np.array([
        np.linalg.norm(mat @ V[:, i] - lam[i] * V[:, i]) / np.linalg.norm(V[:, i])
        for i in range(V.shape[1])
    ]) if V.shape[1] else np.array([])
    return SpectrumReport(
        eigenvalues=lam, eigenvectors=V, residuals=res,
        sigma_min=smin, sigma_max=smax,
        condition_estimate=smax / smin if smin > 0 else np.inf,
        grid=(Lm.domain.nx, Lm.domain.ny), converged=converged,
    )


def sigma_min_estimate(Lm: OperatorMatrix, seed: int = 1) -> float:
    lu_piv = sla.lu_factor(Lm.mat)
    smin, _ = _power_sigma(lu_piv, Lm.mat, seed=seed)
    return smin


@dataclass(frozen=True)
class ScanRow:
    index: int
    seed: int
    sigma_min: float
    sigma_min_coarse: float
    grid: tuple[int, int]
    stable: bool
    verdict: str  # "pass" | "fail" | "skipped"
    note: str = ""


@dataclass(frozen=True)
class ScanResult:
    rows: tuple[ScanRow, ...]
    floor: float
    pass_fraction: float

    def to_csv(self) -> str:
        lines = ["index,seed,sigma_min,sigma_min_coarse,grid,stable,verdict,note"]
        for r in self.rows:
            lines.append(
                f"{r.index},{r.seed},{r.sigma_min:.12g},{r.sigma_min_coarse:.12g},"
                f"{r.grid[0]}x{r.grid[1]},{int(r.stable)},{r.verdict},{r.note}"
            )
        return "\n".join(lines) + "\n"


def invertibility_scan(family, count: int, seed: int, floor: float = 0.5,
                       grid: int = 48, coarse: int = 24, bc: str = "periodic",
                       ring_frac: float = 1.0 / 8.0, shift: complex = 2.0,
                       stability: float = 0.05, threads: int = 1) -> ScanResult:
    """Per-sample sigma_min of Delta_h - shift over a seeded metric family.

    ``family(n, sample_seed)`` returns a ComplexMetric at resolution n.  A
    verdict is issued at the fine grid only when sigma_min is Cauchy within
    ``stability`` against the coarse dyadic grid.  For Dirichlet windows the
    zero ring scales with resolution (fraction ``ring_frac`` of the window)
    so both grids discretize the same physical domain.  Invertibility
    verdicts are evidence at grid scale, not proof.
    """

    def ring_of(n: int) -> int:
        if bc == "periodic":
            return 0
        # both grids must place the boundary lines on the same physical
        # location, so ring_frac * n has to be integral for each grid used
        r = ring_frac * n
        if abs(r - round(r)) > 1e-9:
            raise ValueError(f"ring_frac {ring_frac} not exact at resolution {n}")
        return int(round(r))

    def one(i: int) -> ScanRow:
        s = seed + i
        try:
            hf = family(grid, s)
            hc = family(coarse, s)
        except Exception as exc:
            return ScanRow(i, s, np.nan, np.nan, (grid, grid), False, "skipped",
                           f"family: {exc}")
        if not check_positive(hf).passed:
            return ScanRow(i, s, np.nan, np.nan, (grid, grid), False, "skipped",
                           "positivity failure")
        sf = sigma_min_estimate(discretize(hf, bc=bc, ring=ring_of(grid), shift=shift))
        sc = sigma_min_estimate(discretize(hc, bc=bc, ring=ring_of(coarse), shift=shift))
        stable = abs(sf - sc) <= stability * abs(sf)
        verdict = "pass" if (stable and sf >= floor) else "fail"
        return ScanRow(i, s, sf, sc, (grid, grid), stable, verdict)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(count)))
    else:
        rows = [one(i) for i in range(count)]
    done = [r for r in rows if r.verdict != "skipped"]
    frac = sum(r.verdict == "pass" for r in done) / max(len(done), 1)
    return ScanResult(tuple(rows), floor, frac)
