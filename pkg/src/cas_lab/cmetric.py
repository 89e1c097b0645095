"""Positive complex metrics g = lambda dz dwbar in a local chart.

A metric is stored as the triple (lambda, mu, dwbar/dzbar) on a single grid
chart, with z the chart coordinate.  The two gauge-invariant combinations

    Q  = lambda * (dwbar/dzbar)      (the dz dzbar coefficient of g)
    nu = conj(mu)                    (= (dwbar/dz) / (dwbar/dzbar))

drive every differential operator:

    Delta_g  = (4/Q) dzbar (dz - nu dzbar)
    K_g      = (2/Q) [dzbar(a_z) - dz(a_zbar)],
               a_z = dzbar(nu) + nu dzbar(Q)/Q,   a_zbar = dzbar(Q)/Q

The curvature recipe is the connection-form route: the isotropic line
spanned by dzbar is preserved by the Levi-Civita connection, with 1-form
alpha; K = d(alpha)(E1, E2)/g(E1, E2) in the normalized isotropic frame
E1 = dzbar-direction, E2 = dz - nu dzbar.  It reduces to the classical
-(1/2 lambda) Lap log(lambda) in the Riemannian gauge and reproduces K = -1
for Bers metrics (cross-validated in the tests against the conformal-change
formula and symbolic oracles).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, GridDomain, d_z, d_zbar

__all__ = [
    "ComplexMetric",
    "CubicPair",
    "PositivityCertificate",
    "FrameForms",
    "PositivityError",
    "SingularMetricError",
    "BranchError",
    "check_positive",
    "laplacian",
    "frame_connection_forms",
    "gauss_curvature",
    "bers_metric",
    "pair_cubics",
    "conformal_scale",
    "unwrap_log",
    "flat_metric",
    "hyperbolic_window_metric",
]


class PositivityError(ValueError):
    """Raised when an operation requires a positive metric and g is not."""


class SingularMetricError(ValueError):
    """Raised when the Bers denominator f1 - f2bar vanishes on the window."""


class BranchError(ValueError):
    """Raised when a C*-valued field winds around 0 and admits no global log."""


@dataclass(frozen=True)
class ComplexMetric:
    """g = lambda dz dwbar with Beltrami form mu and stored dwbar/dzbar.

    ``mu`` is the Beltrami coefficient of the w-map (dw/dzbar = mu dw/dz);
    consistency with the stored wbar data means conj(mu) = (dwbar/dz)/(dwbar/dzbar).
    The split of Q = lambda * wbar_zbar between the two factors is a gauge
    choice (a rescaling of the wbar coordinate); operators depend only on Q
    and nu, while the cubic pairing reads lambda in the stored gauge.
    """

    lam: ComplexField
    mu: ComplexField
    wbar_zbar: ComplexField
    backend: str = "spectral"

    def __post_init__(self):
        if not (self.lam.domain.compatible(self.mu.domain)
                and self.lam.domain.compatible(self.wbar_zbar.domain)):
            raise ValueError("metric component fields live on different domains")

    @property
    def domain(self) -> GridDomain:
        return self.lam.domain

    @property
    def Q(self) -> np.ndarray:
        """dz dzbar coefficient lambda * dwbar/dzbar."""
        return self.lam.data * self.wbar_zbar.data

    @property
    def nu(self) -> np.ndarray:
        """Conjugate Beltrami coefficient (dwbar/dz)/(dwbar/dzbar) = conj(mu)."""
        return np.conj(self.mu.data)

    def field(self, data: np.ndarray, label: str = "") -> ComplexField:
        return ComplexField(self.domain, data, label)


@dataclass(frozen=True)
class PositivityCertificate:
    passed: bool
    max_abs_mu: float
    min_abs_lam: float
    min_abs_wbar_zbar: float
    # node (k, j) indices of the extremal values above
    argmax_mu: tuple[int, int]
    argmin_lam: tuple[int, int]
    argmin_wbar_zbar: tuple[int, int]
    failures: tuple[str, ...]


def check_positive(g: ComplexMetric, mu_bound: float = 1.0,
                   zero_tol: float = 1e-14) -> PositivityCertificate:
    """Certify sup|mu| < 1, lambda != 0 and dwbar/dzbar != 0 nodewise.

    Returns a report rather than raising; bound violations are listed in
    ``failures`` with their extremal node locations.
    """
    abs_mu = np.abs(g.mu.data)
    abs_lam = np.abs(g.lam.data)
    abs_w = np.abs(g.wbar_zbar.data)
    i_mu = np.unravel_index(int(np.argmax(abs_mu)), abs_mu.shape)
    i_lam = np.unravel_index(int(np.argmin(abs_lam)), abs_lam.shape)
    i_w = np.unravel_index(int(np.argmin(abs_w)), abs_w.shape)
    failures = []
    if abs_mu[i_mu] >= mu_bound:
        failures.append(f"sup|mu| = {abs_mu[i_mu]:.6g} >= {mu_bound} at (k,j)={i_mu}")
    if abs_lam[i_lam] <= zero_tol:
        failures.append(f"min|lambda| = {abs_lam[i_lam]:.6g} at (k,j)={i_lam}")
    if abs_w[i_w] <= zero_tol:
        failures.append(f"min|dwbar/dzbar| = {abs_w[i_w]:.6g} at (k,j)={i_w}")
    return PositivityCertificate(
        passed=not failures,
        max_abs_mu=float(abs_mu[i_mu]),
        min_abs_lam=float(abs_lam[i_lam]),
        min_abs_wbar_zbar=float(abs_w[i_w]),
        argmax_mu=(int(i_mu[0]), int(i_mu[1])),
        argmin_lam=(int(i_lam[0]), int(i_lam[1])),
        argmin_wbar_zbar=(int(i_w[0]), int(i_w[1])),
        failures=tuple(failures),
    )


def require_positive(g: ComplexMetric):
    cert = check_positive(g)
    if not cert.passed:
        raise PositivityError("; ".join(cert.failures))


def _backend(g: ComplexMetric, backend: str | None) -> str:
    return g.backend if backend is None else backend


def laplacian(g: ComplexMetric, u: ComplexField, backend: str | None = None) -> ComplexField:
    """Delta_g u = (4 / (lambda dwbar/dzbar)) dzbar (dz u - conj(mu) dzbar u)."""
    require_positive(g)
    if not g.domain.compatible(u.domain):
        raise ValueError("resolution mismatch between metric and field")
    bk = _backend(g, backend)
    uz = d_z(u, bk).data
    uzb = d_zbar(u, bk).data
    inner = ComplexField(g.domain, uz - g.nu * uzb)
    out = 4.0 / g.Q * d_zbar(inner, bk).data
    return g.field(out, label=f"laplacian({u.label})" if u.label else "")


@dataclass(frozen=True)
class FrameForms:
    """Levi-Civita connection 1-forms on the isotropic frame.

    Components are evaluations on the normalized isotropic frame
    E1 = d/dzbar, E2 = d/dz - nu d/dzbar (the unit-gauge version of the
    paper frame: E2 is parallel to the second isotropic direction).  With
    G = g(E1, E2) = Q/2 the forms satisfy alpha + beta = d log G.
    """

    alpha_on_E1: ComplexField
    alpha_on_E2: ComplexField
    beta_on_E1: ComplexField
    beta_on_E2: ComplexField
    G: ComplexField


def frame_connection_forms(g: ComplexMetric, backend: str | None = None) -> FrameForms:
    require_positive(g)
    bk = _backend(g, backend)
    Q = g.Q
    nu = g.nu
    Qf = g.field(Q)
    dlogQ_zb = d_zbar(Qf, bk).data / Q
    dlogQ_z = d_z(Qf, bk).data / Q
    nu_zb = d_zbar(g.field(nu), bk).data
    alpha_E1 = dlogQ_zb
    alpha_E2 = nu_zb
    beta_E1 = np.zeros_like(alpha_E1)
    beta_E2 = (dlogQ_z - nu * dlogQ_zb) - nu_zb
    return FrameForms(
        alpha_on_E1=g.field(alpha_E1, "alpha(E1)"),
        alpha_on_E2=g.field(alpha_E2, "alpha(E2)"),
        beta_on_E1=g.field(beta_E1, "beta(E1)"),
        beta_on_E2=g.field(beta_E2, "beta(E2)"),
        G=g.field(Q / 2.0, "G"),
    )


def gauss_curvature(g: ComplexMetric, backend: str | None = None) -> ComplexField:
    """Gauss curvature via K = d(alpha)(E1, E2) / G.

    In the chart coframe alpha = a_z dz + a_zbar dzbar with
    a_zbar = dzbar(Q)/Q and a_z = dzbar(nu) + nu dzbar(Q)/Q, so
    K = (2/Q) [dzbar(a_z) - dz(a_zbar)].  For mu = 0, w = z this reduces to
    -(1/(2 lambda)) Lap_euclid log(lambda).
    """
    require_positive(g)
    bk = _backend(g, backend)
    Q = g.Q
    if np.min(np.abs(Q)) < 1e-300:
        raise PositivityError("|G| below tolerance")
    nu = g.nu
    Qf = g.field(Q)
    a_zbar = d_zbar(Qf, bk).data / Q
    a_z = d_zbar(g.field(nu), bk).data + nu * a_zbar
    out = (2.0 / Q) * (d_zbar(g.field(a_z), bk).data - d_z(g.field(a_zbar), bk).data)
    return g.field(out, "K")


def pair_cubics(g: ComplexMetric, Q: "CubicPair") -> ComplexField:
    """Gauss-equation source (1/4) g(Q1, Q2bar) = 2 phi psibar / lambda^3."""
    require_positive(g)
    out = 2.0 * Q.phi.data * Q.psibar.data / g.lam.data**3
    return g.field(out, "pairing")


def _row_winding(phase_row: np.ndarray) -> int:
    # net winding of a periodic phase sample along one row
    dphi = np.diff(np.concatenate([phase_row, phase_row[:1]]))
    dphi = (dphi + np.pi) % (2 * np.pi) - np.pi
    return int(np.rint(dphi.sum() / (2 * np.pi)))


def unwrap_log(f: ComplexField, check_periodic_winding: bool = True) -> ComplexField:
    """Continuous logarithm of a nowhere-zero field by row-wise phase unwrapping.

    The phase is unwrapped along the first row and then down each column.
    For periodic data a nonzero winding of f around 0 along either period
    obstructs a global branch and raises :class:`BranchError`.
    """
    vals = f.data
    if np.min(np.abs(vals)) == 0.0:
        raise BranchError("field vanishes; no logarithm")
    phase = np.angle(vals)
    if check_periodic_winding:
        wx = _row_winding(phase[0, :])
        wy = _row_winding(phase[:, 0])
        if wx != 0 or wy != 0:
            raise BranchError(
                f"phase winds ({wx}, {wy}) times around 0 along the periods; "
                "no single-valued logarithm"
            )
    unwrapped = np.unwrap(phase, axis=1)
    unwrapped = np.unwrap(unwrapped, axis=0)
    # stitch rows: unwrap the first column and shift each row to match
    col = np.unwrap(unwrapped[:, 0])
    unwrapped += (col - unwrapped[:, 0])[:, None]
    return f.with_data(np.log(np.abs(vals)) + 1j * unwrapped, label=f"log({f.label})")


def conformal_scale(g: ComplexMetric, rho: ComplexField) -> ComplexMetric:
    """Metric rho * g: lambda -> rho lambda, mu and wbar_zbar unchanged.

    Requires rho nowhere zero and, on periodic charts, winding-free around 0
    (so that log(rho) has a branch and the curvature formula stays valid).
    """
    if not g.domain.compatible(rho.domain):
        raise ValueError("resolution mismatch")
    if np.min(np.abs(rho.data)) == 0.0:
        raise BranchError("conformal factor vanishes")
    unwrap_log(rho)  # raises BranchError on winding
    return ComplexMetric(g.lam * rho, g.mu, g.wbar_zbar, backend=g.backend)


def bers_metric(f1: ComplexField, f2bar: ComplexField, backend: str = "spectral",
                collision_tol: float = 1e-12,
                derivatives: tuple[ComplexField, ComplexField, ComplexField] | None = None,
                ) -> ComplexMetric:
    """Bers metric h = -4/(f1 - f2bar)^2 df1 df2bar of a developing pair.

    ``f1`` is holomorphic in the chart coordinate and ``f2bar`` is the
    anti-developing map (anti-holomorphic for its own structure; as a chart
    sample it may be any quasiconformal map with dzbar(f2bar) != 0).  Stored
    gauge: lambda = -4 dz(f1) dzbar(f2bar) / (f1-f2bar)^2 with wbar_zbar = 1,
    mu = conj(dz(f2bar)/dzbar(f2bar)).

    ``derivatives``, when supplied, is the exact triple
    (dz f1, dz f2bar, dzbar f2bar); closed-form pairs on non-periodic windows
    should pass it, since numerical differentiation there poisons a margin.
    """
    if not f1.domain.compatible(f2bar.domain):
        raise ValueError("resolution mismatch")
    diff = f1.data - f2bar.data
    closest = np.unravel_index(int(np.argmin(np.abs(diff))), diff.shape)
    if np.abs(diff[closest]) <= collision_tol:
        z0 = f1.domain.nodes()[closest]
        raise SingularMetricError(
            f"f1 = f2bar within {collision_tol} at node (k,j)={closest}, z={z0:.6g}"
        )
    if derivatives is not None:
        f1z, f2b_z, f2b_zb = (d.data for d in derivatives)
    else:
        f1z = d_z(f1, backend).data
        f2b_z = d_z(f2bar, backend).data
        f2b_zb = d_zbar(f2bar, backend).data
    lam = -4.0 * f1z * f2b_zb / diff**2
    mu = np.conj(f2b_z / f2b_zb)
    dom = f1.domain
    one = ComplexField(dom, np.ones(dom.shape, dtype=complex))
    g = ComplexMetric(ComplexField(dom, lam, "bers lambda"),
                      ComplexField(dom, mu, "bers mu"), one, backend=backend)
    require_positive(g)
    return g


@dataclass(frozen=True)
class CubicPair:
    """Coefficients of Q1 = phi dz^3 and Q2bar = psibar dwbar^3.

    ``psibar`` is taken relative to the wbar gauge stored in the metric it
    will be paired with.  ``holo_residuals`` are the L2 norms of dzbar(phi)
    and of the E2-derivative of psibar (dw holomorphy in unit gauge).
    """

    phi: ComplexField
    psibar: ComplexField
    holo_residuals: tuple[float, float] = (0.0, 0.0)

    @staticmethod
    def from_fields(phi: ComplexField, psibar: ComplexField,
                    metric: ComplexMetric | None = None,
                    backend: str = "spectral") -> "CubicPair":
        if not phi.domain.compatible(psibar.domain):
            raise ValueError("resolution mismatch")
        r1 = d_zbar(phi, backend).rms()
        nu = 0.0 if metric is None else metric.nu
        r2 = (d_z(psibar, backend).data - nu * d_zbar(psibar, backend).data)
        r2 = float(np.sqrt(np.mean(np.abs(r2) ** 2)))
        return CubicPair(phi, psibar, (r1, r2))

    @staticmethod
    def constant(domain: GridDomain, phi: complex, psibar: complex) -> "CubicPair":
        p = ComplexField(domain, np.full(domain.shape, phi, dtype=complex), "phi")
        q = ComplexField(domain, np.full(domain.shape, psibar, dtype=complex), "psibar")
        return CubicPair(p, q, (0.0, 0.0))

    @staticmethod
    def zero(domain: GridDomain) -> "CubicPair":
        return CubicPair.constant(domain, 0.0, 0.0)

    def scaled(self, a: complex, b: complex) -> "CubicPair":
        return CubicPair(self.phi * a, self.psibar * b, self.holo_residuals)

    def twistor(self, zeta: complex) -> "CubicPair":
        """C* twistor action (Q1, Q2bar) -> (zeta Q1, zeta^-1 Q2bar)."""
        return self.scaled(zeta, 1.0 / zeta)


# ---------------------------------------------------------------------------
# convenience constructors used across the test-bed
# ---------------------------------------------------------------------------

def flat_metric(domain: GridDomain, lam: complex = 1.0, mu: complex = 0.0,
                backend: str = "spectral") -> ComplexMetric:
    """Constant metric lambda dz dwbar with w = z + mu zbar."""
    lam_f = ComplexField(domain, np.full(domain.shape, lam, dtype=complex), "lambda")
    mu_f = ComplexField(domain, np.full(domain.shape, mu, dtype=complex), "mu")
    one = ComplexField(domain, np.ones(domain.shape, dtype=complex))
    return ComplexMetric(lam_f, mu_f, one, backend=backend)


def hyperbolic_window_metric(domain: GridDomain, backend: str = "fd4") -> ComplexMetric:
    """Upper-half-plane Bers metric 1/y^2 dz dzbar on a chart window."""
    if domain.origin.imag <= 0:
        raise ValueError("window must sit inside the upper half-plane")
    f1 = ComplexField(domain, domain.nodes(), "f1")
    f2 = ComplexField(domain, np.conj(domain.nodes()), "f2bar")
    one = ComplexField(domain, np.ones(domain.shape, dtype=complex))
    zero = ComplexField(domain, np.zeros(domain.shape, dtype=complex))
    return bers_metric(f1, f2, backend=backend, derivatives=(one, zero, one))
