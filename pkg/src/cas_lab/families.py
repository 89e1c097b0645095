"""Seeded generators of metric families for scans and tests."""

from __future__ import annotations

import numpy as np

from .cmetric import ComplexMetric, bers_metric, flat_metric
from .grid import ComplexField, GridDomain, d_z, d_zbar

__all__ = [
    "random_trig_field",
    "riemannian_metric",
    "perturbed_bers_window",
    "manufactured_periodic_metric",
    "upper_half_window",
]


def random_trig_field(domain: GridDomain, rng: np.random.Generator,
                      n_modes: int = 4, amplitude: float = 0.1,
                      max_wave: int = 2, real: bool = False) -> ComplexField:
    """Random band-limited trigonometric polynomial, sup-normalized to amplitude."""
    z = domain.nodes()
    data = np.zeros(domain.shape, dtype=complex)
    for _ in range(n_modes):
        m, n = rng.integers(-max_wave, max_wave + 1, size=2)
        c = rng.standard_normal() + 1j * rng.standard_normal()
        wave = np.exp(2j * np.pi * (m * z.real / domain.Lx + n * z.imag / domain.Ly))
        data += c * wave
    if real:
        data = data.real.astype(complex)
    peak = np.max(np.abs(data))
    if peak > 0:
        data *= amplitude / peak
    return ComplexField(domain, data)


def riemannian_metric(domain: GridDomain, seed: int, amplitude: float = 0.15) -> ComplexMetric:
    """mu = 0, lambda = exp(real random trig field): a complexified Riemannian metric."""
    rng = np.random.default_rng(seed)
    u = random_trig_field(domain, rng, amplitude=amplitude, real=True)
    lam = u.exp().relabel("lambda")
    base = flat_metric(domain)
    return ComplexMetric(lam, base.mu, base.wbar_zbar)


def upper_half_window(n: int = 64, x0: float = -1.0, Lx: float = 2.0,
                      y0: float = 1.0, Ly: float = 1.0) -> GridDomain:
    return GridDomain(n, n, Lx, Ly, origin=complex(x0, y0))


def perturbed_bers_window(domain: GridDomain, seed: int, eps: float = 0.2,
                          degree: int = 3, backend: str = "fd4") -> ComplexMetric:
    """Bers metric of (z, zbar + eps*p(z)) with p a seeded polynomial.

    The Beltrami form of the wbar-map is eps*conj(p'(z)): analytic, with
    sup|mu| <= eps after normalization of p' on the window.
    """
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1)
    z = domain.nodes()
    zc = z - (domain.origin + 0.5 * complex(domain.Lx, domain.Ly))  # centered
    p = np.zeros_like(z)
    dp = np.zeros_like(z)
    for k, c in enumerate(coeffs):
        p += c * zc ** (k + 1)
        dp += c * (k + 1) * zc**k
    scale = eps / max(np.max(np.abs(dp)), 1e-30)
    f1 = ComplexField(domain, z, "f1")
    f2 = ComplexField(domain, np.conj(z) + scale * p, "f2bar")
    one = ComplexField(domain, np.ones(domain.shape, dtype=complex))
    f2_z = ComplexField(domain, scale * dp)
    return bers_metric(f1, f2, backend=backend, derivatives=(one, f2_z, one))


def manufactured_periodic_metric(domain: GridDomain, seed: int,
                                 lam_amp: float = 0.3, mu_amp: float = 0.25) -> ComplexMetric:
    """Random periodic positive metric with genuinely nonzero Beltrami form.

    The w-map is w = z + (periodic perturbation); its conjugate is sampled
    and differentiated spectrally, so conj(mu) = dz(wbar)/dzbar(wbar) holds
    by construction.
    """
    rng = np.random.default_rng(seed)
    lam = random_trig_field(domain, rng, amplitude=lam_amp).exp().relabel("lambda")
    pert = random_trig_field(domain, rng, amplitude=1.0)
    # scale so sup|d pert| <= mu_amp/2, which bounds sup|mu| below mu_amp
    pz = d_z(pert).data
    pzb = d_zbar(pert).data
    t = 0.5 * mu_amp / max(np.max(np.abs(pz)), np.max(np.abs(pzb)), 1e-30)
    # wbar = conj(z + t*pert); only the periodic part is differentiated
    cpert = pert.conj()
    wb_z = t * d_z(cpert).data
    wb_zb = 1.0 + t * d_zbar(cpert).data
    mu = ComplexField(domain, np.conj(wb_z / wb_zb), "mu")
    return ComplexMetric(lam, mu, ComplexField(domain, wb_zb, "wbar_zbar"))
