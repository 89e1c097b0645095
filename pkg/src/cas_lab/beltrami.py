"""Cauchy and Beurling transforms and the measurable-Riemann-mapping solver.

The transforms are Fourier multipliers on an enlarged zero-padded copy of the
chart window.  Frequencies are shifted by half a lattice step in both axes,
so the Beurling multiplier conj(kappa)/kappa never meets kappa = 0 and is an
exact isometry of the discrete L2 space; the Cauchy multiplier -2i/kappa has
no zero mode to fix, which realizes the decay normalization.

The normalized solution of dzbar(f) = mu dz(f) is produced by the classical
Neumann iteration h = mu T h + mu, f = z + C h, contracting at rate sup|mu|
(the L2 Beurling norm is 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, GridDomain

__all__ = [
    "BeltramiCoefficient",
    "QCMap",
    "SupportError",
    "NonConvergenceError",
    "WindowTransforms",
    "cauchy_transform",
    "beurling_transform",
    "solve_beltrami",
    "affine_fit",
]


class SupportError(ValueError):
    """Raised when data is not compactly supported inside the window."""


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, iterations, contraction):
        super().__init__(msg)
        self.iterations = iterations
        self.contraction = contraction


@dataclass(frozen=True)
class BeltramiCoefficient:
    """Compactly supported Beltrami coefficient with sup|mu| < 1."""

    mu: ComplexField
    support_radius: float

    def __post_init__(self):
        dom = self.mu.domain
        sup = self.mu.max_abs()
        if sup >= 1.0:
            raise ValueError(f"sup|mu| = {sup:.6g} >= 1")
        half = 0.5 * min(dom.Lx, dom.Ly)
        if not (0 < self.support_radius < half):
            raise SupportError(
                f"support radius {self.support_radius} does not fit inside the window"
            )
        z = dom.nodes() - self.center
        outside = np.abs(z) > self.support_radius
        leak = np.max(np.abs(self.mu.data[outside])) if outside.any() else 0.0
        if leak > 1e-13:
            raise SupportError(f"mu = {leak:.3g} outside the declared support")

    @property
    def center(self) -> complex:
        dom = self.mu.domain
        return dom.origin + 0.5 * complex(dom.Lx, dom.Ly)

    @property
    def sup(self) -> float:
        return self.mu.max_abs()


@dataclass(frozen=True)
class QCMap:
    """Normalized quasiconformal solution f = z + C(h) with its residual."""

    f: ComplexField
    mu: BeltramiCoefficient
    residual: float
    iterations: int
    update_norms: tuple[float, ...]

    def contraction_ratios(self) -> np.ndarray:
        u = np.asarray(self.update_norms)
        return u[1:] / u[:-1]


class WindowTransforms:
    """Shifted-lattice Fourier transforms on a zero-padded window.

    The base window is embedded centrally in a ``pad_factor`` times larger
    periodic cell at the same grid spacing.  ``cauchy`` and ``beurling``
    operate on padded arrays; ``embed``/``crop`` move data between the base
    block and the padded cell.
    """

    def __init__(self, domain: GridDomain, pad_factor: int = 4):
        if pad_factor < 2:
            raise ValueError("pad_factor must be >= 2")
        self.base = domain
        self.pad_factor = pad_factor
        nxp, nyp = pad_factor * domain.nx, pad_factor * domain.ny
        Lxp, Lyp = pad_factor * domain.Lx, pad_factor * domain.Ly
        # padded cell centered on the base window
        off = 0.5 * (pad_factor - 1)
        origin = domain.origin - complex(off * domain.Lx, off * domain.Ly)
        self.padded = GridDomain(nxp, nyp, Lxp, Lyp, origin=origin)
        self._jx = (nxp - domain.nx) // 2
        self._jy = (nyp - domain.ny) // 2
        px = np.exp(-1j * np.pi * np.arange(nxp) / nxp)
        py = np.exp(-1j * np.pi * np.arange(nyp) / nyp)
        self._phase = py[:, None] * px[None, :]
        kx = 2.0 * np.pi * np.fft.fftfreq(nxp, d=self.padded.hx) + np.pi / Lxp
        ky = 2.0 * np.pi * np.fft.fftfreq(nyp, d=self.padded.hy) + np.pi / Lyp
        kappa = kx[None, :] + 1j * ky[:, None]
        self._cauchy_mult = -2j / kappa
        self._beurling_mult = np.conj(kappa) / kappa

    # -- data movement -------------------------------------------------------
    def embed(self, data: np.ndarray) -> np.ndarray:
        out = np.zeros(self.padded.shape, dtype=complex)
        out[self._jy:self._jy + self.base.ny, self._jx:self._jx + self.base.nx] = data
        return out

    def crop(self, padded: np.ndarray) -> np.ndarray:
        return padded[self._jy:self._jy + self.base.ny,
                      self._jx:self._jx + self.base.nx].copy()

    # -- multipliers ----------------------------------------------------------
    def _apply(self, data: np.ndarray, mult: np.ndarray) -> np.ndarray:
        spec = np.fft.fft2(data * self._phase)
        return np.fft.ifft2(spec * mult) * np.conj(self._phase)

    def cauchy(self, data: np.ndarray) -> np.ndarray:
        """Solve dzbar(u) = data on the padded cell, decaying normalization."""
        return self._apply(data, self._cauchy_mult)

    def beurling(self, data: np.ndarray) -> np.ndarray:
        """T = dz o Cauchy; exact L2 isometry of the padded lattice."""
        return self._apply(data, self._beurling_mult)

    def dzbar(self, data: np.ndarray) -> np.ndarray:
        kx = 2.0 * np.pi * np.fft.fftfreq(self.padded.nx, d=self.padded.hx) + np.pi / self.padded.Lx
        ky = 2.0 * np.pi * np.fft.fftfreq(self.padded.ny, d=self.padded.hy) + np.pi / self.padded.Ly
        kappa = kx[None, :] + 1j * ky[:, None]
        return self._apply(data, 0.5j * kappa)

    def l2norm(self, data: np.ndarray) -> float:
        return float(np.sqrt(np.sum(np.abs(data) ** 2) * self.padded.hx * self.padded.hy))


def _check_supported(h: ComplexField, margin_frac: float = 0.25):
    dom = h.domain
    nx, ny = dom.nx, dom.ny
    mx = max(1, int(margin_frac * nx / 2))
    my = max(1, int(margin_frac * ny / 2))
    edge = np.abs(h.data).copy()
    edge[my:-my, mx:-mx] = 0.0
    peak = float(np.max(edge))
    if peak > 1e-12 * max(h.max_abs(), 1.0):
        raise SupportError(
            f"data of size {peak:.3g} within {margin_frac:.0%} of the window boundary"
        )


def cauchy_transform(h: ComplexField, pad_factor: int = 4) -> ComplexField:
    """Cauchy transform of a compactly supported field.

    Returns the solution of dzbar(u) = h on the enlarged padded window (so
    the decay toward the padded boundary is visible to callers).
    """
    _check_supported(h)
    tr = WindowTransforms(h.domain, pad_factor)
    u = tr.cauchy(tr.embed(h.data))
    return ComplexField(tr.padded, u, f"C({h.label})" if h.label else "C")


def beurling_transform(h: ComplexField, pad_factor: int = 4) -> ComplexField:
    """Beurling transform on the enlarged padded window."""
    _check_supported(h)
    tr = WindowTransforms(h.domain, pad_factor)
    t = tr.beurling(tr.embed(h.data))
    return ComplexField(tr.padded, t, f"T({h.label})" if h.label else "T")


def solve_beltrami(mu: BeltramiCoefficient, tol: float = 1e-10, max_iter: int = 200,
                   pad_factor: int = 4) -> QCMap:
    """Normalized solution of the Beltrami equation dzbar(f) = mu dz(f).

    Neumann iteration on h = mu T h + mu followed by f = z + C h.  The
    residual is the L2 norm of h - mu T h - mu over the padded window, which
    equals ||dzbar f - mu dz f|| for the lattice derivative.
    """
    tr = WindowTransforms(mu.mu.domain, pad_factor)
    mup = tr.embed(mu.mu.data)
    h = mup.copy()
    updates = []
    converged = False
    for _ in range(max_iter):
        h_new = mup * tr.beurling(h) + mup
        delta = tr.l2norm(h_new - h)
        updates.append(delta)
        h = h_new
        if delta <= tol:
            converged = True
            break
    if not converged:
        raise NonConvergenceError(
            f"Neumann iteration not converged after {max_iter} iterations "
            f"(contraction estimate sup|mu| * C_2 = {mu.sup:.6g}, "
            f"last update {updates[-1]:.3g})",
            iterations=max_iter,
            contraction=mu.sup,
        )
    residual = tr.l2norm(h - mup * tr.beurling(h) - mup)
    u = tr.crop(tr.cauchy(h))
    dom = mu.mu.domain
    f = ComplexField(dom, dom.nodes() + u, "qc map")
    return QCMap(f=f, mu=mu, residual=residual, iterations=len(updates),
                 update_norms=tuple(updates))


def affine_fit(f: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[complex, complex]:
    """Least-squares a, b with a*f + b closest to target on the masked nodes.

    Comparison of QC maps is up to post-composition with complex affine
    maps; this fits the normalization before differencing.
    """
    x = f[mask].ravel()
    y = target[mask].ravel()
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return complex(coef[0]), complex(coef[1])
