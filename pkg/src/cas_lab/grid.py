"""Periodic complex scalar fields on rectangular grids.

Fields live on an nx-by-ny rectangular lattice covering one period cell
[Ox, Ox+Lx) x [Oy, Oy+Ly).  Two Wirtinger-derivative backends are provided:

* ``"spectral"`` -- FFT differentiation, exact on resolved trigonometric
  polynomials.  Requires power-of-two resolutions and genuinely periodic data.
* ``"fd4"`` -- 4th-order central differences with wrap-around indexing.  For
  non-periodic window data the wrap poisons a margin of ~2 nodes per
  derivative; window computations trim a margin before comparing anything.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

MAGIC = b"CASF"
SNAPSHOT_VERSION = 1

__all__ = [
    "GridDomain",
    "ComplexField",
    "FieldError",
    "make_field",
    "sample_map",
    "d_z",
    "d_zbar",
    "d_x",
    "d_y",
    "write_snapshot",
    "read_snapshot",
]


class FieldError(ValueError):
    """Raised for invalid field data (non-finite samples, shape mismatch)."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridDomain:
    """Rectangular period cell with its sampling resolution.

    Nodes sit at ``origin + (j*Lx/nx, k*Ly/ny)`` for ``j in range(nx)``,
    ``k in range(ny)``; the right/top edges are excluded (periodic
    convention).  The same type doubles as a compact chart window for the
    non-periodic examples, in which case the finite-difference backend and
    interior margins apply.
    """

    nx: int
    ny: int
    Lx: float
    Ly: float
    origin: complex = 0j

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"resolution must be >= 4, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("periods must be positive")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        # data layout: data[k, j] with k the y-index (row), j the x-index
        return (self.ny, self.nx)

    def nodes(self) -> np.ndarray:
        """Complex node coordinates, shape (ny, nx)."""
        j = np.arange(self.nx)
        k = np.arange(self.ny)
        x = self.origin.real + j * self.hx
        y = self.origin.imag + k * self.hy
        return x[None, :] + 1j * y[:, None]

    def compatible(self, other: "GridDomain") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and np.isclose(self.Lx, other.Lx)
            and np.isclose(self.Ly, other.Ly)
            and np.isclose(abs(self.origin - other.origin), 0.0)
        )


@dataclass(frozen=True)
class ComplexField:
    """Immutable complex scalar samples on a :class:`GridDomain`."""

    domain: GridDomain
    data: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.complex128)
        if arr.shape != self.domain.shape:
            raise FieldError(
                f"data shape {arr.shape} does not match domain {self.domain.shape}"
            )
        if not np.all(np.isfinite(arr.view(np.float64))):
            bad = np.argwhere(~np.isfinite(arr))
            k, j = bad[0]
            raise FieldError(
                f"non-finite sample at node (j={j}, k={k}), "
                f"z={self.domain.nodes()[k, j]:.6g}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    # -- small arithmetic conveniences; all return new fields ---------------
    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, ComplexField):
            if not self.domain.compatible(other.domain):
                raise FieldError("resolution mismatch between paired fields")
            return other.data
        return np.asarray(other, dtype=np.complex128)

    def with_data(self, data: np.ndarray, label: str | None = None) -> "ComplexField":
        return ComplexField(self.domain, data, self.label if label is None else label)

    def __add__(self, other):
        return self.with_data(self.data + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_data(self.data - self._coerce(other))

    def __rsub__(self, other):
        return self.with_data(self._coerce(other) - self.data)

    def __mul__(self, other):
        return self.with_data(self.data * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_data(self.data / self._coerce(other))

    def __rtruediv__(self, other):
        return self.with_data(self._coerce(other) / self.data)

    def __neg__(self):
        return self.with_data(-self.data)

    def conj(self) -> "ComplexField":
        return self.with_data(np.conj(self.data))

    def exp(self) -> "ComplexField":
        return self.with_data(np.exp(self.data))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))

    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.abs(self.data) ** 2)))

    def interior(self, margin: int) -> np.ndarray:
        """View of the samples with a boundary margin trimmed (window use)."""
        if margin == 0:
            return self.data
        return self.data[margin:-margin, margin:-margin]

    def relabel(self, label: str) -> "ComplexField":
        return replace(self, label=label)


def make_field(domain: GridDomain, generator, label: str = "") -> ComplexField:
    """Sample a pointwise rule z -> C at the grid nodes.

    The generator is called with the full complex node array and may return
    an array or a scalar.  Non-finite samples are rejected with the node
    location.
    """
    z = domain.nodes()
    vals = generator(z)
    data = np.broadcast_to(np.asarray(vals, dtype=np.complex128), domain.shape)
    return ComplexField(domain, np.array(data), label)


def sample_map(mapping, domain: GridDomain, label: str = "") -> tuple[ComplexField, ...]:
    """Sample a closed-form map z -> C^k componentwise.

    ``mapping`` receives the complex node array and returns a sequence of k
    arrays (or a single array for k = 1).
    """
    z = domain.nodes()
    vals = mapping(z)
    if isinstance(vals, np.ndarray) and vals.shape == z.shape:
        vals = (vals,)
    return tuple(
        ComplexField(domain, np.broadcast_to(np.asarray(v, dtype=np.complex128), domain.shape).copy(),
                     f"{label}[{i}]" if label else "")
        for i, v in enumerate(vals)
    )


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def _check_backend(backend: str):
    if backend not in ("spectral", "fd4"):
        raise ValueError(f"unknown derivative backend {backend!r}")


def _spectral_kgrid(domain: GridDomain) -> tuple[np.ndarray, np.ndarray]:
    kx = 2.0 * np.pi * np.fft.fftfreq(domain.nx, d=domain.hx)
    ky = 2.0 * np.pi * np.fft.fftfreq(domain.ny, d=domain.hy)
    return kx, ky


def _spectral_diff(data: np.ndarray, domain: GridDomain, axis: str) -> np.ndarray:
    # The Nyquist mode is differentiated with its one-sided frequency
    # -pi*n/L (fftfreq convention); zeroing it instead would hand the
    # composed Laplacian a spurious kernel on the Nyquist modes.  Fields in
    # resolved use never carry Nyquist content, so both conventions agree
    # there; this one keeps field-level and operator-level paths identical.
    if not (_is_pow2(domain.nx) and _is_pow2(domain.ny)):
        raise FieldError("spectral path requires power-of-two resolutions")
    kx, ky = _spectral_kgrid(domain)
    fh = np.fft.fft2(data)
    if axis == "x":
        fh = fh * (1j * kx[None, :])
    else:
        fh = fh * (1j * ky[:, None])
    return np.fft.ifft2(fh)


def _fd4_diff(data: np.ndarray, domain: GridDomain, axis: str) -> np.ndarray:
    ax = 1 if axis == "x" else 0
    h = domain.hx if axis == "x" else domain.hy
    p1 = np.roll(data, -1, axis=ax)
    m1 = np.roll(data, 1, axis=ax)
    p2 = np.roll(data, -2, axis=ax)
    m2 = np.roll(data, 2, axis=ax)
    return (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)


def _diff(f: ComplexField, axis: str, backend: str) -> np.ndarray:
    _check_backend(backend)
    if backend == "spectral":
        return _spectral_diff(f.data, f.domain, axis)
    return _fd4_diff(f.data, f.domain, axis)


def d_x(f: ComplexField, backend: str = "spectral") -> ComplexField:
    return f.with_data(_diff(f, "x", backend))


def d_y(f: ComplexField, backend: str = "spectral") -> ComplexField:
    return f.with_data(_diff(f, "y", backend))


def d_z(f: ComplexField, backend: str = "spectral") -> ComplexField:
    """Wirtinger derivative d_z = (d_x - i d_y)/2."""
    fx = _diff(f, "x", backend)
    fy = _diff(f, "y", backend)
    return f.with_data(0.5 * (fx - 1j * fy))


def d_zbar(f: ComplexField, backend: str = "spectral") -> ComplexField:
    """Wirtinger derivative d_zbar = (d_x + i d_y)/2."""
    fx = _diff(f, "x", backend)
    fy = _diff(f, "y", backend)
    return f.with_data(0.5 * (fx + 1j * fy))


# ---------------------------------------------------------------------------
# binary snapshots
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIIdd")  # magic, version, nx, ny, Lx, Ly -> 32 bytes


def write_snapshot(f: ComplexField, path) -> None:
    """Write the 32-byte-header binary snapshot format.

    Layout: magic "CASF", version u32, nx u32, ny u32, Lx f64, Ly f64, then
    nx*ny little-endian (re, im) f64 pairs in row-major order.  The origin
    and label travel in the JSON descriptors of higher-level records, not in
    the snapshot itself.
    """
    d = f.domain
    header = _HEADER.pack(MAGIC, SNAPSHOT_VERSION, d.nx, d.ny, d.Lx, d.Ly)
    payload = np.ascontiguousarray(f.data, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_snapshot(path, origin: complex = 0j, label: str = "") -> ComplexField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FieldError(f"snapshot {path} truncated")
    magic, version, nx, ny, Lx, Ly = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldError(f"bad magic {magic!r} in {path}")
    if version != SNAPSHOT_VERSION:
        raise FieldError(f"unsupported snapshot version {version}")
    expect = nx * ny * 16
    body = raw[_HEADER.size:]
    if len(body) != expect:
        raise FieldError(f"snapshot {path}: expected {expect} payload bytes, got {len(body)}")
    data = np.frombuffer(body, dtype="<c16").reshape(ny, nx)
    return ComplexField(GridDomain(nx, ny, Lx, Ly, origin), data.copy(), label)
