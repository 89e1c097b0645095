import numpy as np
import pytest

from cas_lab.grid import (
    ComplexField,
    FieldError,
    GridDomain,
    d_z,
    d_zbar,
    make_field,
    read_snapshot,
    sample_map,
    write_snapshot,
)


def torus(n=16, L=1.0):
    return GridDomain(n, n, L, L)


def test_make_field_zero():
    f = make_field(torus(), lambda z: 0.0 * z)
    assert np.all(f.data == 0)


def test_make_field_identity():
    dom = torus()
    f = make_field(dom, lambda z: z)
    assert np.allclose(f.data, dom.nodes())


def test_make_field_plane_wave_unit_modulus():
    dom = GridDomain(64, 64, 2.0, 2.0)
    f = make_field(dom, lambda z: np.exp(2j * np.pi * z.real / dom.Lx))
    # pointwise evaluation oracle: |exp(i phi)| = 1 at every node
    assert abs(f.max_abs() - 1.0) < 1e-14
    assert np.allclose(np.abs(f.data), 1.0, atol=1e-14)


def test_make_field_rejects_nonfinite_with_location():
    dom = torus(8)

    def gen(z):
        out = np.ones_like(z)
        out[3, 5] = np.inf
        return out

    with pytest.raises(FieldError, match=r"j=5, k=3"):
        make_field(dom, gen)


def test_dzbar_annihilates_constants():
    f = make_field(torus(), lambda z: 2.7 - 0.3j + 0 * z)
    assert d_zbar(f).max_abs() < 1e-14


def test_dz_plane_wave_symbol():
    # d_z exp(2 pi i x / L) = (pi i / L) exp(2 pi i x / L)
    dom = GridDomain(32, 32, 2.0, 1.0)
    f = make_field(dom, lambda z: np.exp(2j * np.pi * z.real / dom.Lx))
    g = d_z(f)
    expect = (1j * np.pi / dom.Lx) * f.data
    assert np.max(np.abs(g.data - expect)) < 1e-12


def test_dz_dzbar_commute():
    rng = np.random.default_rng(7)
    dom = torus(32, 2.0)
    z = dom.nodes()
    data = np.zeros(dom.shape, dtype=complex)
    for _ in range(6):
        m, n = rng.integers(-5, 6, size=2)
        c = rng.standard_normal() + 1j * rng.standard_normal()
        data += c * np.exp(2j * np.pi * (m * z.real / dom.Lx + n * z.imag / dom.Ly))
    f = ComplexField(dom, data)
    a = d_z(d_zbar(f)).data
    b = d_zbar(d_z(f)).data
    assert np.max(np.abs(a - b)) < 1e-12


def test_spectral_exact_on_trig_polynomials():
    dom = GridDomain(32, 16, 1.5, 2.5)
    z = dom.nodes()
    m, n = 3, -2
    phase = 2j * np.pi * (m * z.real / dom.Lx + n * z.imag / dom.Ly)
    f = ComplexField(dom, np.exp(phase))
    kx = 2 * np.pi * m / dom.Lx
    ky = 2 * np.pi * n / dom.Ly
    exact_dz = 0.5 * (1j * kx - 1j * 1j * ky) * f.data
    exact_dzb = 0.5 * (1j * kx + 1j * 1j * ky) * f.data
    rel = np.max(np.abs(d_z(f).data - exact_dz)) / np.max(np.abs(exact_dz))
    assert rel < 1e-12
    rel = np.max(np.abs(d_zbar(f).data - exact_dzb)) / max(np.max(np.abs(exact_dzb)), 1e-30)
    assert rel < 1e-12


def test_fd4_convergence_order():
    errs = []
    for n in (32, 64):
        dom = GridDomain(n, n, 1.0, 1.0)
        z = dom.nodes()
        f = ComplexField(dom, np.exp(np.sin(2 * np.pi * z.real)))
        exact = np.pi * np.cos(2 * np.pi * z.real) * f.data  # d_z = (1/2) d_x here
        err = np.max(np.abs(d_z(f, backend="fd4").data - exact))
        errs.append(err)
    order = np.log2(errs[0] / errs[1])
    assert order > 3.5


def test_fd4_exact_on_cubics_window():
    # central 4th-order differences are exact on polynomials of degree <= 4;
    # wrap-around poisons a 2-node margin on the window
    dom = GridDomain(16, 16, 2.0, 2.0, origin=-1 - 1j)
    z = dom.nodes()
    f = ComplexField(dom, z**3 * np.conj(z))
    got = d_zbar(f, backend="fd4").data
    exact = z**3
    m = 2
    assert np.max(np.abs((got - exact)[m:-m, m:-m])) < 1e-12


def test_sample_map_identity():
    dom = torus(8)
    (f,) = sample_map(lambda z: z, dom)
    assert np.allclose(f.data, dom.nodes())


def test_sample_map_tzitzeica_origin():
    # f(0, 0) = c (1, 1, 1) with c = 1
    zeta = np.exp(2j * np.pi / 3)
    dom = GridDomain(8, 8, 2.0, 2.0, origin=-1 - 1j)

    def tz(z):
        zb = np.conj(z)
        return (np.exp(z + zb), np.exp(zeta**2 * z + zeta * zb), np.exp(zeta * z + zeta**2 * zb))

    f1, f2, f3 = sample_map(tz, dom)
    k, j = 4, 4  # node at the origin
    assert abs(dom.nodes()[k, j]) < 1e-14
    for f in (f1, f2, f3):
        assert abs(f.data[k, j] - 1.0) < 1e-14


def test_sample_map_paraboloid_value():
    # (x, y) -> (x, y, (x^2 + e^{i theta} y^2)/2) at (1, 1), theta = pi -> (1, 1, 0)
    dom = GridDomain(8, 8, 4.0, 4.0, origin=-1 - 1j)

    def parab(z):
        x, y = z.real, z.imag
        return (x + 0j, y + 0j, 0.5 * (x**2 + np.exp(1j * np.pi) * y**2))

    fx, fy, fz = sample_map(parab, dom)
    k = 4  # y = 1
    j = 4  # x = 1
    assert abs(dom.nodes()[k, j] - (1 + 1j)) < 1e-14
    assert abs(fx.data[k, j] - 1) < 1e-14
    assert abs(fy.data[k, j] - 1) < 1e-14
    assert abs(fz.data[k, j]) < 1e-14


def test_snapshot_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    dom = GridDomain(16, 8, 1.25, 3.5)
    f = ComplexField(dom, rng.standard_normal(dom.shape) + 1j * rng.standard_normal(dom.shape))
    p = tmp_path / "f.casf"
    write_snapshot(f, p)
    g = read_snapshot(p)
    assert g.domain.nx == 16 and g.domain.ny == 8
    assert g.domain.Lx == dom.Lx and g.domain.Ly == dom.Ly
    assert g.data.tobytes() == f.data.tobytes()
    write_snapshot(g, tmp_path / "g.casf")
    assert (tmp_path / "f.casf").read_bytes() == (tmp_path / "g.casf").read_bytes()


def test_snapshot_header_size_and_magic(tmp_path):
    dom = torus(4)
    f = make_field(dom, lambda z: z)
    p = tmp_path / "f.casf"
    write_snapshot(f, p)
    raw = p.read_bytes()
    assert raw[:4] == b"CASF"
    assert len(raw) == 32 + 16 * 16


def test_resolution_mismatch_rejected():
    a = make_field(torus(8), lambda z: z)
    b = make_field(torus(16), lambda z: z)
    with pytest.raises(FieldError, match="mismatch"):
        _ = a + b


def test_fields_are_immutable():
    f = make_field(torus(8), lambda z: z)
    with pytest.raises(ValueError):
        f.data[0, 0] = 1.0
