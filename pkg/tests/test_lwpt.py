import numpy as np
import pytest

from helmprec.filters import build_filter_bank, localize
from helmprec.grid import MediumClassParams, constant_medium, grid_for_ppw, make_grid, sample_medium
from helmprec.lwpt import (
    MID, axial_fourier, axial_fourier_inverse, axial_wavenumbers, build_weights, damping_floor,
    fio_adjoint, fio_forward, fourier_weight, frame_adjoint, frame_forward, laplacian_symbol,
    mid_weight, resolution_floor, verify_tile_adaptation, WavePacketTransform,
)
from helmprec.rays import build_ray_tables, eval_S

from conftest import random_complex, rel_err


def make_frame(medium, omega):
    bank = build_filter_bank(omega, medium.c_min, medium.c_max, medium.grid)
    return WavePacketTransform(bank, build_ray_tables(medium, bank, omega))


@pytest.fixture(scope="module")
def const_frame():
    g = make_grid(64, 64)
    m = constant_medium(g)
    omega = 2 * np.pi / (16 * g.h)
    return m, omega, make_frame(m, omega)


@pytest.fixture(scope="module")
def var_frame():
    g = make_grid(64, 64)
    m = sample_medium(MediumClassParams(seed=3), g)
    omega = 2 * np.pi * m.c_min / (16 * g.h)
    return m, omega, make_frame(m, omega)


class TestFIO:
    def test_constant_medium_modulated_dft(self, const_frame, rng):
        m, omega, frame = const_frame
        for (a, b), t in frame.tables.tables.items():
            g = random_complex(rng, (t.y_rel.size, t.T.shape[2]))
            got = fio_forward(t, g)
            p = t.zeta / omega
            # sqrt(1 - p^2) inside the cone, its regularized continuation outside
            phase = np.exp(-1j * omega * t.y_rel[:, None] * eval_S(frame.tables.symbol, p)[None, :])
            ref = np.fft.fft(g, axis=1, norm="ortho") * phase
            assert rel_err(got, ref) <= 1e-10

    def test_adjoint(self, var_frame, rng):
        _, _, frame = var_frame
        t = frame.tables[(1, 0)]
        g = random_complex(rng, (t.y_rel.size, t.T.shape[2]))
        v = random_complex(rng, (t.y_rel.size, t.n_k))
        lhs, rhs = np.vdot(v, fio_forward(t, g)), np.vdot(fio_adjoint(t, v), g)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_shape_check(self, var_frame):
        t = var_frame[2].tables[(0, 0)]
        with pytest.raises(ValueError):
            fio_forward(t, np.zeros((3, 3)))

    def test_frame_function_concentration(self):
        g = make_grid(64, 64)
        m = sample_medium(MediumClassParams(seed=1), g)
        omega = 2 * np.pi * m.c_min / (16 * g.h)
        frame = make_frame(m, omega)
        s = next(s for s in frame.mid_slots() if frame.bank.angles[s.angle].angle == 0.0)
        lay = frame.bank.angles[s.angle]
        assert lay.bands.lengths[s.band] * lay.dy >= 0.5
        t = frame.tables[(s.angle, s.band)]
        # a propagating transverse index near the middle of the band
        k = int(np.argmin(np.abs(t.zeta)))
        vals = np.zeros((t.y_rel.size, t.n_k), complex)
        vals[:, k] = 1.0
        back = fio_forward(t, fio_adjoint(t, vals))
        assert np.sum(np.abs(back[:, k]) ** 2) / np.sum(np.abs(back) ** 2) >= 0.9


class TestAxialFourier:
    def test_constant(self):
        v = np.ones((16, 5), complex)
        c = axial_fourier(v)
        assert np.allclose(c[1:], 0) and np.allclose(c[0], 4.0)

    def test_parseval_roundtrip(self, rng):
        v = random_complex(rng, (24, 7))
        c = axial_fourier(v)
        assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(v), rel=1e-12)
        assert rel_err(axial_fourier_inverse(c), v) <= 1e-13


class TestFrame:
    def test_adjoint_variable(self, var_frame, rng):
        m, _, frame = var_frame
        for _ in range(5):
            u = random_complex(rng, m.grid.shape)
            v = random_complex(rng, frame.size)
            gap = abs(np.vdot(v, frame_forward(frame, u)) - np.vdot(frame_adjoint(frame, v), u))
            assert gap <= 1e-11 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_tight_constant(self, const_frame, rng):
        m, _, frame = const_frame
        u = random_complex(rng, m.grid.shape)
        c = frame.forward(u)
        assert rel_err(frame.adjoint(c), u) <= 1e-6
        assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(u), rel=1e-6)

    def test_nearly_tight_variable(self, var_frame, rng):
        m, _, frame = var_frame
        u = random_complex(rng, m.grid.shape)
        assert rel_err(frame.adjoint(frame.forward(u)), u) <= 0.15

    def test_frame_norm_power_iteration(self, var_frame, rng):
        m, _, frame = var_frame
        x = random_complex(rng, m.grid.shape)
        for _ in range(15):
            x = frame.adjoint(frame.forward(x)) - x
            lam = np.linalg.norm(x)
            x /= lam
        assert lam <= 0.15

    def test_coefficient_count(self, var_frame):
        _, _, frame = var_frame
        assert frame.size == sum(s.size for s in frame.slots)
        offs = [s.offset for s in frame.slots]
        assert offs == sorted(offs) and offs[0] == 0

    def test_index(self, var_frame):
        _, _, frame = var_frame
        s = frame.mid_slots()[3]
        idx = frame.index(s.offset + s.shape[1] + 2)
        assert (idx.component, idx.angle, idx.band, idx.j, idx.k) == (MID, s.angle, s.band, 1, 2)
        assert frame.index(0).component == "low"
        assert frame.index(frame.slots[1].offset).component == "high"
        with pytest.raises(IndexError):
            frame.index(frame.size)

    def test_dump(self, var_frame, tmp_path, rng):
        _, _, frame = var_frame
        c = random_complex(rng, frame.size)
        frame.dump(tmp_path / "coeffs", c)
        lines = (tmp_path / "coeffs.manifest").read_text().splitlines()
        assert len(lines) == 1 + len(frame.slots)
        assert np.array_equal(np.fromfile(tmp_path / "coeffs.bin", dtype="<c16"), c)
        comp, a, b, off, length, shape = lines[3].split()
        s = frame.slots[2]
        assert (comp, int(a), int(b), int(off), int(length)) == (s.component, s.angle, s.band, s.offset, s.size)

    def test_adjoint_rejects_size(self, var_frame):
        with pytest.raises(ValueError):
            var_frame[2].adjoint(np.zeros(3, complex))

    def test_energy_bookkeeping_localization(self, var_frame, rng):
        m, _, frame = var_frame
        u = random_complex(rng, m.grid.shape)
        assert localize(frame.bank, u).energy() == pytest.approx(np.linalg.norm(u) ** 2, rel=1e-9)


class TestWeights:
    def test_mid_on_axis(self):
        assert mid_weight(0.0, 40 * np.pi, 1.3) == pytest.approx(1.3 / (80 * np.pi))

    def test_fourier_on_characteristic(self):
        omega, c = 40 * np.pi, 0.9
        assert fourier_weight((omega / c) ** 2, omega, c) == pytest.approx(c / omega)

    def test_mid_monotone(self):
        eta = axial_wavenumbers(32, 1 / 32)
        w = mid_weight(eta, 10.0, 1.0, floor=3.0)
        order = np.argsort(np.abs(eta))
        assert np.all(np.diff(w[order]) <= 0)

    def test_laplacian_symbol(self):
        g = make_grid(16, 16)
        x1, x2 = g.coords()
        u = np.exp(2j * np.pi * (3 * x1 - 2 * x2))
        lam = laplacian_symbol(g)
        from helmprec.grid import dft2
        spectrum = dft2(u)
        k = np.unravel_index(np.argmax(np.abs(spectrum)), spectrum.shape)
        lap = (4 * u - np.roll(u, 1, 0) - np.roll(u, -1, 0) - np.roll(u, 1, 1) - np.roll(u, -1, 1)) / g.h ** 2
        assert rel_err(lap, lam[k] * u) < 1e-12
        xi1, xi2 = g.wavenumbers()
        small = (xi1 ** 2 + xi2 ** 2) < (0.2 / g.h) ** 2
        assert np.allclose(lam[small], (xi1 ** 2 + xi2 ** 2)[small], rtol=0.01)

    def test_floors(self):
        m = constant_medium(make_grid(8, 8), alpha=2 * np.pi)
        assert damping_floor(m) == pytest.approx(np.pi)
        assert resolution_floor(m, 10, 0.05) == pytest.approx(np.hypot(np.pi, 2 * np.pi))

    def test_build_weights(self, var_frame):
        m, omega, frame = var_frame
        w = build_weights(frame, m, omega)
        assert w.shape == (frame.size,) and np.all(w > 0) and np.all(np.isfinite(w))
        s = frame.mid_slots()[0]
        block = w[s.offset:s.offset + s.size].reshape(s.shape)
        assert np.allclose(block, block[:, :1])  # constant in k
        fl = resolution_floor(m, s.shape[0], frame.bank.angles[s.angle].dy)
        assert block[0, 0] == pytest.approx(m.c_mean / (2 * omega) / fl)
        w1 = build_weights(frame, m, omega, floor=1.0)
        assert w1[s.offset] == pytest.approx(m.c_mean / (2 * omega))

    def test_tile_adaptation_constant(self):
        omega = 10 * np.pi
        g = grid_for_ppw(omega, 16, 1.0)
        m = constant_medium(g)
        frame = make_frame(m, omega)
        rep = verify_tile_adaptation(frame, m, omega, build_weights(frame, m, omega), tiles_per_band=8)
        assert rep.mid_c_max <= 4
        assert rep.fourier_c_max <= 3
        assert rep.n_samples > 0

    def test_tile_adaptation_variable_logged(self, var_frame, caplog):
        m, omega, frame = var_frame
        rep = verify_tile_adaptation(frame, m, omega, build_weights(frame, m, omega), tiles_per_band=4)
        assert np.isfinite(rep.c_max) and rep.c_max >= 1
        assert rep.fourier_c_max <= 3
