import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helmprec.filters import (
    DEFAULT_ANGLES, FourierRect, NyquistError, SupportError, WedgeSet, band_merge, band_split,
    build_filter_bank, delocalize, localize, make_band_layout, radial_cutoffs, scale_merge,
    scale_split, shear_rotate, shear_unrotate, smooth_step, subsample, upsample, wedge_merge,
    wedge_split,
)
from helmprec.grid import MediumClassParams, make_grid, sample_medium

from conftest import random_complex, rel_err


@pytest.fixture(scope="module")
def bank():
    g = make_grid(64, 64)
    return build_filter_bank(2 * np.pi / (16 * g.h), 1.0, 1.0, g)


@pytest.fixture(scope="module")
def variable_bank():
    g = make_grid(64, 64)
    m = sample_medium(MediumClassParams(seed=2), g)
    return build_filter_bank(2 * np.pi * m.c_min / (16 * g.h), m.c_min, m.c_max, g)


class TestSmoothStep:
    def test_endpoints(self):
        assert smooth_step(0.0) == 0.0 and smooth_step(1.0) == 1.0
        assert smooth_step(-3.0) == 0.0 and smooth_step(7.0) == 1.0

    @pytest.mark.parametrize("steepness", [0.3, 1.0, 4.0])
    def test_midpoint(self, steepness):
        assert smooth_step(0.5, steepness) == pytest.approx(np.sqrt(2) / 2, abs=1e-15)

    def test_pair_identity(self):
        assert smooth_step(0.3) ** 2 + smooth_step(0.7) ** 2 == pytest.approx(1.0, abs=1e-12)

    def test_monotone(self):
        x = np.linspace(0, 1, 2001)
        assert np.all(np.diff(smooth_step(x)) >= 0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-2, 3, allow_nan=False), st.floats(0.1, 5.0))
    def test_identity_property(self, x, steepness):
        total = smooth_step(x, steepness) ** 2 + smooth_step(1 - x, steepness) ** 2
        assert abs(total - 1) <= 1e-12


class TestRadialCutoffs:
    def test_breakpoints(self):
        g = make_grid(160, 160)
        b = build_filter_bank(40 * np.pi, 1.0, 1.0, g)
        assert (b.k1, b.k2, b.k3, b.k4) == pytest.approx((8 * np.pi, 40 * np.pi, 40 * np.pi, 56 * np.pi))

    def test_partition_random_points(self, rng):
        rho = rng.uniform(0, 400, 10_000)
        chis = radial_cutoffs(rho, 20, 100, 130, 180)
        assert np.abs(sum(c ** 2 for c in chis) - 1).max() <= 1e-12

    def test_partition_on_grid(self, variable_bank):
        b = variable_bank
        assert np.abs(b.chi1 ** 2 + b.chi2 ** 2 + b.chi3 ** 2 - 1).max() <= 1e-12

    def test_supports(self, variable_bank):
        b = variable_bank
        rho = np.hypot(*b.grid.wavenumbers())
        assert np.all(b.chi1[rho >= b.k2] == 0)
        assert np.all(b.chi3[rho <= b.k3] == 0)
        assert np.all(b.chi2[(rho <= b.k1) | (rho >= b.k4)] == 0)

    def test_low_point(self):
        chi1, chi2, chi3 = radial_cutoffs(0.5 * 20, 20, 100, 130, 180)
        assert (chi1, chi2, chi3) == (1.0, 0.0, 0.0)

    def test_bad_breakpoints(self):
        with pytest.raises(ValueError):
            radial_cutoffs(1.0, 3, 2, 4, 5)

    def test_nyquist(self):
        g = make_grid(32, 32)
        with pytest.raises(NyquistError):
            build_filter_bank(40 * np.pi, 1.0, 1.0, g)


class TestWedges:
    def test_default_angles(self):
        assert DEFAULT_ANGLES == tuple(float(a) for a in range(-225, 91, 45))
        assert len(WedgeSet().angles) == 8

    def test_squared_sum(self):
        w = WedgeSet()
        phi = np.linspace(-180, 180, 5001)
        total = sum(w.window(a, phi) ** 2 for a in range(8))
        assert np.abs(total - 1).max() <= 1e-12

    def test_slopes(self):
        w = WedgeSet()
        for a, ang in enumerate(w.angles):
            p, q = w.slope(a)
            assert np.allclose(np.array([q, p]) / np.hypot(p, q), w.direction(a), atol=1e-12)

    def test_unrepresentable_angle(self):
        with pytest.raises(ValueError):
            WedgeSet(angles=(0.0, 30.0, 120.0)).lattice_scale(1)

    def test_plane_wave_support(self, bank):
        g = bank.grid
        x1, _ = g.coords()
        k = int(round(0.5 * (bank.k2 + bank.k3) / (2 * np.pi)))
        u = np.exp(2j * np.pi * k * x1)  # wave vector along angle 0
        parts = wedge_split(bank, u)
        norms = [np.linalg.norm(p) for p in parts]
        for a, ang in enumerate(bank.wedges.angles):
            d = (ang + 180) % 360 - 180
            if abs(d) > 45:
                assert norms[a] <= 1e-12 * np.linalg.norm(u)

    def test_energy_and_merge(self, bank, rng):
        _, u2, _ = scale_split(bank, random_complex(rng, bank.grid.shape))
        parts = wedge_split(bank, u2)
        assert sum(np.linalg.norm(p) ** 2 for p in parts) == pytest.approx(np.linalg.norm(u2) ** 2, rel=1e-10)
        assert rel_err(wedge_merge(bank, parts), u2) <= 1e-10


class TestScaleSplit:
    def test_low_mode(self, bank):
        u = np.full(bank.grid.shape, 1.0 + 0j)  # xi = 0 < k1
        u1, u2, u3 = scale_split(bank, u)
        assert np.allclose(u1, u) and np.allclose(u2, 0) and np.allclose(u3, 0)

    def test_roundtrip(self, bank, rng):
        u = random_complex(rng, bank.grid.shape)
        assert rel_err(scale_merge(bank, *scale_split(bank, u)), u) <= 1e-12

    def test_adjoint(self, bank, rng):
        u = random_complex(rng, bank.grid.shape)
        vs = [random_complex(rng, bank.grid.shape) for _ in range(3)]
        lhs = sum(np.vdot(v, p) for v, p in zip(vs, scale_split(bank, u)))
        rhs = np.vdot(scale_merge(bank, *vs), u)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


class TestSubsampleRotate:
    def component(self, bank, rng, a=0):
        _, u2, _ = scale_split(bank, random_complex(rng, bank.grid.shape))
        return wedge_split(bank, u2)[a]

    @pytest.mark.parametrize("a", range(8))
    def test_subsample_inverse(self, bank, rng, a):
        comp = self.component(bank, rng, a)
        lay = bank.angles[a]
        coarse = subsample(comp, lay.rect)
        assert rel_err(upsample(coarse, lay.rect, bank.grid), comp) <= 1e-10
        assert np.linalg.norm(coarse) == pytest.approx(np.linalg.norm(comp), rel=1e-12)

    def test_coarse_size(self):
        omega = 40 * np.pi
        g = make_grid(320, 320)
        b = build_filter_bank(omega, 1.0, 1.0, g)
        lay = b.angles[5]  # angle 0
        # rectangle spans about 2 points per wavelength along the axis
        assert 0.5 * (2 / 16) <= b.beta <= 3 * (2 / 16)
        assert lay.rect.n_p < g.ny / 3 and lay.rect.n_q < g.nx / 2

    def test_leakage_raises(self, bank, rng):
        u = random_complex(rng, bank.grid.shape)
        with pytest.raises(SupportError):
            subsample(u, bank.angles[0].rect)

    @pytest.mark.parametrize("a", range(8))
    def test_rotation_exact(self, bank, rng, a):
        lay = bank.angles[a]
        coarse = subsample(self.component(bank, rng, a), lay.rect)
        rot = shear_rotate(coarse, lay)
        assert np.linalg.norm(rot) == pytest.approx(np.linalg.norm(coarse), rel=1e-12)
        assert rel_err(shear_unrotate(rot, lay), coarse) <= 1e-12

    def test_angle_zero_is_identity_on_modes(self, bank, rng):
        a = bank.wedges.angles.index(0.0)
        lay = bank.angles[a]
        assert np.array_equal(lay.P, lay.m) and np.array_equal(lay.Q, lay.n)

    def test_rect_contains(self):
        r = FourierRect(-2, 3, 4, 2)
        assert r.contains(-2, 3) and r.contains(1, 4) and not r.contains(2, 3)


class TestBands:
    def test_single_band_identity(self, rng):
        lay = make_band_layout(16, 1.0, 1)
        x = random_complex(rng, (16, 8))
        (band,) = band_split(lay, x)
        assert np.array_equal(band, x)

    @pytest.mark.parametrize("n_bands", [2, 3, 4])
    def test_partition_and_merge(self, rng, n_bands):
        lay = make_band_layout(48, 1.0, n_bands)
        assert np.abs((lay.windows ** 2).sum(axis=0) - 1).max() <= 1e-12
        x = random_complex(rng, (48, 6))
        bands = band_split(lay, x)
        assert sum(np.linalg.norm(b) ** 2 for b in bands) == pytest.approx(np.linalg.norm(x) ** 2, rel=1e-12)
        assert rel_err(band_merge(lay, bands), x) <= 1e-12

    def test_centers(self):
        lay = make_band_layout(40, 1.0, 2)
        for b in range(2):
            y0 = (lay.starts[b] + lay.centers[b]) * lay.dy
            assert y0 % 1.0 == pytest.approx([0.25, 0.75][b], abs=lay.dy)
            assert 0.0 in lay.y_rel(b)

    def test_overlap(self):
        lay = make_band_layout(64, 1.0, 2, overlap=0.25)
        both = np.sum((lay.windows[0] > 0) & (lay.windows[1] > 0))
        assert both > 0


class TestLocalization:
    def check(self, bank, u):
        leaves = localize(bank, u)
        assert leaves.energy() == pytest.approx(np.linalg.norm(u) ** 2, rel=1e-9)
        assert rel_err(delocalize(bank, leaves), u) <= 1e-9

    def test_tight_constant(self, bank, rng):
        self.check(bank, random_complex(rng, bank.grid.shape))

    def test_tight_variable(self, variable_bank, rng):
        self.check(variable_bank, random_complex(rng, variable_bank.grid.shape))

    def test_adjoint(self, variable_bank, rng):
        b = variable_bank
        u = random_complex(rng, b.grid.shape)
        lu = localize(b, u)
        lv = localize(b, random_complex(rng, b.grid.shape))
        # perturb v leaves so the test does not rely on tightness
        lv.low = lv.low * 1.7 + 0.1
        lv.mid = [[2.0 * m + 0.3j for m in bands] for bands in lv.mid]
        lhs = np.vdot(lv.low, lu.low) + np.vdot(lv.high, lu.high)
        lhs += sum(np.vdot(x, y) for bx, by in zip(lv.mid, lu.mid) for x, y in zip(bx, by))
        rhs = np.vdot(delocalize(b, lv), u)
        assert abs(lhs - rhs) <= 1e-11 * abs(lhs)

    def test_diagonals_use_more_bands(self, bank):
        counts = {ang: lay.bands.n_bands for ang, lay in zip(bank.wedges.angles, bank.angles)}
        assert counts[0.0] == 2 and counts[45.0] == 3
