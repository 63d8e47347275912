import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import special

from prhf.grid import Field, Grid3, Space, forward_dft, lp_norm, sample
from prhf.operators import (HFOperator, apply_direct, apply_energy, apply_exchange, apply_hf,
                            apply_inverse_energy, apply_kinetic, coulomb_attraction, energy_symbol,
                            hartree_potential, inverse_radius, kinetic_symbol, pair_potential,
                            periodic_gauge_shift, poisson_solve)
from prhf.state import OrbitalSet, Physics

from conftest import ALPHA, random_field_values

HE = Physics(ALPHA, 2.0, 2)


def gaussian(grid, a=1.0, centre=(0.0, 0.0, 0.0)):
    return sample(grid, lambda d: np.exp(-a * (d[0] ** 2 + d[1] ** 2 + d[2] ** 2)), centre)


class TestSymbols:
    def test_kinetic_zero_at_origin_and_positive(self, small_grid):
        T = kinetic_symbol(small_grid, ALPHA)
        assert T[0, 0, 0] == 0.0
        assert np.all(T[small_grid.p2 > 0] > 0)

    def test_no_cancellation_at_small_momentum(self):
        # direct evaluation loses every digit here; Taylor gives alpha p^2 / 2
        g = Grid3(8, 1e6)
        T = kinetic_symbol(g, ALPHA)
        p2 = g.p2[0, 0, 1]
        assert T[0, 0, 1] == pytest.approx(0.5 * ALPHA * p2 * (1 - ALPHA**2 * p2 / 4), rel=1e-12)

    def test_small_alpha_limit(self, small_grid):
        # T(p) / alpha -> p^2 / 2 as alpha -> 0
        for a in (1e-2, 1e-4):
            T = kinetic_symbol(small_grid, a) / a
            mask = small_grid.p2 > 0
            assert_allclose(T[mask], 0.5 * small_grid.p2[mask], rtol=a * a * small_grid.p2.max())

    def test_plane_wave_eigenvalue(self, small_grid):
        p0 = np.array([2, 0, -1]) * small_grid.freq_spacing
        f = sample(small_grid, lambda d: np.exp(1j * (p0[0] * d[0] + p0[2] * d[2])))
        Tf = apply_kinetic(f, HE).values
        p2 = float(p0 @ p0)
        expected = math.sqrt(p2 + ALPHA**-2) - 1 / ALPHA
        assert_allclose(Tf, expected * f.values, rtol=1e-6, atol=1e-12)

    def test_inverse_energy_bound(self, small_grid, rng):
        assert energy_symbol(small_grid, ALPHA).min() == pytest.approx(1 / ALPHA)
        f = Field(small_grid, random_field_values(rng, small_grid))
        g = apply_inverse_energy(f, HE)
        assert lp_norm(g) <= ALPHA * lp_norm(f) * (1 + 1e-12)
        # inverse of apply_energy
        assert_allclose(apply_energy(g, HE).values, f.values, atol=1e-12)

    def test_multiplier_keeps_space(self, small_grid, rng):
        f = Field(small_grid, random_field_values(rng, small_grid))
        F = forward_dft(f)
        TF = apply_kinetic(F, HE)
        assert TF.space is Space.FOURIER
        assert_allclose(TF.to_real().values, apply_kinetic(f, HE).values, atol=1e-12)


class TestNuclear:
    def test_singular_cell(self, small_grid):
        inv = inverse_radius(small_grid)
        h = small_grid.spacing
        r_cell = (3 / (4 * math.pi)) ** (1 / 3) * h
        assert inv[small_grid.index_of((0, 0, 0))] == pytest.approx(1.5 / r_cell)
        # the ball average of 1/r over radius r_cell
        avg = 3 / (4 * math.pi * r_cell**3) * 4 * math.pi * r_cell**2 / 2
        assert 1.5 / r_cell == pytest.approx(avg)

    def test_integral_over_ball(self):
        # int_{|x|<rho} Z alpha / |x| dx = 2 pi Z alpha rho^2
        g = Grid3(64, 8.0)
        V = coulomb_attraction(g, HE).values
        rho = 3.0
        total = float(np.sum(V[g.radius < rho].real)) * g.cell_volume
        assert total == pytest.approx(2 * math.pi * HE.Z * HE.alpha * rho**2, rel=0.02)


class TestPoisson:
    def test_plane_wave(self, small_grid):
        p0 = np.array([1, 2, 0]) * small_grid.freq_spacing
        rho = np.cos(p0[0] * small_grid.coords()[0] + p0[1] * small_grid.coords()[1]) * np.ones(small_grid.shape)
        U = poisson_solve(small_grid, rho).real
        assert_allclose(U, 4 * math.pi / float(p0 @ p0) * rho, atol=1e-12)

    def test_gaussian_density_gives_erf_potential(self):
        g = Grid3(64, 16.0)
        a = 2.0
        rho = (a / math.pi) ** 1.5 * gaussian(g, a).values.real
        U = hartree_potential(Field(g, rho)).values.real
        r = g.radius
        ref = np.where(r > 0, special.erf(math.sqrt(a) * r) / np.where(r > 0, r, 1), 2 * math.sqrt(a / math.pi))
        core = r < 3.0
        # the neutralising background adds 2 pi r^2 / (3V) plus a constant near the centre
        diff = (U - ref - 2 * math.pi * r**2 / (3 * g.volume))[core]
        assert np.ptp(diff) < 5e-4
        m2 = 1.5 / a
        assert np.median(diff) == pytest.approx(periodic_gauge_shift(g, 1.0, m2, 1.0, 0.0), abs=1e-4)

    def test_zero_mean_gauge(self, small_grid, rng):
        rho = random_field_values(rng, small_grid).real
        U = poisson_solve(small_grid, rho)
        assert abs(U.mean()) < 1e-12

    def test_complex_density_rejected(self, small_grid):
        with pytest.raises(ValueError):
            hartree_potential(Field(small_grid, 1j * np.ones(small_grid.shape)))

    def test_pair_potential_residual(self, small_grid, rng):
        a = Field(small_grid, random_field_values(rng, small_grid))
        b = Field(small_grid, random_field_values(rng, small_grid))
        U = pair_potential(a, b, (0, 1))
        assert U.poisson_residual(a, b) < 1e-12
        assert U.sup_norm() > 0

    def test_pair_symmetry(self, small_grid, rng):
        a = Field(small_grid, random_field_values(rng, small_grid))
        b = Field(small_grid, random_field_values(rng, small_grid))
        assert_allclose(pair_potential(a, b).field.values, np.conj(pair_potential(b, a).field.values),
                        atol=1e-12)


def _orthonormal_state(grid, rng, count=2):
    from prhf.scf import orthonormalize

    stack = np.stack([random_field_values(rng, grid) for _ in range(count)])
    return orthonormalize(OrbitalSet.from_stack(grid, stack, np.zeros(count), HE))


class TestHFOperator:
    def test_parity_of_even_function(self):
        g = Grid3(16, 8.0)
        f = gaussian(g, 0.5)
        state = OrbitalSet.from_stack(g, f.values[None] / lp_norm(f), [0.0], Physics(ALPHA, 2.0, 1))
        out = apply_hf(state, f).values
        # x -> -x on the grid maps index i to (n - i) mod n relative to the origin at n/2
        flipped = np.roll(out[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
        assert_allclose(out, flipped, atol=1e-12 * np.abs(out).max())

    def test_self_exchange_equals_direct(self, small_grid, rng):
        state = _orthonormal_state(small_grid, rng, 1)
        phi = state.orbitals[0]
        assert_allclose(apply_exchange(state, phi).values, apply_direct(state, phi).values, atol=1e-12)

    def test_hermitian(self, small_grid, rng):
        state = _orthonormal_state(small_grid, rng)
        op = HFOperator.from_state(state)
        for _ in range(5):
            u = random_field_values(rng, small_grid)
            v = random_field_values(rng, small_grid)
            lhs = op.quadratic_form(u, v)
            rhs = np.conj(op.quadratic_form(v, u))
            assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    def test_exchange_is_positive(self, small_grid, rng):
        state = _orthonormal_state(small_grid, rng)
        op = HFOperator.from_state(state)
        w = small_grid.cell_volume
        for _ in range(5):
            u = random_field_values(rng, small_grid)
            assert np.real(np.vdot(u, op.exchange(u))) * w >= -1e-12

    def test_rayleigh_quotient_above_rest_energy(self, helium_small, rng):
        state, _ = helium_small
        op = HFOperator.from_state(state)
        g = state.grid
        for _ in range(20):
            u = random_field_values(rng, g)
            q = op.quadratic_form(u).real / (np.vdot(u, u).real * g.cell_volume)
            assert q >= -1.0 / ALPHA

    def test_field_api_matches_operator(self, small_grid, rng):
        state = _orthonormal_state(small_grid, rng)
        u = Field(small_grid, random_field_values(rng, small_grid))
        op = HFOperator.from_state(state)
        assert_allclose(apply_hf(state, u).values, op.apply(u.values), atol=1e-12)

    def test_grid_mismatch(self, small_grid, rng):
        state = _orthonormal_state(small_grid, rng)
        with pytest.raises(ValueError):
            apply_hf(state, Field.zeros(Grid3(8, 8.0)))


class TestGaugeShift:
    def test_point_charges(self):
        g = Grid3(8, 10.0)
        assert periodic_gauge_shift(g, 1.0, 0.0, 1.0, 0.0) == pytest.approx(-2.837297479480620 / 10.0)

    def test_against_grid_interaction(self):
        # two unit Gaussians: periodic minus free-space pair energy
        g = Grid3(64, 16.0)
        a = 3.0
        rho = (a / math.pi) ** 1.5 * gaussian(g, a).values.real
        U = hartree_potential(Field(g, rho)).values.real
        periodic = float(np.sum(rho * U)) * g.cell_volume
        free = math.sqrt(2 * a / math.pi)  # self-energy of two Gaussians with exponent a
        m2 = 1.5 / a
        shift = periodic_gauge_shift(g, 1.0, m2, 1.0, m2)
        assert periodic - free == pytest.approx(shift, abs=1e-4)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 5.0), st.floats(0.0, 10.0), st.floats(0.1, 5.0), st.floats(0.0, 10.0))
    def test_symmetric(self, qa, ma, qb, mb):
        g = Grid3(8, 12.0)
        assert periodic_gauge_shift(g, qa, ma, qb, mb) == pytest.approx(periodic_gauge_shift(g, qb, mb, qa, ma))
