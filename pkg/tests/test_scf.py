import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from prhf.errors import PreconditionError, RankError
from prhf.grid import Grid3
from prhf.operators import HFOperator
from prhf.scf import (ScfConfig, canonicalize, eigen_residuals, guess_block, hf_energy, initial_guess,
                      lowest_eigenpairs, orthonormalize, picard_residual, picard_step, solve)
from prhf.state import OrbitalSet, Physics

from conftest import ALPHA, random_field_values

HE = Physics(ALPHA, 2.0, 2)
H1 = Physics(ALPHA, 1.0, 1)


def _state(grid, stack, physics=HE):
    return OrbitalSet.from_stack(grid, np.asarray(stack), np.zeros(len(stack)), physics)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(mode="newton"), dict(mixing=0.0), dict(mixing=1.5),
                                    dict(tol_residual=0.0), dict(max_iter=0), dict(krylov_dim=3),
                                    dict(preconditioner="jacobi")])
    def test_rejects(self, kw):
        with pytest.raises(PreconditionError):
            ScfConfig(**kw).validate(2)

    def test_block_size(self):
        assert ScfConfig().block_size(2) == 4
        assert ScfConfig(krylov_dim=7).block_size(2) == 7


class TestGuess:
    def test_deterministic(self, small_grid):
        a = initial_guess(small_grid, HE, seed=3).stack()
        b = initial_guess(small_grid, HE, seed=3).stack()
        assert np.array_equal(a, b)

    def test_orthonormal_and_sorted(self, small_grid):
        w, vecs = guess_block(small_grid, HE, 4)
        assert np.all(np.diff(w) >= 0)
        st = _state(small_grid, vecs, Physics(ALPHA, 2.0, 4))
        assert st.gram_deviation() < 1e-10

    def test_too_many_orbitals(self):
        g = Grid3(8, 4.0)
        with pytest.raises(PreconditionError):
            guess_block(g, HE, 8**3 + 1)


class TestOrthonormalize:
    def test_lowdin_two_by_two(self, small_grid):
        # two unit vectors with overlap s: Lowdin gives the symmetric combinations
        w = small_grid.cell_volume
        e1 = np.zeros(small_grid.shape, complex)
        e2 = np.zeros(small_grid.shape, complex)
        e1.flat[0] = 1 / np.sqrt(w)
        e2.flat[1] = 1 / np.sqrt(w)
        s = 0.6
        a, b = e1, s * e1 + np.sqrt(1 - s * s) * e2
        out = orthonormalize(_state(small_grid, [a, b])).stack()
        S = np.array([[1, s], [s, 1]])
        ev, U = np.linalg.eigh(S)
        M = U @ np.diag(ev**-0.5) @ U.T
        expected = M[0, 0] * a + M[1, 0] * b
        assert_allclose(out[0], expected, atol=1e-12)
        assert _state(small_grid, out).gram_deviation() < 1e-12

    def test_idempotent(self, small_grid, rng):
        st = orthonormalize(_state(small_grid, [random_field_values(rng, small_grid) for _ in range(3)],
                                   Physics(ALPHA, 2.0, 3)))
        assert_allclose(orthonormalize(st).stack(), st.stack(), atol=1e-12)

    def test_rank_error_names_orbital(self, small_grid, rng):
        a = random_field_values(rng, small_grid)
        b = random_field_values(rng, small_grid)
        with pytest.raises(RankError) as info:
            orthonormalize(_state(small_grid, [a, b, a + 2 * b], Physics(ALPHA, 2.0, 3)))
        assert info.value.index == 2

    def test_empty(self, small_grid):
        st = OrbitalSet((), [], HE, small_grid)
        assert len(orthonormalize(st)) == 0


class TestPicard:
    def test_theta_zero_is_identity(self, helium_small):
        state, _ = helium_small
        assert picard_step(state, theta=0.0) is state

    def test_fixed_point_of_converged_state(self, helium_small):
        state, _ = helium_small
        assert picard_residual(state).max() < 1e-6
        stepped = picard_step(state, theta=0.5)
        assert np.abs(np.abs(stepped.gram()) - np.eye(2)).max() < 1e-10
        # still spans the same space
        P = state.stack().reshape(2, -1)
        Q = stepped.stack().reshape(2, -1)
        ov = (P.conj() @ Q.T) * state.grid.cell_volume
        assert_allclose(np.linalg.svd(ov, compute_uv=False), [1, 1], atol=1e-6)


class TestEigen:
    def test_lowest_pairs_are_eigenvectors(self, helium_small):
        state, _ = helium_small
        vals, vecs, res = lowest_eigenpairs(state, 3, tol=1e-8)
        assert_allclose(vals[:2], state.epsilons, atol=1e-6 * ALPHA)
        op = HFOperator.from_state(state)
        w = state.grid.cell_volume
        for v, lam in zip(vecs, vals):
            r = op.apply(v) - lam * v
            assert np.sqrt(np.sum(np.abs(r) ** 2) * w) < 1e-6

    def test_canonicalize_diagonalizes(self, helium_small):
        state, _ = helium_small
        # rotate by a unitary, then undo it
        c, s = np.cos(0.4), np.sin(0.4)
        U = np.array([[c, -s], [s, c]]) * np.exp(0.3j)
        rotated = _state(state.grid, np.tensordot(U, state.stack(), axes=1))
        back, _ = canonicalize(rotated)
        assert_allclose(back.epsilons, state.epsilons, atol=1e-10)
        assert eigen_residuals(back).max() < 1e-6


class TestSolve:
    def test_helium_contract(self, helium_small):
        state, report = helium_small
        assert report.converged
        assert report.max_residual <= 1e-7
        assert state.gram_deviation() < 1e-10
        assert report.energy >= -state.physics.N / ALPHA
        assert np.all(state.epsilons < 0)
        assert abs(report.energy_history[-1] - report.energy) == 0.0
        assert report.gauge_shift < 0

    def test_one_electron_energy_identity(self):
        # no self-interaction for N = 1, so E = eps / alpha
        g = Grid3(24, 12.0)
        state, report = solve(g, H1, ScfConfig(tol_residual=1e-7))
        assert report.converged
        assert report.energy == pytest.approx(state.epsilons_hartree[0], rel=1e-10)
        assert hf_energy(state) == pytest.approx(report.energy, rel=1e-12)

    def test_refuses_supercritical(self, small_grid):
        with pytest.warns(RuntimeWarning):
            ph = Physics(ALPHA, 0.7 / ALPHA, 1)
        assert ph.flags == ("supercritical_coupling",)
        with pytest.raises(PreconditionError):
            solve(small_grid, ph)

    def test_force_runs_and_flags(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ph = Physics(ALPHA, 0.7 / ALPHA, 1)
        _, report = solve(Grid3(8, 4.0), ph, ScfConfig(force=True, max_iter=2))
        assert "supercritical_coupling" in report.flags

    def test_deterministic(self):
        g = Grid3(16, 8.0)
        cfg = ScfConfig(max_iter=4)
        a, ra = solve(g, HE, cfg)
        b, rb = solve(g, HE, cfg)
        assert ra.energy_history == rb.energy_history
        assert np.array_equal(a.stack(), b.stack())

    def test_fixed_point_mode_agrees(self, helium_small):
        state, report = helium_small
        cfg = ScfConfig(mode="fixed_point", anderson=True, tol_residual=1e-7, max_iter=300)
        fp_state, fp = solve(state.grid, HE, cfg)
        assert fp.converged
        assert fp.energy == pytest.approx(report.energy, abs=1e-6)

    def test_existing_guess_is_used(self, helium_small):
        state, report = helium_small
        _, again = solve(state.grid, HE, ScfConfig(tol_residual=1e-7), guess=state)
        assert again.iterations <= 2
