import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prhf.errors import PreconditionError, ResolutionError
from prhf.grid import Field, Grid3, sample
from prhf.verify.localization import (build_localization, canonical_chain, ell_one_expansion,
                                      localization_identity_check, mollified_ball, random_chain)
from prhf.verify.multiindex import MultiIndex, compositions

X0 = (1.5, 0.0, 0.0)


@pytest.fixture(scope="module")
def grid():
    return Grid3(32, 8.0)


@pytest.fixture(scope="module")
def g_field(grid):
    return sample(grid, lambda d: np.exp(-(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)), X0)


class TestMollifiedBall:
    def test_plateau_support_and_volume(self):
        g = Grid3(64, 8.0)
        a, w = 1.5, 0.4
        v, grad = mollified_ball(g, (0, 0, 0), a, w)
        r = g.radius
        assert np.all(v[r <= a - w] == 1.0)
        assert np.all(v[r >= a + w] == 0.0)
        assert v.min() >= 0 and v.max() <= 1
        # convolution preserves volume: integral of M_a equals the ball volume
        assert np.sum(v) * g.cell_volume == pytest.approx(4 / 3 * np.pi * a**3, rel=1e-3)
        assert np.all(grad[r <= a - w] == 0.0)
        assert grad.max() > 0

    def test_radial_profile_monotone(self):
        g = Grid3(64, 8.0)
        v, _ = mollified_ball(g, (0, 0, 0), 1.5, 0.4)
        line = v[32, 32, 32:]
        assert np.all(np.diff(line) <= 1e-14)


class TestFamily:
    @pytest.mark.parametrize("j", [0, 1, 3])
    def test_invariants(self, j):
        g = Grid3(96, 8.0)
        eps = 1.0 / (2 * (j + 1))
        fam = build_localization(j, eps, X0, 1.0, grid=g, check_resolution=False)
        inv = fam.invariants(C_star=10.0)
        assert all(inv.values()), [k for k, ok in inv.items() if not ok]
        assert len(fam.chi) == len(fam.eta) == j + 1
        assert fam.C_star_measured > 0

    def test_resolution_error(self, grid):
        with pytest.raises(ResolutionError):
            build_localization(2, 1 / 6, X0, 1.0, grid=grid)

    @pytest.mark.parametrize("kw", [dict(j=-1, epsilon=0.1), dict(j=2, epsilon=0.2), dict(j=0, epsilon=0.0)])
    def test_preconditions(self, grid, kw):
        with pytest.raises(PreconditionError):
            build_localization(kw["j"], kw["epsilon"], X0, 1.0, grid=grid, check_resolution=False)

    def test_ball_must_fit(self, grid):
        with pytest.raises(PreconditionError):
            build_localization(0, 0.5, (3.5, 0, 0), 1.0, grid=grid, check_resolution=False)

    def test_needs_grid(self):
        with pytest.raises(PreconditionError):
            build_localization(0, 0.5, X0, 1.0)


class TestChains:
    def test_canonical(self):
        assert canonical_chain((1, 2, 0), 3) == [(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 2, 0)]
        assert canonical_chain((0, 0, 2), 0) == [(0, 0, 0)]

    def test_random_is_valid_and_seeded(self):
        s = MultiIndex(2, 1, 2)
        for seed in range(20):
            c = random_chain(s, 4, seed)
            assert c == random_chain(s, 4, seed)
            assert all(c[k].leq(c[k + 1]) and c[k + 1].order == k + 1 for k in range(4))
            assert c[-1].leq(s)

    def test_bad_ell(self):
        with pytest.raises(PreconditionError):
            canonical_chain((1, 0, 0), 2)


class TestIdentity:
    @pytest.mark.parametrize("j", [1, 2, 3])
    def test_all_sigma_and_ell(self, grid, g_field, j):
        fam = build_localization(j, 1.0 / (2 * (j + 1)), X0, 1.0, grid=grid, check_resolution=False)
        for s in compositions(j):
            for ell in range(j + 1):
                for chain in (canonical_chain(s, ell), random_chain(s, ell, seed=7 * ell)):
                    res = localization_identity_check(g_field, s, ell, fam, chain)
                    assert res.residual <= 1e-8
                    assert res.lhs_norm > 0

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_random_fields(self, seed):
        grid = Grid3(16, 8.0)
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        fam = build_localization(2, 1 / 6, X0, 1.0, grid=grid, check_resolution=False)
        res = localization_identity_check(Field(grid, u), (1, 0, 1), 2, fam, random_chain((1, 0, 1), 2, seed))
        assert res.residual <= 1e-8

    def test_leibniz_form_converges_under_refinement(self, g_field):
        # the pointwise commutator form only holds where the cutoffs are resolved
        errs = []
        for n in (32, 64):
            g = Grid3(n, 8.0)
            f = sample(g, lambda d: np.exp(-(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)), X0)
            fam = build_localization(1, 0.25, X0, 1.0, mollifier_width_factor=1.0, grid=g, check_resolution=False)
            errs.append(localization_identity_check(f, (1, 0, 0), 1, fam).leibniz_residual)
        assert errs[1] < errs[0]

    def test_order_mismatch(self, grid, g_field):
        fam = build_localization(1, 0.25, X0, 1.0, grid=grid, check_resolution=False)
        with pytest.raises(PreconditionError):
            localization_identity_check(g_field, (1, 1, 0), 1, fam)
        with pytest.raises(PreconditionError):
            localization_identity_check(g_field, (1, 0, 0), 1, fam, [(0, 0, 0), (0, 1, 0)])

    def test_ell_one_expansion(self, grid, g_field):
        from prhf.verify.localization import _D

        fam = build_localization(2, 1 / 6, X0, 1.0, grid=grid, check_resolution=False)
        u = g_field.values
        lhs = _D(u, MultiIndex(1, 1, 0), grid)
        rhs = ell_one_expansion(g_field, (1, 1, 0), fam, (0, 1, 0))
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)
