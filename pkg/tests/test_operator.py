import math

import numpy as np
import pytest

from specedge import field, lattice, operator
from specedge.field import PotentialField
from specedge.operator import (
    assemble,
    dense_top_eigs,
    lanczos_top_eigs,
    localization_center,
    rank_one_deform,
    top_eigs,
)


def _zero_field(domain):
    return PotentialField.from_values(domain, np.zeros(len(domain)))


class TestAssemble:
    def test_single_site_d1(self):
        dom = lattice.LatticeDomain(1, [(0,)])
        fld = PotentialField.from_values(dom, [5.0])
        H = assemble(dom, fld)
        assert np.allclose(H.matrix.toarray(), [[3.0]])

    def test_pair_d1(self):
        dom = lattice.integer_box((0,), (1,))
        H = assemble(dom, _zero_field(dom))
        assert np.allclose(H.matrix.toarray(), [[-2.0, 1.0], [1.0, -2.0]])

    def test_single_site_d2(self):
        dom = lattice.LatticeDomain(2, [(0, 0)])
        H = assemble(dom, _zero_field(dom))
        assert np.allclose(H.matrix.toarray(), [[-4.0]])

    def test_symmetry_and_degrees(self):
        dom = lattice.integer_box((0, 0), (3, 3))
        spec = field.TailSpec(rho=1.0)
        fld = field.sample(dom, spec, 0)
        A = assemble(dom, fld).matrix.toarray()
        assert np.array_equal(A, A.T)
        off = A - np.diag(np.diag(A))
        assert set(np.unique(off)) <= {0.0, 1.0}
        degrees = off.sum(axis=1)
        assert degrees.max() <= 2 * dom.dim

    def test_mismatch_rejected(self):
        dom = lattice.integer_box((0,), (3,))
        other = lattice.integer_box((0,), (4,))
        with pytest.raises(ValueError, match="match"):
            assemble(dom, _zero_field(other))


class TestTopEigs:
    def test_pair_full_spectrum(self):
        dom = lattice.integer_box((0,), (1,))
        res = top_eigs(assemble(dom, _zero_field(dom)), 2)
        assert res.eigenvalues == pytest.approx([-1.0, -3.0])

    def test_path3_principal(self):
        dom = lattice.integer_box((0,), (2,))
        res = top_eigs(assemble(dom, _zero_field(dom)), 1)
        assert res.eigenvalues[0] == pytest.approx(-2.0 + math.sqrt(2.0), abs=1e-12)

    def test_path_closed_form_all(self):
        n = 12
        dom = lattice.integer_box((0,), (n - 1,))
        res = top_eigs(assemble(dom, _zero_field(dom)), n)
        expected = sorted(
            (-2.0 + 2.0 * math.cos(j * math.pi / (n + 1)) for j in range(1, n + 1)),
            reverse=True,
        )
        assert res.eigenvalues == pytest.approx(expected, abs=1e-12)

    def test_k_bounds(self):
        dom = lattice.integer_box((0,), (4,))
        H = assemble(dom, _zero_field(dom))
        with pytest.raises(ValueError):
            top_eigs(H, 0)
        with pytest.raises(ValueError):
            top_eigs(H, 6)

    def test_residuals_and_norms(self):
        dom = lattice.integer_box((0, 0), (7, 7))
        fld = field.sample(dom, field.TailSpec(rho=1.0), 3)
        res = top_eigs(assemble(dom, fld), 5)
        assert np.all(res.residuals <= res.tol_abs)
        assert np.linalg.norm(res.vectors, axis=0) == pytest.approx(np.ones(5), abs=1e-10)
        assert np.all(np.diff(res.eigenvalues) <= 1e-12)

    def test_shift_covariance(self):
        dom = lattice.integer_box((0,), (29,))
        fld = field.sample(dom, field.TailSpec(rho=2.0), 9)
        res = top_eigs(assemble(dom, fld), 4)
        shifted = top_eigs(assemble(dom, fld.shifted(1.75)), 4)
        assert shifted.eigenvalues == pytest.approx(res.eigenvalues + 1.75, abs=1e-9)
        for i in range(4):
            dot = abs(float(res.vectors[:, i] @ shifted.vectors[:, i]))
            assert dot == pytest.approx(1.0, abs=1e-9)

    def test_domain_monotonicity_brute_force(self):
        # U subset of D implies lambda_k(U) <= lambda_k(D) for all k <= |U|
        rng = np.random.default_rng(4)
        for trial in range(30):
            d = int(rng.integers(1, 3))
            if d == 1:
                dom = lattice.integer_box((0,), (int(rng.integers(4, 13)) - 1,))
            else:
                dom = lattice.integer_box((0, 0), (2, int(rng.integers(2, 5)) - 1))
            fld = PotentialField.from_values(dom, rng.normal(scale=3.0, size=len(dom)))
            lam_d = operator.dense_eigenvalues(assemble(dom, fld))
            size_u = int(rng.integers(1, len(dom)))
            picks = rng.choice(len(dom), size=size_u, replace=False)
            U = lattice.LatticeDomain(d, [dom.sites[p] for p in picks])
            lam_u = operator.dense_eigenvalues(assemble(U, fld.restrict(U)))
            assert np.all(lam_u <= lam_d[: len(U)] + 1e-10)


class TestLocalizationCenter:
    def test_plain_argmax(self):
        dom = lattice.integer_box((0,), (1,))
        assert localization_center(dom, np.array([0.6, 0.8])) == (1,)

    def test_tie_lexicographic(self):
        dom = lattice.integer_box((0,), (1,))
        v = 1.0 / math.sqrt(2.0)
        assert localization_center(dom, np.array([v, v])) == (0,)

    def test_absolute_value(self):
        dom = lattice.integer_box((0,), (2,))
        assert localization_center(dom, np.array([0.0, -1.0, 0.0])) == (1,)

    def test_zero_vector_rejected(self):
        dom = lattice.integer_box((0,), (2,))
        with pytest.raises(ValueError):
            localization_center(dom, np.zeros(3))


class TestRankOneDeform:
    def test_zero_shift_identity(self):
        dom = lattice.integer_box((0,), (5,))
        fld = field.sample(dom, field.TailSpec(rho=1.0), 2)
        H = assemble(dom, fld)
        H0 = rank_one_deform(H, lattice.integer_box((0,), (2,)), 0.0)
        assert np.allclose(H.matrix.toarray(), H0.matrix.toarray())

    def test_diagonal_shift(self):
        dom = lattice.integer_box((0,), (1,))
        H = assemble(dom, _zero_field(dom))
        Hs = rank_one_deform(H, lattice.LatticeDomain(1, [(0,)]), 10.0)
        assert np.diag(Hs.matrix.toarray()) == pytest.approx([-2.0, -12.0])

    def test_u_not_subset_rejected(self):
        dom = lattice.integer_box((0,), (3,))
        H = assemble(dom, _zero_field(dom))
        with pytest.raises(ValueError):
            rank_one_deform(H, lattice.integer_box((2,), (5,)), 1.0)

    def test_limit_is_subdomain_eigenvalue(self):
        # s -> infinity recovers the Dirichlet eigenvalue on U
        dom = lattice.integer_box((0,), (1,))
        H = assemble(dom, _zero_field(dom))
        Hs = rank_one_deform(H, lattice.LatticeDomain(1, [(0,)]), 1e6)
        lam = top_eigs(Hs, 1).eigenvalues[0]
        assert abs(lam - (-2.0)) < 1e-5

    def test_monotone_lipschitz_in_s(self):
        dom = lattice.integer_box((0,), (9,))
        fld = field.sample(dom, field.TailSpec(rho=1.0), 5)
        H = assemble(dom, fld)
        U = lattice.integer_box((3,), (6,))
        s_grid = [0.0, 0.5, 1.0, 2.0, 4.0]
        spectra = [
            operator.dense_eigenvalues(rank_one_deform(H, U, s)) for s in s_grid
        ]
        for (s1, lam1), (s2, lam2) in zip(
            zip(s_grid, spectra), zip(s_grid[1:], spectra[1:])
        ):
            diff = lam1[: len(U)] - lam2[: len(U)]
            assert np.all(diff >= -1e-12)
            assert np.all(diff <= (s2 - s1) + 1e-12)


class TestLanczos:
    def test_agrees_with_dense_random_d2(self):
        # acceptance-grade cross-check at smaller count lives in test_acceptance
        dom = lattice.integer_box((0, 0), (29, 29))
        spec = field.TailSpec(rho=1.0)
        for seed in range(3):
            fld = field.sample(dom, spec, seed)
            H = assemble(dom, fld)
            dense_vals, _ = dense_top_eigs(H, 5)
            tol_abs = 1e-10 * H.inf_norm()
            lan_vals, lan_vecs = lanczos_top_eigs(H, 5, tol_abs)
            assert lan_vals == pytest.approx(dense_vals, abs=1e-8)

    def test_small_matrix_exact(self):
        dom = lattice.integer_box((0,), (7,))
        H = assemble(dom, _zero_field(dom))
        vals, vecs = lanczos_top_eigs(H, 3, 1e-10 * H.inf_norm())
        dense_vals, _ = dense_top_eigs(H, 3)
        assert vals == pytest.approx(dense_vals, abs=1e-10)

    def test_nonconvergence_raises(self):
        dom = lattice.integer_box((0, 0), (19, 19))
        fld = field.sample(dom, field.TailSpec(rho=1.0), 1)
        H = assemble(dom, fld)
        with pytest.raises(operator.ConvergenceError) as err:
            lanczos_top_eigs(H, 4, 1e-16, max_dim=8)
        assert err.value.best_residual is not None

    def test_routing_above_dense_limit_d2(self):
        # 46 x 46 = 2116 sites exceeds the dense threshold, so top_eigs runs
        # the Lanczos path end to end; the residual contract still holds
        dom = lattice.integer_box((0, 0), (45, 45))
        assert len(dom) > operator.DENSE_LIMIT
        fld = field.sample(dom, field.TailSpec(rho=2.0), 3)
        H = assemble(dom, fld)
        res = top_eigs(H, 3)
        assert np.all(res.residuals <= res.tol_abs)
        dense_vals, _ = dense_top_eigs(H, 3)
        assert res.eigenvalues == pytest.approx(dense_vals, abs=1e-8)


class TestSpectralResult:
    def test_json_shape(self):
        dom = lattice.integer_box((0,), (4,))
        fld = field.sample(dom, field.TailSpec(rho=1.0), 0)
        res = top_eigs(assemble(dom, fld), 2)
        obj = res.to_json()
        assert set(obj) == {"eigenvalues", "centers", "residuals"}
        obj_v = res.to_json(include_vectors=True)
        assert len(obj_v["vectors"]) == 2

    def test_center_sign_convention(self):
        # stored eigenvectors are positive at their localization center
        dom = lattice.integer_box((0,), (30,))
        fld = field.sample(dom, field.TailSpec(rho=2.0), 11)
        res = top_eigs(assemble(dom, fld), 3)
        for i, c in enumerate(res.centers):
            assert res.vectors[dom.rank(c), i] > 0
