"""Spatial precision structures against dense closed-form covariances."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import stcar
from stcar.factor import SparseFactor
from stcar.structures import StructureError

from conftest import constrained_cov, dense_omega, random_graphs

XI_GRID = (0.1, 0.5, 0.9)


class TestBuildStructure:
    def test_lcar_zero_is_identity(self, lattice4):
        s = stcar.build_structure("LCAR", lattice4, 0.0)
        assert_allclose(s.Q.toarray(), np.eye(16))

    def test_pcar_zero_is_degree(self, p3):
        s = stcar.build_structure("PCAR", p3, 0.0)
        assert_allclose(s.Q.toarray(), np.diag([1.0, 2.0, 1.0]))

    def test_icar_is_laplacian(self, p3):
        s = stcar.build_structure("ICAR", p3)
        assert_allclose(s.Q.toarray(), p3.laplacian().toarray())
        assert s.rank == 2

    def test_xi_domain_rejected(self, p3):
        for bad in (-0.1, 1.0, 1.5):
            for kind in ("PCAR", "LCAR", "BYM"):
                with pytest.raises(StructureError, match=r"\[0, 1\)"):
                    stcar.build_structure(kind, p3, bad)

    def test_xi_required(self, p3):
        with pytest.raises(StructureError, match="requires"):
            stcar.build_structure("LCAR", p3)

    def test_unknown_kind(self, p3):
        with pytest.raises(StructureError, match="unknown"):
            stcar.build_structure("CARX", p3, 0.5)

    def test_metadata(self, p3):
        for kind, xi, rank, block in [
            ("ICAR", None, 2, 3),
            ("PCAR", 0.5, 3, 3),
            ("LCAR", 0.5, 3, 3),
            ("BYM", 0.5, 5, 6),
        ]:
            s = stcar.build_structure(kind, p3, xi)
            assert s.rank == rank
            assert s.block_size == block
            assert s.needs_sum_zero


class TestCovarianceReconstruction:
    @pytest.mark.parametrize("kind", ["ICAR", "PCAR", "LCAR"])
    def test_inverse_matches_closed_form(self, kind):
        for g in random_graphs(4, 10, seed=10):
            for xi in XI_GRID:
                s = stcar.build_structure(kind, g, None if kind == "ICAR" else xi)
                omega_ref = dense_omega(kind, g, xi)
                Q = s.Q.toarray()
                omega = np.linalg.pinv(Q) if kind == "ICAR" else np.linalg.inv(Q)
                assert np.abs(omega - omega_ref).max() < 1e-8
                if kind == "ICAR":
                    break  # no xi dependence

    def test_bym_marginalization(self):
        # Z-block of the constrained augmented covariance equals the dense
        # convolution covariance phi * Ls^+ + (1 - phi) * I
        for g in random_graphs(4, 10, seed=11):
            n = g.n
            A = np.zeros((1, 2 * n))
            A[0, n:] = 1.0
            for xi in XI_GRID:
                s = stcar.build_structure("BYM", g, xi)
                cov = constrained_cov(s.Q.toarray(), A)
                assert np.abs(cov[:n, :n] - dense_omega("BYM", g, xi)).max() < 1e-8

    def test_bym_p3_example(self, p3):
        s = stcar.build_structure("BYM", p3, 0.5)
        A = np.zeros((1, 6))
        A[0, 3:] = 1.0
        cov = constrained_cov(s.Q.toarray(), A)
        assert np.abs(cov[:3, :3] - dense_omega("BYM", p3, 0.5)).max() < 1e-8

    def test_pcar_lcar_positive_definite(self):
        for g in random_graphs(3, 10, seed=12):
            for kind in ("PCAR", "LCAR"):
                for xi in (0.0, 0.3, 0.7, 0.99):
                    s = stcar.build_structure(kind, g, xi)
                    assert np.linalg.eigvalsh(s.Q.toarray()).min() > 0

    def test_icar_null_space(self):
        for g in random_graphs(3, 10, seed=13):
            s = stcar.build_structure("ICAR", g)
            eigs, vecs = np.linalg.eigh(s.Q.toarray())
            assert np.sum(np.abs(eigs) < 1e-9) == 1
            v0 = vecs[:, np.argmin(np.abs(eigs))]
            assert np.abs(v0 - v0.mean()).max() < 1e-8  # constant null vector

    def test_bym_limits(self, lattice4):
        g = lattice4
        # phi -> 1: scaled intrinsic covariance; phi = 0: identity
        n = g.n
        A = np.zeros((1, 2 * n))
        A[0, n:] = 1.0
        s_hi = stcar.build_structure("BYM", g, 1 - 1e-8)
        cov_hi = constrained_cov(s_hi.Q.toarray(), A)[:n, :n]
        assert np.abs(cov_hi - dense_omega("BYM", g, 1.0)).max() < 1e-5
        s_lo = stcar.build_structure("BYM", g, 0.0)
        cov_lo = constrained_cov(s_lo.Q.toarray(), A)[:n, :n]
        assert np.abs(cov_lo - np.eye(n)).max() < 1e-8


class TestCovarianceEigs:
    def test_lcar_example(self, p3):
        eigs = stcar.structure_covariance_eigs("LCAR", stcar.spectrum(p3), 0.5)
        assert_allclose(np.sort(eigs)[::-1], [2.0, 1.0, 0.5], atol=1e-12)

    def test_base_values_are_ones(self, lattice4):
        spec = stcar.spectrum(lattice4)
        assert_allclose(stcar.structure_covariance_eigs("PCAR", spec, 0.0), 1.0)
        assert_allclose(stcar.structure_covariance_eigs("BYM", spec, 0.0), 1.0)

    def test_icar_rejected(self, p3):
        with pytest.raises(StructureError, match="ICAR"):
            stcar.structure_covariance_eigs("ICAR", stcar.spectrum(p3), 0.5)

    def test_matches_dense_eigs(self):
        # eigenvalues of Omega relative to the base covariance
        for g in random_graphs(3, 8, seed=14):
            spec = stcar.spectrum(g)
            for kind in ("PCAR", "LCAR", "BYM"):
                for xi in XI_GRID:
                    rel = np.sort(stcar.structure_covariance_eigs(kind, spec, xi))
                    omega = dense_omega(kind, g, xi)
                    base = np.diag(1.0 / g.degrees) if kind == "PCAR" else np.eye(g.n)
                    ref = np.sort(np.linalg.eigvals(np.linalg.solve(base, omega)).real)
                    assert_allclose(rel, ref, atol=1e-8)


class TestLogGeneralizedDet:
    def test_worked_examples(self, p3):
        assert abs(stcar.log_generalized_det(stcar.build_structure("LCAR", p3, 0.5))) < 1e-12
        assert abs(
            stcar.log_generalized_det(stcar.build_structure("PCAR", p3, 0.0)) - np.log(2.0)
        ) < 1e-12
        assert abs(
            stcar.log_generalized_det(stcar.build_structure("ICAR", p3)) - np.log(3.0)
        ) < 1e-12

    def test_matches_dense_eigs(self):
        for g in random_graphs(4, 10, seed=15):
            for kind, xi in [("ICAR", None), ("PCAR", 0.7), ("LCAR", 0.3), ("BYM", 0.6)]:
                s = stcar.build_structure(kind, g, xi)
                eigs = np.linalg.eigvalsh(s.Q.toarray())
                ref = np.sum(np.log(np.sort(eigs)[-s.rank :]))
                assert abs(stcar.log_generalized_det(s) - ref) < 1e-8

    def test_full_rank_matches_sparse_factorization(self):
        for g in random_graphs(3, 10, seed=16):
            for kind in ("PCAR", "LCAR"):
                s = stcar.build_structure(kind, g, 0.4)
                assert abs(stcar.log_generalized_det(s) - SparseFactor(s.Q).logdet) < 1e-8
