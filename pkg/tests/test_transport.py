import numpy as np
import pytest

import folio
from folio.errors import ConvergenceError, UnbalancedMarginalsError, UnsupportedGeometryError

from conftest import random_metric_space
from oracles import ot_cost_by_vertex_enumeration


def dirac(n, i):
    out = np.zeros(n)
    out[i] = 1.0
    return out


class TestExactSolver:
    def test_dirac_to_dirac(self, rng):
        space = random_metric_space(rng, 6)
        plan = folio.solve_ot(space, dirac(6, 1), dirac(6, 4), 2.0)
        assert plan.pi[1, 4] == pytest.approx(1.0)
        assert plan.distance == pytest.approx(space.dist[1, 4], rel=1e-12)

    def test_two_point_family(self):
        space = folio.path_space(2)
        mu = np.array([1.0, 0.0])
        nu = np.array([0.5, 0.5])
        assert folio.wasserstein(space, mu, nu, 2.0) == pytest.approx(np.sqrt(0.5), abs=1e-12)
        assert folio.wasserstein(space, mu, nu, 1.0) == pytest.approx(0.5, abs=1e-13)

    def test_matches_vertex_enumeration(self, rng):
        for _ in range(25):
            m = int(rng.integers(2, 5))
            n = int(rng.integers(2, 5))
            space = random_metric_space(rng, m + n)
            mu = np.zeros(m + n)
            nu = np.zeros(m + n)
            mu[:m] = rng.random(m) + 0.05
            nu[m:] = rng.random(n) + 0.05
            mu /= mu.sum()
            nu /= nu.sum()
            p = float(rng.choice([1.0, 2.0]))
            plan = folio.solve_ot(space, mu, nu, p)
            oracle = ot_cost_by_vertex_enumeration(
                space.dist[:m, m:] ** p, mu[:m], nu[m:]
            )
            assert plan.cost == pytest.approx(oracle, abs=1e-12)

    def test_marginals_exact(self, rng):
        space = random_metric_space(rng, 30)
        mu = rng.random(30); mu /= mu.sum()
        nu = rng.random(30); nu /= nu.sum()
        plan = folio.solve_ot(space, mu, nu, 2.0)
        assert plan.marginal_residual <= 1e-12
        assert plan.pi.min() >= 0.0
        assert plan.cost == pytest.approx(float((plan.pi * space.dist ** 2).sum()), abs=1e-10)

    def test_permutation_equivariance(self, rng):
        space = random_metric_space(rng, 8)
        mu = rng.random(8); mu /= mu.sum()
        nu = rng.random(8); nu /= nu.sum()
        perm = rng.permutation(8)
        shuffled = folio.FiniteMMSpace(
            tuple(space.labels[i] for i in perm),
            space.dist[np.ix_(perm, perm)], space.weight[perm], 0,
        )
        c1 = folio.solve_ot(space, mu, nu, 2.0).cost
        c2 = folio.solve_ot(shuffled, mu[perm], nu[perm], 2.0).cost
        assert c1 == pytest.approx(c2, abs=1e-12)

    def test_w_metric_properties(self, rng):
        space = random_metric_space(rng, 7)
        measures = []
        for _ in range(3):
            v = rng.random(7) + 1e-2
            measures.append(v / v.sum())
        for p in (1.0, 2.0):
            a, b, c = (folio.wasserstein(space, x, y, p)
                       for x, y in [(measures[0], measures[1]),
                                    (measures[1], measures[2]),
                                    (measures[0], measures[2])])
            assert c <= a + b + 1e-9
            assert folio.wasserstein(space, measures[0], measures[0], p) == pytest.approx(0.0, abs=1e-12)
            ab = folio.wasserstein(space, measures[1], measures[0], p)
            assert ab == pytest.approx(a, rel=1e-10)

    def test_unbalanced_rejected(self, rng):
        space = random_metric_space(rng, 4)
        with pytest.raises(UnbalancedMarginalsError):
            folio.solve_ot(space, np.array([0.5, 0.5, 0.0, 0.0]),
                           np.array([0.25, 0.25, 0.25, 0.1]), 2.0)


class TestSinkhorn:
    def test_identity_measures_cost_vanishes(self, rng):
        space = random_metric_space(rng, 12)
        mu = rng.random(12); mu /= mu.sum()
        plan = folio.sinkhorn(space, mu, mu, 2.0, epsilon=1e-3)
        assert plan.cost <= 1e-2 * space.diameter

    def test_two_point_matches_exact(self):
        space = folio.path_space(2)
        mu = np.array([1.0, 0.0]); nu = np.array([0.5, 0.5])
        plan = folio.sinkhorn(space, mu, nu, 2.0, epsilon=1e-4)
        assert abs(plan.cost - 0.5) <= 1e-3

    def test_marginal_residual_within_tol(self, rng):
        space = random_metric_space(rng, 50)
        mu = rng.random(50); mu /= mu.sum()
        nu = rng.random(50); nu /= nu.sum()
        plan = folio.sinkhorn(space, mu, nu, 2.0, epsilon=5e-2, tol=1e-9)
        assert plan.marginal_residual <= 1e-9
        assert plan.kind == "entropic" and plan.epsilon == 5e-2

    def test_never_beats_exact(self, rng):
        space = random_metric_space(rng, 10)
        mu = rng.random(10); mu /= mu.sum()
        nu = rng.random(10); nu /= nu.sum()
        exact = folio.solve_ot(space, mu, nu, 2.0).cost
        ent = folio.sinkhorn(space, mu, nu, 2.0, epsilon=1e-2).cost
        assert ent >= exact - 1e-12

    def test_convergence_error_carries_residual(self, rng):
        space = random_metric_space(rng, 20)
        mu = rng.random(20); mu /= mu.sum()
        nu = rng.random(20); nu /= nu.sum()
        with pytest.raises(ConvergenceError) as err:
            folio.sinkhorn(space, mu, nu, 2.0, epsilon=1e-3, max_iter=2, tol=1e-12)
        assert err.value.residual is not None and err.value.residual > 1e-12

    def test_rejects_bad_epsilon(self, rng):
        space = random_metric_space(rng, 4)
        u = np.full(4, 0.25)
        with pytest.raises(ValueError):
            folio.sinkhorn(space, u, u, 2.0, epsilon=0.0)


class TestPushforward:
    def test_identity(self, rng):
        mu = rng.random(6); mu /= mu.sum()
        assert np.allclose(folio.pushforward(np.arange(6), mu), mu)

    def test_all_to_one(self, rng):
        mu = rng.random(6); mu /= mu.sum()
        out = folio.pushforward(np.zeros(6, dtype=int), mu, 1)
        assert out.shape == (1,) and out[0] == pytest.approx(1.0)

    def test_contraction_on_product(self, small_product, rng):
        Y, Z, space, part = small_product
        ny = Y.n_points
        for p in (1.0, 2.0, 3.0):
            mu = rng.random(space.n_points); mu /= mu.sum()
            nu = rng.random(space.n_points); nu /= nu.sum()
            up = folio.wasserstein(space, mu, nu, p)
            down = folio.wasserstein(Y, folio.pushforward(part, mu, ny),
                                     folio.pushforward(part, nu, ny), p)
            assert down <= up + 1e-9


class TestDisplacement1D:
    def test_endpoints_exact(self, rng):
        space = folio.path_space(40, step=0.05)
        mu0 = rng.random(40); mu0 /= mu0.sum()
        mu1 = rng.random(40); mu1 /= mu1.sum()
        assert np.array_equal(folio.displacement_interpolate_1d(space, mu0, mu1, 0.0), mu0)
        assert np.array_equal(folio.displacement_interpolate_1d(space, mu0, mu1, 1.0), mu1)

    def test_two_diracs_even_gap(self):
        space = folio.path_space(9)
        mid = folio.displacement_interpolate_1d(space, dirac(9, 1), dirac(9, 5), 0.5)
        assert mid[3] == pytest.approx(1.0)

    def test_two_diracs_odd_gap_splits_neighbors(self):
        space = folio.path_space(6)
        mid = folio.displacement_interpolate_1d(space, dirac(6, 0), dirac(6, 3), 0.5)
        assert mid[1] + mid[2] == pytest.approx(1.0)
        assert mid[1] == pytest.approx(0.5) and mid[2] == pytest.approx(0.5)

    def test_geodesic_property_against_exact_solver(self, rng):
        space = folio.path_space(60, step=1.0 / 59)
        h = 1.0 / 59
        f0 = np.exp(-((np.arange(60) / 59 - 0.3) / 0.12) ** 2) + 0.05
        f1 = np.exp(-((np.arange(60) / 59 - 0.7) / 0.10) ** 2) + 0.05
        mu0 = f0 / f0.sum()
        mu1 = f1 / f1.sum()
        w = folio.wasserstein(space, mu0, mu1, 2.0)
        for t in (0.25, 0.5, 0.75):
            mut = folio.displacement_interpolate_1d(space, mu0, mu1, t)
            wt = folio.wasserstein(space, mu0, mut, 2.0)
            assert abs(wt - t * w) <= h

    def test_needs_interval_coords(self, rng):
        space = random_metric_space(rng, 5)
        u = np.full(5, 0.2)
        with pytest.raises(UnsupportedGeometryError):
            folio.displacement_interpolate_1d(space, u, u, 0.5)

    def test_quantile_distance_matches_solver(self, rng):
        space = folio.path_space(25, step=0.2)
        for p in (1.0, 2.0, 3.0):
            mu0 = rng.random(25); mu0 /= mu0.sum()
            mu1 = rng.random(25); mu1 /= mu1.sum()
            assert folio.wasserstein_1d(space, mu0, mu1, p) == pytest.approx(
                folio.wasserstein(space, mu0, mu1, p), abs=1e-10
            )


class TestPlanSupport:
    def test_dirac_plan_trivially_realizes(self, rng):
        space = folio.path_space(4)
        bundle = folio.build_quotient(space, np.arange(4))
        plan = folio.solve_ot(space, dirac(4, 0), dirac(4, 2), 2.0)
        report = folio.check_plan_realizes_quotient(plan, space, bundle, 0, 2, 1e-9)
        assert report.ok and report.worst_defect <= 1e-12

    def test_product_fibers_realize_quotient(self, certified_bundle):
        bundle = certified_bundle
        plan = folio.solve_ot(bundle.total, bundle.fibers[0], bundle.fibers[3], 2.0)
        report = folio.check_plan_realizes_quotient(plan, bundle.total, bundle, 0, 3, 1e-9)
        assert report.ok

    def test_broken_partition_detected(self, rng):
        space = random_metric_space(rng, 8)
        part = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        bundle = folio.build_quotient(space, part)
        plan = folio.solve_ot(space, bundle.fibers[0], bundle.fibers[1], 2.0)
        report = folio.check_plan_realizes_quotient(plan, space, bundle, 0, 1, 1e-9)
        assert not report.ok and report.worst_defect > 0

    def test_wrong_marginals_rejected(self, certified_bundle):
        bundle = certified_bundle
        n = bundle.total.n_points
        plan = folio.solve_ot(bundle.total, np.full(n, 1.0 / n), np.full(n, 1.0 / n), 2.0)
        with pytest.raises(UnbalancedMarginalsError):
            folio.check_plan_realizes_quotient(plan, bundle.total, bundle, 0, 1, 1e-9)
