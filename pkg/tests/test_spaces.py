import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import folio
from folio.errors import DimensionError
from folio.spaces import snap_distances

from conftest import random_metric_space
from oracles import entropy_by_direct_sum


def equilateral(n=3):
    dist = np.ones((n, n)) - np.eye(n)
    return folio.FiniteMMSpace(tuple("abc"[:n]), dist, np.full(n, 1.0 / n), 0)


class TestValidation:
    def test_equilateral_passes(self):
        assert folio.validate_space(equilateral()).ok

    def test_triangle_violation_names_triple_and_defect(self):
        dist = np.array([[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]])
        report = folio.validate_space(
            folio.FiniteMMSpace(("a", "b", "c"), dist, np.full(3, 1 / 3), 0)
        )
        tri = [v for v in report.violations if v.axiom == "triangle_inequality"]
        assert len(tri) == 1
        assert tri[0].defect == pytest.approx(1.0)
        i, j, k = tri[0].indices
        assert {i, k} == {0, 2} and j == 1

    def test_zero_mass_flagged(self):
        dist = np.array([[0.0, 1.0], [1.0, 0.0]])
        report = folio.validate_space(
            folio.FiniteMMSpace(("a", "b"), dist, np.array([1.0, 0.0]), 0)
        )
        assert any(v.axiom == "zero_mass" and v.indices == (1,) for v in report.violations)

    def test_dimension_mismatch_is_structural(self):
        with pytest.raises(DimensionError):
            folio.FiniteMMSpace(("a",), np.zeros((2, 2)), np.array([0.5, 0.5]), 0)

    def test_asymmetry_and_diagonal(self):
        dist = np.array([[0.0, 1.0], [2.0, 0.0]])
        report = folio.validate_space(
            folio.FiniteMMSpace(("a", "b"), dist, np.array([0.5, 0.5]), 0)
        )
        assert any(v.axiom == "asymmetry" for v in report.violations)

    def test_lenient_mode_stamped(self):
        report = folio.validate_space(equilateral(), lenient=True)
        assert report.mode == "lenient" and report.ok

    def test_idempotent_and_pure(self):
        space = equilateral()
        r1 = folio.validate_space(space)
        r2 = folio.validate_space(space)
        assert r1.ok == r2.ok and r1.violations == r2.violations


class TestVG:
    def test_single_point(self):
        space = folio.FiniteMMSpace(("x",), np.zeros((1, 1)), np.array([1.0]), 0)
        assert folio.vg_integral(space, 1.0) == pytest.approx(1.0)

    def test_two_points(self):
        space = folio.path_space(2)
        expect = 0.5 * (1.0 + np.exp(-1.0))
        assert folio.vg_integral(space, 1.0) == pytest.approx(expect, abs=1e-12)

    def test_bounded_and_monotone(self, rng):
        space = random_metric_space(rng, 7)
        vals = [folio.vg_integral(space, c) for c in (0.5, 1.0, 2.0, 4.0)]
        assert all(0.0 < v <= 1.0 for v in vals)
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_rejects_nonpositive_c(self):
        with pytest.raises(ValueError):
            folio.vg_integral(equilateral(), 0.0)


class TestEntropy:
    def test_zero_at_reference(self):
        space = equilateral()
        assert folio.relative_entropy(space.weight, space) == 0.0

    def test_dirac_on_uniform(self):
        n = 5
        space = folio.cycle_space(n)
        mu = np.zeros(n)
        mu[2] = 1.0
        assert folio.relative_entropy(mu, space) == pytest.approx(np.log(n), rel=1e-12)

    def test_matches_direct_sum(self, rng):
        space = random_metric_space(rng, 9)
        mu = rng.random(9)
        mu /= mu.sum()
        assert folio.relative_entropy(mu, space) == pytest.approx(
            entropy_by_direct_sum(mu, space.weight), abs=1e-13
        )

    @given(st.integers(2, 7), st.integers(0, 10 ** 6))
    @settings(max_examples=40, deadline=None)
    def test_nonnegative_with_equality_iff_weight(self, n, seed):
        r = np.random.default_rng(seed)
        w = r.random(n) + 0.1
        w /= w.sum()
        dist = np.ones((n, n)) - np.eye(n)
        space = folio.FiniteMMSpace(tuple(f"p{i}" for i in range(n)), dist, w, 0)
        mu = r.random(n) + 1e-3
        mu /= mu.sum()
        ent = folio.relative_entropy(mu, space)
        assert ent >= -1e-12
        assert folio.relative_entropy(w, space) == pytest.approx(0.0, abs=1e-12)


class TestJson:
    def test_round_trip(self, rng, tmp_path):
        space = random_metric_space(rng, 6)
        path = tmp_path / "s.json"
        folio.dump_space(space, path)
        back = folio.load_space(path)
        assert back.labels == space.labels
        assert np.array_equal(back.dist, space.dist)
        assert np.array_equal(back.weight, space.weight)
        assert back.base == space.base
        assert back.coords["kind"] == "euclidean"

    def test_rejects_nan(self, tmp_path):
        doc = {"labels": ["a", "b"], "dist": [[0.0, float("nan")], [1.0, 0.0]],
               "weight": [0.5, 0.5], "base": 0}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc).replace("NaN", "NaN"))
        with pytest.raises(ValueError):
            folio.space_from_json(json.loads(path.read_text()))

    def test_missing_field(self):
        with pytest.raises(DimensionError):
            folio.space_from_json({"labels": ["a"], "dist": [[0.0]], "weight": [1.0]})


class TestSnap:
    @given(st.integers(3, 10), st.integers(0, 10 ** 6))
    @settings(max_examples=60, deadline=None)
    def test_snapped_triangle_exact(self, n, seed):
        r = np.random.default_rng(seed)
        pts = r.random((n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist = snap_distances(np.sqrt((diff ** 2).sum(-1)))
        worst = 0.0
        for j in range(n):
            worst = max(worst, float((dist - dist[:, [j]] - dist[[j], :]).max()))
        assert worst <= 0.0

    def test_small_perturbation(self, rng):
        pts = rng.random((8, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        raw = np.sqrt((diff ** 2).sum(-1))
        snapped = snap_distances(raw)
        assert np.abs(snapped - raw).max() <= 2.0 ** -39 * raw.max()
