import numpy as np
import pytest

from srhcast.alignment import AlignmentTable, align, align_population
from srhcast.errors import InvalidDistribution, NoFallback, ZeroMicroProportion
from srhcast.population import CohortKey, SrhDistribution

PRED = [0.45, 0.35, 0.1, 0.05, 0.05]
CENSUS = [0.5, 0.3, 0.1, 0.05, 0.05]
MICRO = [0.3, 0.4, 0.2, 0.08, 0.02]
# worked numeric example: (census/micro) * pred, re-normalised
GOLDEN = [0.615, 0.215, 0.041, 0.026, 0.103]


class TestAlign:
    def test_worked_example(self):
        out = align(PRED, CENSUS, MICRO).as_array()
        np.testing.assert_allclose(out, GOLDEN, atol=5e-4)

    def test_census_equals_micro_is_identity(self, rng):
        for _ in range(20):
            pred = rng.dirichlet(np.ones(5))
            ref = rng.dirichlet(np.ones(5) * 4) + 0.01
            ref /= ref.sum()
            out = align(pred, ref, ref).as_array()
            np.testing.assert_allclose(out, pred, atol=1e-12)

    def test_pred_equals_micro_returns_census(self, rng):
        # algebraic identity: (census/micro) * micro is proportional to census
        for _ in range(20):
            micro = rng.dirichlet(np.ones(5)) + 0.01
            micro /= micro.sum()
            census = rng.dirichlet(np.ones(5)) + 0.01
            census /= census.sum()
            out = align(micro, census, micro).as_array()
            np.testing.assert_allclose(out, census, atol=1e-12)

    def test_zero_micro_floored_with_warning(self):
        micro = [0.5, 0.3, 0.2, 0.0, 0.0]
        pred = [0.2, 0.2, 0.2, 0.2, 0.2]
        with pytest.warns(ZeroMicroProportion):
            out = align(pred, CENSUS, micro)
        arr = out.as_array()
        assert arr.sum() == pytest.approx(1.0)
        assert (arr >= 0).all()

    def test_zero_micro_zero_pred_is_silent(self, recwarn):
        micro = [0.5, 0.3, 0.2, 0.0, 0.0]
        pred = [0.4, 0.3, 0.3, 0.0, 0.0]
        align(pred, CENSUS, micro)
        assert not [w for w in recwarn if issubclass(w.category, ZeroMicroProportion)]

    def test_output_always_valid(self, rng):
        for _ in range(100):
            pred = rng.dirichlet(np.ones(5))
            census = rng.dirichlet(np.ones(5))
            micro = rng.dirichlet(np.ones(5)) + 1e-3
            micro /= micro.sum()
            SrhDistribution.from_array(align(pred, census, micro).as_array())

    def test_ratio_scale_invariance(self, rng):
        # scaling census and micro by the same per-component positive factors
        # leaves the output unchanged (only the ratio matters). The inputs
        # must stay distributions, so fold the scaling into both sides.
        pred = np.array(PRED)
        census = np.array(CENSUS)
        micro = np.array(MICRO)
        base = (census / micro) * pred
        base /= base.sum()
        for _ in range(10):
            scale = rng.uniform(0.5, 2.0, size=5)
            census2 = census * scale
            census2 /= census2.sum()
            micro2 = micro * scale
            micro2 /= micro2.sum()
            out = align(pred, census2, micro2).as_array()
            np.testing.assert_allclose(out, base, atol=1e-12)

    def test_idempotent_on_fixed_point(self, rng):
        # fixed points are predictions whose support sees a constant
        # census/micro ratio: equal-ratio inputs fix every prediction, and a
        # point mass is fixed under any ratios
        census = np.array(CENSUS)
        micro = np.array(MICRO)
        pred = rng.dirichlet(np.ones(5))
        same = align(pred, census, census).as_array()
        np.testing.assert_allclose(same, pred, atol=1e-12)
        point = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        np.testing.assert_allclose(align(point, census, micro).as_array(), point, atol=1e-12)

    def test_invalid_inputs_rejected(self):
        with pytest.raises(InvalidDistribution):
            align([0.5, 0.5, 0.2, -0.1, -0.1], CENSUS, MICRO)
        with pytest.raises(InvalidDistribution):
            align(PRED, [0.9, 0.1, 0.0, 0.0, 0.1], MICRO)  # sums to 1.1


def small_table():
    return AlignmentTable(
        {
            CohortKey("15-19", "F", "S"): (np.array(CENSUS), np.array(MICRO)),
            CohortKey("15-19", "F", "W"): (
                np.array([0.4, 0.3, 0.15, 0.1, 0.05]),
                np.array([0.35, 0.35, 0.15, 0.1, 0.05]),
            ),
            CohortKey("85+", "M", "R"): (
                np.array([0.2, 0.3, 0.3, 0.1, 0.1]),
                np.array([0.25, 0.3, 0.25, 0.1, 0.1]),
            ),
        }
    )


class TestAlignPopulation:
    def test_empty_population(self):
        out = align_population(np.zeros((0, 5)), [], small_table())
        assert out.shape == (0, 5)

    def test_single_cohort_matches_rowwise_align(self, rng):
        table = small_table()
        preds = rng.dirichlet(np.ones(5), size=10)
        cohorts = [CohortKey("15-19", "F", "S")] * 10
        out = align_population(preds, cohorts, table)
        for i in range(10):
            np.testing.assert_allclose(
                out[i], align(preds[i], CENSUS, MICRO).as_array(), atol=1e-12
            )

    def test_shared_prediction_linearity(self, rng):
        # when every member of a cohort shares one prediction, the mean of
        # aligned outputs equals aligning the mean prediction
        table = small_table()
        pred = rng.dirichlet(np.ones(5))
        preds = np.tile(pred, (7, 1))
        cohorts = [CohortKey("85+", "M", "R")] * 7
        out = align_population(preds, cohorts, table)
        np.testing.assert_allclose(
            out.mean(axis=0),
            align_population(pred[None, :], [CohortKey("85+", "M", "R")], table)[0],
            atol=1e-12,
        )

    def test_mixed_cohorts(self, rng):
        table = small_table()
        preds = rng.dirichlet(np.ones(5), size=4)
        cohorts = [
            CohortKey("15-19", "F", "S"),
            CohortKey("85+", "M", "R"),
            CohortKey("15-19", "F", "S"),
            CohortKey("85+", "M", "R"),
        ]
        out = align_population(preds, cohorts, table)
        for i, c in enumerate(cohorts):
            cen, mic, _ = table.lookup(c)
            np.testing.assert_allclose(out[i], align(preds[i], cen, mic).as_array(), atol=1e-12)


class TestFallbacks:
    def test_exact_hit(self):
        _, _, level = small_table().lookup(CohortKey("15-19", "F", "S"))
        assert level == "cohort"

    def test_age_sex_fallback_averages_matching_rows(self):
        table = small_table()
        cen, mic, level = table.lookup(CohortKey("15-19", "F", "UNE"))
        assert level == "age_sex"
        expect_cen = (np.array(CENSUS) + np.array([0.4, 0.3, 0.15, 0.1, 0.05])) / 2
        np.testing.assert_allclose(cen, expect_cen, atol=1e-12)

    def test_national_fallback(self):
        table = small_table()
        cen, mic, level = table.lookup(CohortKey("40-44", "M", "W"))
        assert level == "national"
        np.testing.assert_allclose(cen.sum(), 1.0, atol=1e-12)

    def test_no_fallback_on_empty_table(self):
        with pytest.raises(NoFallback):
            AlignmentTable({}).lookup(CohortKey("15-19", "F", "S"))

    def test_uncovered_cohort_uses_fallback_in_population(self, rng):
        table = small_table()
        preds = rng.dirichlet(np.ones(5), size=2)
        cohorts = [CohortKey("40-44", "M", "W"), CohortKey("15-19", "F", "S")]
        out = align_population(preds, cohorts, table)
        assert out.shape == (2, 5)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


class TestAlignmentCsv:
    def test_round_trip(self, tmp_path):
        table = small_table()
        path = tmp_path / "alignment.csv"
        table.to_csv(path)
        back = AlignmentTable.from_csv(path)
        assert set(back.entries) == set(table.entries)
        for key in table.entries:
            np.testing.assert_allclose(back.entries[key][0], table.entries[key][0], atol=1e-9)
            np.testing.assert_allclose(back.entries[key][1], table.entries[key][1], atol=1e-9)
