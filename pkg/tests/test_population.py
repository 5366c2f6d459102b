import numpy as np
import pytest

from srhcast.errors import (
    IneligibleIndividual,
    InvalidDistribution,
    UnderageIndividual,
    UnknownStatusLabel,
)
from srhcast.population import (
    ADULT_STATUSES,
    CohortBanding,
    CohortKey,
    Individual,
    SrhDistribution,
    cohort_of,
    frame_to_individuals,
    individuals_to_frame,
    map_economic_status,
    mean_srh,
    read_population_csv,
    srh_code,
    write_population_csv,
)


def make_individual(**overrides):
    base = dict(
        id=1,
        age=30,
        sex="F",
        marital_status="SGL",
        citizenship="IE",
        moved_last_year=False,
        education="US",
        economic_status="W",
        area_id="A0001",
    )
    base.update(overrides)
    return Individual(**base)


class TestIndividual:
    def test_valid(self):
        ind = make_individual()
        assert ind.age == 30

    def test_age_bounds(self):
        with pytest.raises(ValueError):
            make_individual(age=106)
        with pytest.raises(ValueError):
            make_individual(age=-1)
        make_individual(age=0, economic_status="NA", education="NA")
        make_individual(age=105)

    def test_child_status_na_or_student(self):
        make_individual(age=10, economic_status="NA", education="NA")
        make_individual(age=10, economic_status="S", education="NA", graduation_year=2026)
        with pytest.raises(ValueError):
            make_individual(age=10, economic_status="W", education="NA")

    def test_graduation_only_for_students(self):
        with pytest.raises(ValueError):
            make_individual(graduation_year=2030)
        make_individual(economic_status="S", graduation_year=2030)

    def test_unknown_categories(self):
        with pytest.raises(ValueError):
            make_individual(sex="X")
        with pytest.raises(ValueError):
            make_individual(education="BSc")


class TestSrhDistribution:
    def test_valid(self):
        d = SrhDistribution.from_array([0.5, 0.3, 0.1, 0.05, 0.05])
        assert d.as_array().sum() == pytest.approx(1.0)

    def test_negative_rejected(self):
        with pytest.raises(InvalidDistribution):
            SrhDistribution.from_array([0.6, 0.5, 0.0, 0.0, -0.1])

    def test_sum_tolerance(self):
        SrhDistribution.from_array([0.2, 0.2, 0.2, 0.2, 0.2 + 5e-10])
        with pytest.raises(InvalidDistribution):
            SrhDistribution.from_array([0.2, 0.2, 0.2, 0.2, 0.21])

    def test_wrong_length(self):
        with pytest.raises(InvalidDistribution):
            SrhDistribution.from_array([0.5, 0.5])

    def test_from_counts(self):
        d = SrhDistribution.from_counts([1, 1, 0, 0, 0])
        assert d.proportions[0] == pytest.approx(0.5)


class TestMeanSrh:
    def test_degenerate_very_good(self):
        assert mean_srh([1, 0, 0, 0, 0]) == 0.0

    def test_uniform_symmetry(self):
        assert mean_srh([0.2] * 5) == pytest.approx(2.0)

    def test_hand_dot_product(self):
        # 0*0.5 + 1*0.3 + 2*0.1 + 3*0.05 + 4*0.05 = 0.85
        assert mean_srh([0.5, 0.3, 0.1, 0.05, 0.05]) == pytest.approx(0.85)

    def test_invalid_rejected(self):
        with pytest.raises(InvalidDistribution):
            mean_srh([0.5, 0.5, 0.5, -0.25, -0.25])

    def test_monotone_under_mass_shift(self, rng):
        # moving mass from category k to k+1 strictly increases the mean
        for _ in range(50):
            p = rng.dirichlet(np.ones(5))
            k = rng.integers(0, 4)
            if p[k] < 1e-9:
                continue
            shift = p[k] * rng.uniform(0.1, 1.0)
            q = p.copy()
            q[k] -= shift
            q[k + 1] += shift
            assert mean_srh(q) > mean_srh(p)


class TestCohorts:
    def test_band_lower_edge(self):
        ind = make_individual(age=15, economic_status="S", education="LS")
        assert cohort_of(ind) == CohortKey("15-19", "F", "S")

    def test_band_upper_edge(self):
        ind = make_individual(age=19, economic_status="S", education="LS")
        assert cohort_of(ind).age_group == "15-19"

    def test_open_ended_band(self):
        ind = make_individual(age=104, sex="M", economic_status="R")
        assert cohort_of(ind) == CohortKey("85+", "M", "R")

    def test_underage(self):
        ind = make_individual(age=10, economic_status="S", education="NA")
        with pytest.raises(UnderageIndividual):
            cohort_of(ind)

    def test_na_status_rejected(self):
        ind = make_individual(age=30, economic_status="NA")
        with pytest.raises(IneligibleIndividual):
            cohort_of(ind)

    def test_partition_unique(self, rng):
        # every eligible individual maps to exactly one cohort cell
        banding = CohortBanding()
        labels = set(banding.labels())
        for _ in range(200):
            age = int(rng.integers(15, 106))
            status = ADULT_STATUSES[rng.integers(0, len(ADULT_STATUSES))]
            sex = "F" if rng.random() < 0.5 else "M"
            key = cohort_of(make_individual(age=age, sex=sex, economic_status=status,
                                            education="US"))
            assert key.age_group in labels
            lo = 85 if key.age_group == "85+" else int(key.age_group.split("-")[0])
            hi = 105 if key.age_group == "85+" else int(key.age_group.split("-")[1])
            assert lo <= age <= hi

    def test_custom_banding(self):
        banding = CohortBanding(start=15, width=10, top=75)
        assert banding.label(74) == "65-74"
        assert banding.label(75) == "75+"
        assert banding.labels()[0] == "15-24"

    def test_bad_banding(self):
        with pytest.raises(ValueError):
            CohortBanding(start=15, width=5, top=87)


class TestEconomicStatusMapping:
    def test_unemployment_variants(self):
        assert map_economic_status("Unemployed having lost or given up previous job") == "UNE"
        assert map_economic_status("Unemployed looking for first regular job") == "UNE"

    def test_working_variants(self):
        assert map_economic_status("Assisting relative") == "W"
        assert map_economic_status("Employee") == "W"
        assert map_economic_status("Employer or own account worker") == "W"

    def test_other_rows(self):
        assert map_economic_status("Retired") == "R"
        assert map_economic_status("Student or pupil") == "S"
        assert map_economic_status("Looking after home/family") == "LAHF"
        assert (
            map_economic_status("Unable to work due to permanent sickness or disability")
            == "UTWSD"
        )
        assert map_economic_status("Other") == "OTH"

    def test_whitespace_and_case(self):
        assert map_economic_status("  retired ") == "R"

    def test_unknown(self):
        with pytest.raises(UnknownStatusLabel):
            map_economic_status("Gainfully idle")


class TestSrhCode:
    def test_labels(self):
        assert srh_code("Very Good") == 0
        assert srh_code("very bad") == 4

    def test_ints(self):
        assert srh_code(3) == 3
        with pytest.raises(ValueError):
            srh_code(5)


class TestPopulationCsv:
    def test_round_trip(self, tmp_path):
        people = [
            make_individual(id=1, economic_status="S", education="LS", graduation_year=2026),
            make_individual(id=2, age=3, economic_status="NA", education="NA"),
            make_individual(id=3, sex="M", marital_status="MAR", spouse_id=4),
            make_individual(id=4, marital_status="MAR", spouse_id=3),
        ]
        path = tmp_path / "pop.csv"
        write_population_csv(people, path)
        back = read_population_csv(path)
        assert back == people

    def test_frame_columns(self):
        df = individuals_to_frame([make_individual()])
        assert list(df.columns) == [
            "id", "age", "sex", "marital_status", "citizenship", "moved_last_year",
            "education", "economic_status", "area_id", "spouse_id", "graduation_year",
        ]

    def test_missing_column_rejected(self):
        df = individuals_to_frame([make_individual()]).drop(columns=["sex"])
        with pytest.raises(ValueError):
            frame_to_individuals(df)
