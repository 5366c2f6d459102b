import numpy as np
import pandas as pd
import pytest

from srhcast.encoding import EncodingSchema, default_schema, encode, encode_frame
from srhcast.errors import IneligibleIndividual, UnderageIndividual, UnmappedArea
from srhcast.geography import REGIONS
from srhcast.population import Individual

REGION_MAP = {"A0001": "Connacht/Ulster", "A0002": "Dublin", "A0003": "Leinster Rest"}


def person(**overrides):
    base = dict(
        id=1,
        age=15,
        sex="F",
        marital_status="MAR",
        citizenship="IE",
        moved_last_year=False,
        education="NF",
        economic_status="W",
        area_id="A0001",
    )
    base.update(overrides)
    return Individual(**base)


def hand_encode(individual, region, schema):
    """Independent table-walk encoder: scan the schema JSON block by block."""
    import json

    doc = json.loads(schema.to_json())
    values = {
        "sex": individual.sex,
        "marital_status": individual.marital_status,
        "economic_status": individual.economic_status,
        "education": individual.education,
        "region": region,
    }
    banding = doc["banding"]
    if individual.age >= banding["top"]:
        values["age_group"] = f"{banding['top']}+"
    else:
        lo = banding["start"] + (
            (individual.age - banding["start"]) // banding["width"]
        ) * banding["width"]
        values["age_group"] = f"{lo}-{lo + banding['width'] - 1}"
    vec = []
    for block in doc["blocks"]:
        for cat in block["categories"]:
            if cat == block["reference"]:
                continue
            vec.append(1.0 if values[block["name"]] == cat else 0.0)
    return np.array(vec)


class TestSchema:
    def test_layout(self):
        schema = default_schema()
        # 15 age bands, 2 sexes, 4 marital, 7 statuses, 9 education, 4 regions
        assert schema.length == 14 + 1 + 3 + 6 + 8 + 3
        names = schema.feature_names()
        assert len(names) == schema.length
        assert "sex=M" in names and "sex=F" not in names

    def test_json_round_trip(self, tmp_path):
        schema = default_schema()
        path = tmp_path / "schema.json"
        schema.save(path)
        loaded = EncodingSchema.load(path)
        assert loaded == schema
        assert loaded.fingerprint() == schema.fingerprint()

    def test_reference_must_be_category(self):
        from srhcast.encoding import EncodingBlock

        with pytest.raises(ValueError):
            EncodingBlock("sex", ("F", "M"), "X")


class TestEncode:
    def test_all_reference_categories_give_zero_vector(self):
        schema = default_schema()
        vec = encode(person(), REGION_MAP, schema)
        assert vec.shape == (schema.length,)
        assert not vec.any()

    def test_sex_differs_only_in_sex_block(self):
        schema = default_schema()
        a = encode(person(), REGION_MAP, schema)
        b = encode(person(sex="M"), REGION_MAP, schema)
        diff = np.nonzero(a != b)[0]
        assert list(diff) == [schema.feature_names().index("sex=M")]

    def test_fifteen_year_old_student_in_dublin_table_walk(self):
        # independent hand-built encoder over the schema table
        schema = default_schema()
        ind = person(age=15, economic_status="S", education="LS", area_id="A0002")
        vec = encode(ind, REGION_MAP, schema)
        oracle = hand_encode(ind, "Dublin", schema)
        np.testing.assert_array_equal(vec, oracle)
        assert vec.sum() == 3  # student, LS education, Dublin (age band is reference)

    def test_random_individuals_match_table_walk(self, rng):
        schema = default_schema()
        regions = list(REGIONS)
        for _ in range(50):
            ind = person(
                age=int(rng.integers(15, 106)),
                sex=("F", "M")[rng.integers(2)],
                marital_status=("MAR", "SGL", "SEP", "WID")[rng.integers(4)],
                economic_status=("W", "S", "LAHF", "R", "UTWSD", "OTH", "UNE")[rng.integers(7)],
                education=("NF", "P", "LS", "US", "PLC", "HC", "DEG", "PD", "D")[rng.integers(9)],
                area_id="A0001",
            )
            region = regions[rng.integers(4)]
            vec = encode(ind, {"A0001": region}, schema)
            np.testing.assert_array_equal(vec, hand_encode(ind, region, schema))

    def test_one_hot_block_structure(self, rng):
        schema = default_schema()
        offsets = schema.block_offsets()
        ind = person(age=40, sex="M", marital_status="WID", economic_status="UNE",
                     education="D", area_id="A0003")
        vec = encode(ind, REGION_MAP, schema)
        for block in schema.blocks:
            width = len(block.categories) - 1
            chunk = vec[offsets[block.name] : offsets[block.name] + width]
            assert chunk.sum() <= 1

    def test_underage(self):
        with pytest.raises(UnderageIndividual):
            encode(person(age=12, economic_status="NA", education="NA"), REGION_MAP, default_schema())

    def test_unmapped_area(self):
        with pytest.raises(UnmappedArea):
            encode(person(area_id="A9999"), REGION_MAP, default_schema())

    def test_na_status(self):
        ind = person(age=20, economic_status="NA")
        with pytest.raises(IneligibleIndividual):
            encode(ind, REGION_MAP, default_schema())

    def test_injective_on_distinct_profiles(self, rng):
        schema = default_schema()
        seen = {}
        for _ in range(100):
            ind = person(
                age=int(rng.integers(15, 106)),
                sex=("F", "M")[rng.integers(2)],
                marital_status=("MAR", "SGL", "SEP", "WID")[rng.integers(4)],
                economic_status=("W", "S", "LAHF", "R", "UTWSD", "OTH", "UNE")[rng.integers(7)],
                education=("NF", "P", "LS", "US", "PLC", "HC", "DEG", "PD", "D")[rng.integers(9)],
            )
            region = REGIONS[rng.integers(4)]
            key = (
                default_schema().banding.label(ind.age),
                ind.sex, ind.marital_status, ind.economic_status, ind.education, region,
            )
            vec = tuple(encode(ind, {"A0001": region}, schema))
            if vec in seen:
                assert seen[vec] == key
            seen[vec] = key


class TestEncodeFrame:
    def test_matches_single_encode(self, rng):
        schema = default_schema()
        rows = []
        vecs = []
        for i in range(30):
            ind = person(
                id=i,
                age=int(rng.integers(15, 106)),
                sex=("F", "M")[rng.integers(2)],
                economic_status=("W", "S", "R")[rng.integers(3)],
                education=("NF", "US", "DEG")[rng.integers(3)],
            )
            region = REGIONS[rng.integers(4)]
            rows.append(
                dict(age=ind.age, sex=ind.sex, marital_status=ind.marital_status,
                     economic_status=ind.economic_status, education=ind.education,
                     region=region)
            )
            vecs.append(encode(ind, {"A0001": region}, schema))
        df = pd.DataFrame(rows)
        X = encode_frame(df, df["region"], schema)
        np.testing.assert_array_equal(X, np.array(vecs))

    def test_underage_frame(self):
        schema = default_schema()
        df = pd.DataFrame([dict(age=10, sex="F", marital_status="SGL",
                                economic_status="S", education="NA", region="Dublin")])
        with pytest.raises(UnderageIndividual):
            encode_frame(df, df["region"], schema)

    def test_unknown_category_rejected(self):
        schema = default_schema()
        df = pd.DataFrame([dict(age=30, sex="F", marital_status="SGL",
                                economic_status="W", education="US", region="Atlantis")])
        with pytest.raises(IneligibleIndividual):
            encode_frame(df, df["region"], schema)
