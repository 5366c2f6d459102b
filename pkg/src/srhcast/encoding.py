"""One-hot feature encoding of individuals for the SRH regression.

Six blocks in order: age group, sex, marital status, economic status,
education, region. The reference category of each block is dropped, so an
individual matching every reference encodes to the all-zero vector. The
schema is a JSON document (block order, category order, references) so the
encoding is auditable and overridable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IneligibleIndividual, UnderageIndividual, UnmappedArea
from .geography import REGIONS, Geography
from .population import (
    ADULT_STATUSES,
    CohortBanding,
    DEFAULT_BANDING,
    EDUCATION_LEVELS,
    Individual,
    MARITAL_STATUSES,
    SEXES,
)


@dataclass(frozen=True)
class EncodingBlock:
    name: str
    categories: tuple[str, ...]
    reference: str

    def __post_init__(self):
        if self.reference not in self.categories:
            raise ValueError(f"reference {self.reference!r} not in block {self.name}")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError(f"duplicate categories in block {self.name}")


@dataclass(frozen=True)
class EncodingSchema:
    blocks: tuple[EncodingBlock, ...]
    banding: CohortBanding = DEFAULT_BANDING

    @property
    def length(self) -> int:
        return sum(len(b.categories) - 1 for b in self.blocks)

    def block_offsets(self) -> dict[str, int]:
        offsets, pos = {}, 0
        for b in self.blocks:
            offsets[b.name] = pos
            pos += len(b.categories) - 1
        return offsets

    def feature_names(self) -> tuple[str, ...]:
        names = []
        for b in self.blocks:
            names.extend(f"{b.name}={c}" for c in b.categories if c != b.reference)
        return tuple(names)

    def block(self, name: str) -> EncodingBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def to_json(self) -> str:
        doc = {
            "banding": {
                "start": self.banding.start,
                "width": self.banding.width,
                "top": self.banding.top,
            },
            "blocks": [
                {"name": b.name, "categories": list(b.categories), "reference": b.reference}
                for b in self.blocks
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EncodingSchema":
        doc = json.loads(text)
        banding = CohortBanding(**doc["banding"])
        blocks = tuple(
            EncodingBlock(b["name"], tuple(b["categories"]), b["reference"])
            for b in doc["blocks"]
        )
        return cls(blocks, banding)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EncodingSchema":
        return cls.from_json(Path(path).read_text())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def default_schema(banding: CohortBanding = DEFAULT_BANDING) -> EncodingSchema:
    """Schema with first-listed reference categories per block."""
    age_groups = banding.labels()
    return EncodingSchema(
        blocks=(
            EncodingBlock("age_group", age_groups, age_groups[0]),
            EncodingBlock("sex", SEXES, "F"),
            EncodingBlock("marital_status", MARITAL_STATUSES, "MAR"),
            EncodingBlock("economic_status", ADULT_STATUSES, "W"),
            EncodingBlock("education", EDUCATION_LEVELS[1:], "NF"),
            EncodingBlock("region", REGIONS, "Connacht/Ulster"),
        ),
        banding=banding,
    )


def _block_values(
    age: int,
    sex: str,
    marital_status: str,
    economic_status: str,
    education: str,
    region: str,
    schema: EncodingSchema,
) -> dict[str, str]:
    return {
        "age_group": schema.banding.label(age),
        "sex": sex,
        "marital_status": marital_status,
        "economic_status": economic_status,
        "education": education,
        "region": region,
    }


def encode(individual: Individual, region_map, schema: EncodingSchema) -> np.ndarray:
    """One-hot encode an eligible individual against the schema.

    `region_map` is an area_id -> region mapping (dict or Geography).
    """
    if individual.age < schema.banding.start:
        raise UnderageIndividual(f"age {individual.age}")
    if individual.economic_status == "NA":
        raise IneligibleIndividual("economic status NA cannot be encoded")
    if isinstance(region_map, Geography):
        region = region_map.region_of(individual.area_id)
    else:
        try:
            region = region_map[individual.area_id]
        except KeyError:
            raise UnmappedArea(individual.area_id) from None

    values = _block_values(
        individual.age,
        individual.sex,
        individual.marital_status,
        individual.economic_status,
        individual.education,
        region,
        schema,
    )
    vec = np.zeros(schema.length)
    pos = 0
    for block in schema.blocks:
        value = values[block.name]
        if value not in block.categories:
            raise IneligibleIndividual(
                f"{block.name} {value!r} not in schema categories {block.categories}"
            )
        if value != block.reference:
            nonref = [c for c in block.categories if c != block.reference]
            vec[pos + nonref.index(value)] = 1.0
        pos += len(block.categories) - 1
    return vec


def encode_frame(df: pd.DataFrame, regions, schema: EncodingSchema) -> np.ndarray:
    """Vectorized encoding of a frame of eligible individuals.

    Expects columns age, sex, marital_status, economic_status, education and
    either a `region` column or `regions` given as a per-row sequence.
    """
    n = len(df)
    X = np.zeros((n, schema.length))
    if regions is None:
        regions = df["region"]
    ages = df["age"].to_numpy()
    if (ages < schema.banding.start).any():
        raise UnderageIndividual("frame contains underage rows")
    band_labels = _band_labels_vec(ages, schema.banding)
    col_values = {
        "age_group": band_labels,
        "sex": df["sex"],
        "marital_status": df["marital_status"],
        "economic_status": df["economic_status"],
        "education": df["education"],
        "region": pd.Series(np.asarray(regions), index=df.index),
    }
    pos = 0
    for block in schema.blocks:
        nonref = [c for c in block.categories if c != block.reference]
        col_index = {c: i for i, c in enumerate(nonref)}
        codes = pd.Series(np.asarray(col_values[block.name]), dtype=object).map(col_index)
        valid_mask = pd.Series(np.asarray(col_values[block.name]), dtype=object).isin(
            block.categories
        )
        if not valid_mask.all():
            bad = pd.Series(np.asarray(col_values[block.name]))[~valid_mask].unique()
            raise IneligibleIndividual(f"{block.name} values {list(bad[:5])} not in schema")
        hit = codes.notna().to_numpy()
        X[np.nonzero(hit)[0], pos + codes[hit].to_numpy(int)] = 1.0
        pos += len(nonref)
    return X


def _band_labels_vec(ages: np.ndarray, banding: CohortBanding) -> np.ndarray:
    labels = np.array(banding.labels())
    idx = np.minimum(
        (ages - banding.start) // banding.width,
        len(labels) - 1,
    )
    return labels[idx]
