"""Keyed rate tables loaded from CSV.

Convention: every column except the last is a key column (names taken from
the header); the last column is the value. Lookups are vectorized via a
mixed-radix composite code over the per-field domains. Tables keyed by
`year` clamp queried years into the covered range, letting a fixed table
drive an arbitrarily long simulation.

Engine hot paths avoid per-row string work: `category_code_map` /
`int_code_map` translate the engine's integer category codes into domain
indices once, after which composite codes are pure integer arithmetic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from ..errors import MissingRate, MissingTable, RowNotStochastic

# Value semantics per shipped table name (validation only).
KIND_BY_TABLE = {
    "mortality": "probability",
    "internal_flows": "count",
    "internal_profile": "weight",
    "emigration_rate": "probability",
    "emigrant_profile": "weight",
    "immigrant_profile": "weight",
    "immigrant_dest_weights": "weight",
    "fertility": "probability",
    "separation_rate": "probability",
    "marriage_rate": "probability",
    "dropout": "probability",
    "completion_time": "count",
    "parental_transmission": "probability",
    "post_exit_status": "probability",
    "adult_returner_rate": "probability",
    "returner_profile": "weight",
    "employment_transitions": "probability",
}


def _normalize_column(series: pd.Series) -> np.ndarray:
    """Key columns become int64 where integral, str otherwise."""
    if pd.api.types.is_integer_dtype(series):
        return series.to_numpy(np.int64)
    if pd.api.types.is_float_dtype(series) and np.allclose(series.to_numpy() % 1, 0):
        return series.to_numpy(np.int64)
    return series.astype(str).to_numpy(object)


class RateTable:
    """Lookup from characteristic tuples to a probability, count or weight."""

    def __init__(self, frame: pd.DataFrame, name: str = "", kind: str | None = None):
        if frame.shape[1] < 2:
            raise ValueError("rate table needs at least one key column and a value column")
        self.name = name
        self.kind = kind if kind is not None else KIND_BY_TABLE.get(name, "weight")
        self.key_fields = tuple(str(c) for c in frame.columns[:-1])
        self.value_field = str(frame.columns[-1])

        values = frame.iloc[:, -1].to_numpy(float)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"table {name!r} has non-finite values")
        if self.kind == "probability" and len(values) and (values.min() < 0 or values.max() > 1):
            raise ValueError(f"table {name!r} probabilities outside [0, 1]")
        if self.kind in ("count", "weight") and len(values) and values.min() < 0:
            raise ValueError(f"table {name!r} has negative {self.kind}s")

        self._columns = {f: _normalize_column(frame[f]) for f in self.key_fields}
        self._domains = {}
        self._indexes = {}
        for f, col in self._columns.items():
            domain = np.array(sorted(set(col.tolist())), dtype=object)
            if len(domain) and isinstance(domain[0], (int, np.integer)):
                domain = domain.astype(np.int64)
            self._domains[f] = domain
            self._indexes[f] = {v: i for i, v in enumerate(domain.tolist())}

        strides = {}
        stride = 1
        for f in reversed(self.key_fields):
            strides[f] = stride
            stride *= max(len(self._domains[f]), 1)
        self._strides = strides

        codes = np.zeros(len(frame), dtype=np.int64)
        for f in self.key_fields:
            codes += self._encode_field(f, self._columns[f]) * strides[f]
        order = np.argsort(codes, kind="stable")
        if len(codes) and (np.diff(codes[order]) == 0).any():
            raise ValueError(f"table {name!r} has duplicate keys")
        self._codes = codes[order]
        self._values = values[order]
        self.frame = frame.iloc[order].reset_index(drop=True)

    # -- field encoding -------------------------------------------------

    def _encode_field(self, f: str, values) -> np.ndarray:
        domain = self._domains[f]
        arr = np.asarray(values)
        if arr.dtype.kind in "iu" and domain.dtype.kind in "iu":
            idx = np.searchsorted(domain, arr)
            idx_c = np.minimum(idx, len(domain) - 1)
            bad = domain[idx_c] != arr
        else:
            mapped = pd.Series(arr, dtype=object).map(self._indexes[f])
            bad = mapped.isna().to_numpy()
            idx_c = np.where(bad, 0, mapped.fillna(0).to_numpy()).astype(np.int64)
        if bad.any():
            missing = pd.unique(pd.Series(arr)[bad])[:5]
            raise MissingRate(
                f"table {self.name!r}: {f} values {list(missing)} not covered"
            )
        return idx_c.astype(np.int64)

    def domain(self, f: str) -> np.ndarray:
        return self._domains[f]

    def category_code_map(self, field: str, categories) -> np.ndarray:
        """Domain index for each category (by position); -1 where missing."""
        index = self._indexes[field]
        return np.array([index.get(c, -1) for c in categories], dtype=np.int64)

    def int_code_map(self, field: str, lo: int, hi: int) -> np.ndarray:
        """Domain index for each integer in lo..hi; -1 where missing."""
        index = self._indexes[field]
        return np.array([index.get(v, -1) for v in range(lo, hi + 1)], dtype=np.int64)

    def stride(self, field: str) -> int:
        return self._strides[field]

    def lookup_codes(self, codes: np.ndarray) -> np.ndarray:
        """Values for precomputed composite codes; MissingRate on any miss."""
        pos = np.searchsorted(self._codes, codes)
        pos_c = np.minimum(pos, max(len(self._codes) - 1, 0))
        bad = (codes < 0) | (self._codes[pos_c] != codes) if len(self._codes) else np.ones(len(codes), bool)
        if np.any(bad):
            raise MissingRate(
                f"table {self.name!r}: no entry for {int(np.sum(bad))} of {len(codes)} keys"
            )
        return self._values[pos_c]

    # -- generic lookups ----------------------------------------------------

    def lookup(self, **keys) -> np.ndarray:
        """Vectorized lookup; scalar keys broadcast. Raises MissingRate."""
        unknown = set(keys) - set(self.key_fields)
        if unknown:
            raise ValueError(f"table {self.name!r} has no key fields {sorted(unknown)}")
        missing_fields = set(self.key_fields) - set(keys)
        if missing_fields:
            raise ValueError(f"table {self.name!r} lookup missing fields {sorted(missing_fields)}")

        n = 1
        for v in keys.values():
            if np.size(v) > 1:
                n = max(n, np.size(v))
        codes = np.zeros(n, dtype=np.int64)
        for f in self.key_fields:
            arr = np.asarray(keys[f])
            if arr.ndim == 0:
                arr = arr.reshape(1)
            if arr.size == 1 and n > 1:
                arr = np.repeat(arr, n)
            if f == "year":
                dom = self._domains[f]
                arr = np.clip(arr.astype(np.int64), int(dom.min()), int(dom.max()))
            codes += self._encode_field(f, arr) * self._strides[f]
        return self.lookup_codes(codes)

    def get(self, *key_values) -> float:
        """Scalar lookup with positional keys in key-field order."""
        if len(key_values) != len(self.key_fields):
            raise ValueError(
                f"table {self.name!r} expects keys {self.key_fields}, got {key_values}"
            )
        return float(self.lookup(**dict(zip(self.key_fields, key_values)))[0])

    @property
    def scalar(self) -> float:
        """Value of a single-row table (e.g. a national rate)."""
        if len(self._values) != 1:
            raise ValueError(f"table {self.name!r} is not a single-value table")
        return float(self._values[0])

    @classmethod
    def from_csv(cls, path, name: str | None = None, kind: str | None = None) -> "RateTable":
        path = Path(path)
        # the literal "NA" is a real category value, never a missing marker
        frame = pd.read_csv(path, keep_default_na=False, na_values=[""])
        return cls(frame, name=name or path.stem, kind=kind)

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False, float_format="%.12g")

    def as_transition(self) -> "TransitionTable":
        return TransitionTable(self)


class TransitionTable:
    """Stochastic rows: the last key column is the outcome, rows sum to 1."""

    def __init__(self, table: RateTable):
        if len(table.key_fields) < 1:
            raise ValueError("transition table needs an outcome column")
        self.table = table
        self.context_fields = table.key_fields[:-1]
        self.outcome_field = table.key_fields[-1]
        self.outcomes = table.domain(self.outcome_field)

        df = table.frame
        if self.context_fields:
            pivot = df.pivot_table(
                index=list(self.context_fields),
                columns=self.outcome_field,
                values=table.value_field,
                fill_value=0.0,
                aggfunc="sum",
            ).reindex(columns=list(self.outcomes), fill_value=0.0)
            ctx_frame = pivot.index.to_frame(index=False)
            matrix = pivot.to_numpy(float)
        else:
            matrix = df.set_index(self.outcome_field)[table.value_field].reindex(
                list(self.outcomes), fill_value=0.0
            ).to_numpy(float)[None, :]
            ctx_frame = pd.DataFrame({"_any": [0]})
        sums = matrix.sum(axis=1)
        bad = np.abs(sums - 1.0) > 1e-9
        if bad.any():
            raise RowNotStochastic(
                f"table {table.name!r}: {int(bad.sum())} rows do not sum to 1"
                f" (first bad sum {sums[bad][0]!r})"
            )
        self._matrix = matrix
        self._cum = np.cumsum(matrix, axis=1)
        ctx_frame = ctx_frame.copy()
        ctx_frame["_row"] = np.arange(len(matrix), dtype=np.int64)
        self.rows_table = RateTable(ctx_frame, name=f"{table.name}/contexts", kind="count")

    def row_indices(self, **context) -> np.ndarray:
        return self.rows_table.lookup(**context).astype(np.int64)

    def row_probabilities(self, **context) -> np.ndarray:
        return self._matrix[self.row_indices(**context)]

    def sample_indices_from_rows(self, rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Outcome positions (into `self.outcomes`) for each context row."""
        cum = self._cum[rows]
        u = rng.random(len(rows))
        idx = (cum < u[:, None]).sum(axis=1)
        return np.minimum(idx, len(self.outcomes) - 1)

    def sample_from_rows(self, rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.outcomes[self.sample_indices_from_rows(rows, rng)]

    def sample(self, rng: np.random.Generator, **context) -> np.ndarray:
        """One outcome per context row, drawn by inverse CDF."""
        return self.sample_from_rows(self.row_indices(**context), rng)


def load_tables(paths: dict, base_dir=None) -> dict[str, RateTable]:
    """Load the named rate tables; raises MissingTable on unreadable paths."""
    tables = {}
    for name, rel in paths.items():
        p = Path(rel)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        if not p.exists():
            raise MissingTable(f"{name}: {p}")
        tables[name] = RateTable.from_csv(p, name=name)
    return tables


def require(tables: dict, name: str) -> RateTable:
    try:
        return tables[name]
    except KeyError:
        raise MissingTable(name) from None
