"""Transaction ingestion: long/wide parsing, alternative and choice-set coding,
rare-set filtering and the canonical :class:`TransactionDataset`.

Long format has one row per (transaction id, exposed alternative) with a 0/1
response column.  Wide format has one row per transaction with the chosen
alternative's code, a pipe-delimited choice set (``"1|5|8"``), a choice-set
code and one ``<asv>_<code>`` column per alternative and ASV.  Placeholder
values in wide ASV columns for alternatives outside the row's choice set are
ignored; availability is read from the choice set alone.
"""

from __future__ import annotations

import io
import json
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_name_list, check_columns, check_min_obs
from .exceptions import (
    ChoiceSetParseError,
    CompletenessError,
    ConsistencyError,
    DataValidationError,
    DomainError,
    DuplicateError,
    EmptyDatasetError,
    SchemaError,
)
from .likelihood import Design

DATASET_FORMAT = "censored-logit/dataset"
FORMAT_VERSION = 1


def _byte_key(label: str) -> bytes:
    return label.encode("utf-8")


@dataclass(frozen=True)
class AlternativeCatalog:
    """Bijection between alternative labels and integer codes ``1..J``.

    ``labels[j - 1]`` is the label of code ``j``.  Use :meth:`from_labels` to
    assign codes in byte-wise lexicographic order of the labels.
    """

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise DataValidationError("catalog needs at least one alternative")
        if any(lab == "" for lab in labels):
            raise DataValidationError("alternative labels must be non-empty")
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise DuplicateError(f"duplicate alternative labels: {dup}")

    @classmethod
    def from_labels(cls, labels) -> "AlternativeCatalog":
        return cls(tuple(sorted(set(map(str, labels)), key=_byte_key)))

    def __len__(self):
        return len(self.labels)

    @property
    def codes(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.labels) + 1))

    @property
    def entries(self) -> list[tuple[int, str]]:
        return list(zip(self.codes, self.labels))

    @cached_property
    def _index(self) -> dict[str, int]:
        return {lab: i + 1 for i, lab in enumerate(self.labels)}

    def code_of(self, label: str) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise ConsistencyError(f"unknown alternative label {label!r}") from None

    def label_of(self, code: int) -> str:
        if not 1 <= code <= len(self.labels):
            raise DomainError(f"alternative code {code} outside 1..{len(self.labels)}")
        return self.labels[code - 1]

    def to_frame(self, label_name: str = "Label") -> pd.DataFrame:
        return pd.DataFrame({"Alts_Code": self.codes, label_name: self.labels})


def format_codes(codes: Sequence[int]) -> str:
    return "|".join(str(c) for c in codes)


def parse_choice_set(text) -> tuple[int, ...]:
    """Decode ``"1|5|8"`` into ``(1, 5, 8)``.

    Tokens must be positive integers without repeats; order in the input is
    not significant.
    """
    text = str(text).strip()
    codes = []
    for token in text.split("|"):
        tok = token.strip()
        if not tok.isdigit() or int(tok) < 1:
            raise ChoiceSetParseError(
                f"malformed choice set {text!r}: bad token {token!r}")
        codes.append(int(tok))
    if len(set(codes)) != len(codes):
        raise ChoiceSetParseError(f"malformed choice set {text!r}: repeated code")
    return tuple(sorted(codes))


@dataclass(frozen=True)
class ChoiceSet:
    codes: tuple[int, ...]
    set_code: int
    observation_count: int = 0

    def __post_init__(self):
        codes = tuple(int(c) for c in self.codes)
        object.__setattr__(self, "codes", codes)
        if not codes:
            raise DataValidationError("choice set must be nonempty")
        if codes[0] < 1 or any(b <= a for a, b in zip(codes, codes[1:])):
            raise DataValidationError(
                f"choice set codes must be positive and strictly increasing: {codes}")
        if self.set_code < 1:
            raise DataValidationError(f"set_code must be positive, got {self.set_code}")
        if self.observation_count < 0:
            raise DataValidationError("observation_count must be nonnegative")

    @property
    def label(self) -> str:
        return format_codes(self.codes)

    def __len__(self):
        return len(self.codes)

    def __contains__(self, code):
        return code in self.codes


@dataclass(frozen=True)
class TransactionRecord:
    id: str
    chosen_code: int
    set_code: int
    asv_values: Mapping[str, Mapping[int, float]]


# ---------------------------------------------------------------------------
# raw rows


@dataclass(frozen=True)
class LongRows:
    """Validated long-format rows, not yet coded."""

    frame: pd.DataFrame
    idvar: str
    resp: str
    alts: str
    asv: tuple[str, ...]

    def __len__(self):
        return len(self.frame)


@dataclass(frozen=True)
class WideRows:
    """Validated wide-format rows with decoded choice sets (column ``_set``)."""

    frame: pd.DataFrame
    idvar: str
    resp: str
    alts: str
    asv: tuple[str, ...]
    alts_code: str
    choice_set: str
    choice_set_code: str
    n_alternatives: int

    def __len__(self):
        return len(self.frame)


def _read_table(source, delimiter: str) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        return source.reset_index(drop=True).copy()
    if isinstance(source, (str, os.PathLike)) and not isinstance(source, io.IOBase):
        if isinstance(source, str) and "\n" in source:
            source = io.StringIO(source)
    return pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False,
                       encoding="utf-8")


def _numeric_column(series: pd.Series, name: str) -> np.ndarray:
    """Convert to float; empty strings become NaN, other junk is an error."""
    if pd.api.types.is_numeric_dtype(series):
        return series.to_numpy(dtype=float)
    text = series.astype(str).str.strip()
    values = pd.to_numeric(text.where(text != "", None), errors="coerce")
    bad = values.isna() & (text != "") & (text.str.lower() != "nan")
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataValidationError(
            f"non-numeric value {series.iloc[i]!r} in column {name!r} at row {i}")
    return values.to_numpy(dtype=float)


def _str_column(series: pd.Series) -> pd.Series:
    return series.astype(str).str.strip()


def parse_long(source, idvar: str, resp: str, alts: str, asv, *,
               delimiter: str = ",", drop_duplicates: bool = False) -> LongRows:
    """Read and validate long-format transactions.

    Parameters
    ----------
    source : path, text buffer or DataFrame
    idvar, resp, alts : str
        Column names for the transaction id, the 0/1 purchase indicator and
        the alternative label.
    asv : str or list of str
        Alternative-specific variable columns.
    drop_duplicates : bool
        Drop exact duplicate rows before checking (id, alternative) uniqueness.
    """
    asv = as_name_list(asv, "asv")
    frame = _read_table(source, delimiter)
    check_columns(frame, (idvar, resp, alts) + asv)
    if drop_duplicates:
        frame = frame.drop_duplicates().reset_index(drop=True)

    out = pd.DataFrame({idvar: _str_column(frame[idvar]),
                        alts: _str_column(frame[alts])})
    r = _numeric_column(frame[resp], resp)
    bad = ~np.isin(r, (0.0, 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataValidationError(
            f"response {resp!r} must be 0 or 1; got {frame[resp].iloc[i]!r} at row {i}")
    out[resp] = r.astype(int)
    if (out[alts] == "").any():
        i = int(np.flatnonzero((out[alts] == "").to_numpy())[0])
        raise DataValidationError(f"empty alternative label at row {i}")
    for a in asv:
        out[a] = _numeric_column(frame[a], a)

    dup = out.duplicated([idvar, alts])
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        raise DuplicateError(
            f"duplicate (id, alternative) pair ({out[idvar].iloc[i]!r}, "
            f"{out[alts].iloc[i]!r}) at row {i}")
    return LongRows(out, idvar, resp, alts, asv)


def parse_wide(source, idvar: str, resp: str, alts: str, asv, alts_code: str,
               choice_set: str, choice_set_code: str, *, delimiter: str = ",",
               drop_duplicates: bool = False) -> WideRows:
    """Read and validate wide-format transactions.

    Every row is a purchase.  If the response column is present its values
    must all be 1; it may be absent.  The alternative count ``J`` is the
    largest code appearing in any choice set and every code ``1..J`` must
    appear somewhere.
    """
    asv = as_name_list(asv, "asv")
    for flag, col in (("alts_code", alts_code), ("choice_set", choice_set),
                      ("choice_set_code", choice_set_code)):
        if not col:
            raise SchemaError(f"wide format requires the {flag} argument")
    frame = _read_table(source, delimiter)
    check_columns(frame, (idvar, alts, alts_code, choice_set, choice_set_code))
    if drop_duplicates:
        frame = frame.drop_duplicates().reset_index(drop=True)

    ids = _str_column(frame[idvar])
    dup = ids.duplicated()
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        raise DuplicateError(f"duplicate id {ids.iloc[i]!r} at row {i}")
    if resp in frame.columns:
        r = _numeric_column(frame[resp], resp)
        if not np.all(r == 1.0):
            i = int(np.flatnonzero(r != 1.0)[0])
            raise DataValidationError(
                f"wide rows are purchases; {resp!r} must be 1, got "
                f"{frame[resp].iloc[i]!r} at row {i}")

    sets = [parse_choice_set(x) for x in frame[choice_set]]
    chosen = _numeric_column(frame[alts_code], alts_code)
    set_codes = _numeric_column(frame[choice_set_code], choice_set_code)
    for name, arr in ((alts_code, chosen), (choice_set_code, set_codes)):
        if np.isnan(arr).any() or np.any(arr != np.round(arr)):
            i = int(np.flatnonzero(np.isnan(arr) | (arr != np.round(arr)))[0])
            raise DataValidationError(f"column {name!r} must hold integers (row {i})")
    chosen = chosen.astype(int)
    set_codes = set_codes.astype(int)

    for i, (c, s) in enumerate(zip(chosen, sets)):
        if c not in s:
            raise ConsistencyError(
                f"row {i} (id {ids.iloc[i]!r}): chosen code {c} not in choice set "
                f"{format_codes(s)}")
    seen: dict[int, tuple[int, ...]] = {}
    for i, (sc, s) in enumerate(zip(set_codes, sets)):
        if seen.setdefault(sc, s) != s:
            raise ConsistencyError(
                f"row {i}: choice_set_code {sc} maps to both {format_codes(seen[sc])} "
                f"and {format_codes(s)}")
    if len(set(seen.values())) != len(seen):
        raise ConsistencyError("distinct choice_set_code values share one choice set")

    J = max(max(s) for s in sets) if sets else 0
    present = set().union(*sets) if sets else set()
    missing = sorted(set(range(1, J + 1)) - present)
    if missing:
        raise ConsistencyError(
            f"alternative codes must be contiguous 1..{J}; never offered: {missing}")

    out = pd.DataFrame({idvar: ids, alts: _str_column(frame[alts]), "_chosen": chosen,
                        "_set": sets, "_set_code": set_codes})
    for a in asv:
        cols = [f"{a}_{c}" for c in range(1, J + 1)]
        check_columns(frame, cols)
        for col in cols:
            out[col] = _numeric_column(frame[col], col)
    return WideRows(out, idvar, resp, alts, asv, alts_code, choice_set,
                    choice_set_code, J)


# ---------------------------------------------------------------------------
# reshaping


@dataclass
class _Collected:
    ids: list[str]
    catalog: AlternativeCatalog
    chosen: np.ndarray      # codes, shape (n,)
    avail: np.ndarray       # bool (n, J)
    asv: np.ndarray         # (n, J, P); NaN where unavailable or missing
    asv_names: tuple[str, ...]
    response: str


def _collect_long(rows: LongRows, catalog: AlternativeCatalog | None) -> _Collected:
    f = rows.frame
    if catalog is None:
        catalog = AlternativeCatalog.from_labels(f[rows.alts].unique())
    codes = np.array([catalog.code_of(x) for x in f[rows.alts]], dtype=int)
    id_idx, uniq = pd.factorize(f[rows.idvar], sort=False)
    n, J, P = len(uniq), len(catalog), len(rows.asv)
    avail = np.zeros((n, J), dtype=bool)
    avail[id_idx, codes - 1] = True
    asv = np.full((n, J, P), np.nan)
    for p, a in enumerate(rows.asv):
        asv[id_idx, codes - 1, p] = f[a].to_numpy(dtype=float)

    bought = f[rows.resp].to_numpy() == 1
    n_bought = np.bincount(id_idx[bought], minlength=n)
    if np.any(n_bought != 1):
        i = int(np.flatnonzero(n_bought != 1)[0])
        raise DataValidationError(
            f"id {uniq[i]!r} has {n_bought[i]} chosen alternatives; exactly one required")
    chosen = np.zeros(n, dtype=int)
    chosen[id_idx[bought]] = codes[bought]
    return _Collected(list(map(str, uniq)), catalog, chosen, avail, asv, rows.asv,
                      rows.resp)


def _collect_wide(rows: WideRows, catalog: AlternativeCatalog | None) -> _Collected:
    f = rows.frame
    J, P = rows.n_alternatives, len(rows.asv)
    labels: dict[int, str] = {}
    for c, lab in zip(f["_chosen"], f[rows.alts]):
        if labels.setdefault(int(c), lab) != lab:
            raise ConsistencyError(
                f"alternative code {c} carries two labels: {labels[c]!r} and {lab!r}")
    inverse: dict[str, int] = {}
    for c, lab in labels.items():
        if inverse.setdefault(lab, c) != c:
            raise ConsistencyError(f"label {lab!r} carries two codes")
    if catalog is None:
        catalog = AlternativeCatalog(tuple(labels.get(c, f"Alts_{c}")
                                           for c in range(1, J + 1)))
        if list(catalog.labels) != sorted(catalog.labels, key=_byte_key):
            warnings.warn("wide-format alternative codes are not in lexicographic "
                          "label order; keeping the codes as given", stacklevel=3)
    else:
        for c, lab in labels.items():
            if c > len(catalog) or catalog.label_of(c) != lab:
                raise ConsistencyError(
                    f"code {c} ({lab!r}) disagrees with the fitted catalog")
        if J > len(catalog):
            raise ConsistencyError(f"code {J} outside fitted catalog 1..{len(catalog)}")
        J = len(catalog)

    n = len(f)
    avail = np.zeros((n, J), dtype=bool)
    for i, s in enumerate(f["_set"]):
        avail[i, np.asarray(s) - 1] = True
    asv = np.full((n, J, P), np.nan)
    for p, a in enumerate(rows.asv):
        for c in range(1, rows.n_alternatives + 1):
            asv[:, c - 1, p] = f[f"{a}_{c}"].to_numpy(dtype=float)
    asv[~avail] = np.nan
    return _Collected(list(f[rows.idvar]), catalog, f["_chosen"].to_numpy(dtype=int),
                      avail, asv, rows.asv, rows.resp)


def reshape(rows: LongRows | WideRows, min_obs: int = 30, *,
            catalog: AlternativeCatalog | None = None,
            choice_sets: Sequence[ChoiceSet] | None = None) -> "TransactionDataset":
    """Code alternatives and choice sets and drop rare sets.

    Choice sets observed at least ``min_obs`` times are kept and numbered
    ``1..M`` in lexicographic order of their code sequences.  Singleton sets
    are always dropped (counted in ``dropped_singletons``).  With
    ``catalog``/``choice_sets`` given, an existing coding is applied instead:
    labels must belong to the catalog and only the listed sets are kept,
    under their existing set codes.
    """
    min_obs = check_min_obs(min_obs)
    if isinstance(rows, LongRows):
        col = _collect_long(rows, catalog)
    elif isinstance(rows, WideRows):
        col = _collect_wide(rows, catalog)
    else:
        raise DomainError(f"reshape expects LongRows or WideRows, got {type(rows).__name__}")

    n, J = col.avail.shape
    keys = [tuple((np.flatnonzero(col.avail[i]) + 1).tolist()) for i in range(n)]
    singleton = np.array([len(k) == 1 for k in keys], dtype=bool)
    counts: dict[tuple[int, ...], int] = {}
    for k, single in zip(keys, singleton):
        if not single:
            counts[k] = counts.get(k, 0) + 1
    if singleton.any():
        warnings.warn(f"dropped {int(singleton.sum())} transactions with a single-"
                      "alternative choice set", stacklevel=2)

    if choice_sets is None:
        ordered = sorted(counts)
        kept = [k for k in ordered if counts[k] >= min_obs]
        remaining = [ChoiceSet(k, i + 1, counts[k]) for i, k in enumerate(kept)]
    else:
        remaining = [ChoiceSet(s.codes, s.set_code, counts.get(s.codes, 0))
                     for s in choice_sets]
    code_of_set = {s.codes: s.set_code for s in remaining}
    removed = tuple((k, counts[k]) for k in sorted(counts) if k not in code_of_set)

    keep = np.array([k in code_of_set for k in keys], dtype=bool)
    if not keep.any():
        raise EmptyDatasetError("no remaining choice sets after filtering "
                                f"(min_obs={min_obs})")
    idx = np.flatnonzero(keep)
    asv = col.asv[idx]
    avail = col.avail[idx]
    hole = np.isnan(asv) & avail[:, :, None]
    if hole.any():
        i, j, p = (int(v[0]) for v in np.nonzero(hole))
        raise CompletenessError(
            f"id {col.ids[idx[i]]!r}: missing {col.asv_names[p]!r} for alternative "
            f"code {j + 1}")
    return TransactionDataset(
        catalog=col.catalog,
        remaining_sets=tuple(remaining),
        removed_sets=removed,
        asv_names=col.asv_names,
        ids=tuple(col.ids[i] for i in idx),
        chosen=col.chosen[idx],
        set_codes=np.array([code_of_set[keys[i]] for i in idx], dtype=int),
        asv=asv,
        dropped_singletons=int(singleton.sum()),
        response=col.response,
    )


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True, eq=False)
class TransactionDataset:
    """Coded, filtered purchase transactions.

    Records are stored column-wise: ``chosen[i]`` and ``set_codes[i]`` are the
    chosen alternative and choice-set code of record ``i``, and
    ``asv[i, j - 1, p]`` is ASV ``p`` for alternative ``j`` (NaN when ``j`` is
    not in the record's choice set).  Instances are immutable.
    """

    catalog: AlternativeCatalog
    remaining_sets: tuple[ChoiceSet, ...]
    removed_sets: tuple[tuple[tuple[int, ...], int], ...]
    asv_names: tuple[str, ...]
    ids: tuple[str, ...]
    chosen: np.ndarray
    set_codes: np.ndarray
    asv: np.ndarray
    dropped_singletons: int = 0
    response: str | None = None

    def __post_init__(self):
        n = len(self.ids)
        J, P = len(self.catalog), len(self.asv_names)
        if P == 0:
            raise DataValidationError("at least one ASV is required")
        chosen = np.array(self.chosen, dtype=int)
        set_codes = np.array(self.set_codes, dtype=int)
        asv = np.array(self.asv, dtype=float).reshape(n, J, P)
        if chosen.shape != (n,) or set_codes.shape != (n,):
            raise DataValidationError("record arrays disagree in length")
        sets = {s.set_code: s for s in self.remaining_sets}
        if len(sets) != len(self.remaining_sets):
            raise DataValidationError("set codes must be unique")
        for s in self.remaining_sets:
            if s.codes[-1] > J:
                raise DataValidationError(f"choice set {s.label} outside 1..{J}")
        if sum(s.observation_count for s in self.remaining_sets) != n:
            raise DataValidationError("remaining-set counts do not sum to the record count")
        for i, (c, sc) in enumerate(zip(chosen, set_codes)):
            s = sets.get(int(sc))
            if s is None:
                raise ConsistencyError(f"record {i} references unknown set code {sc}")
            if int(c) not in s:
                raise ConsistencyError(f"record {i}: chosen {c} not in set {s.label}")
        for arr in (chosen, set_codes, asv):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", tuple(map(str, self.ids)))
        object.__setattr__(self, "chosen", chosen)
        object.__setattr__(self, "set_codes", set_codes)
        object.__setattr__(self, "asv", asv)
        object.__setattr__(self, "remaining_sets", tuple(self.remaining_sets))
        object.__setattr__(self, "removed_sets", tuple(
            (tuple(int(c) for c in k), int(m)) for k, m in self.removed_sets))
        object.__setattr__(self, "asv_names", tuple(self.asv_names))

    @property
    def n_records(self) -> int:
        return len(self.ids)

    @property
    def n_alternatives(self) -> int:
        return len(self.catalog)

    def __len__(self):
        return self.n_records

    @cached_property
    def set_by_code(self) -> dict[int, ChoiceSet]:
        return {s.set_code: s for s in self.remaining_sets}

    @cached_property
    def availability(self) -> np.ndarray:
        avail = np.zeros((self.n_records, self.n_alternatives), dtype=bool)
        for s in self.remaining_sets:
            rows = self.set_codes == s.set_code
            avail[np.ix_(rows, np.asarray(s.codes) - 1)] = True
        avail.setflags(write=False)
        return avail

    @cached_property
    def design(self) -> Design:
        return Design.from_arrays(self.availability, self.asv, self.chosen - 1)

    @property
    def records(self) -> list[TransactionRecord]:
        out = []
        for i in range(self.n_records):
            s = self.set_by_code[int(self.set_codes[i])]
            values = {a: {c: float(self.asv[i, c - 1, p]) for c in s.codes}
                      for p, a in enumerate(self.asv_names)}
            out.append(TransactionRecord(self.ids[i], int(self.chosen[i]),
                                         s.set_code, values))
        return out

    def __eq__(self, other):
        if not isinstance(other, TransactionDataset):
            return NotImplemented
        return (self.catalog == other.catalog
                and self.remaining_sets == other.remaining_sets
                and self.removed_sets == other.removed_sets
                and self.asv_names == other.asv_names
                and self.ids == other.ids
                and self.dropped_singletons == other.dropped_singletons
                and np.array_equal(self.chosen, other.chosen)
                and np.array_equal(self.set_codes, other.set_codes)
                and np.array_equal(self.asv, other.asv, equal_nan=True))

    __hash__ = None

    # -- tables mirroring the reshape printout

    def alternatives_table(self, label_name: str = "Label") -> pd.DataFrame:
        return self.catalog.to_frame(label_name)

    def remaining_table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "Choice_Set_Code": [s.set_code for s in self.remaining_sets],
            "Remaining_Choice_Set": [s.label for s in self.remaining_sets],
            "Observation": [s.observation_count for s in self.remaining_sets],
        })

    def removed_table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "Removed_Choice_Set": [format_codes(k) for k, _ in self.removed_sets],
            "Observation": [m for _, m in self.removed_sets],
        }, columns=["Removed_Choice_Set", "Observation"])

    def asv_frame(self) -> pd.DataFrame:
        """Wide ASV table, ``<asv>_<code>`` columns, 0 where unavailable."""
        cols = {}
        for p, a in enumerate(self.asv_names):
            for j in range(self.n_alternatives):
                cols[f"{a}_{j + 1}"] = np.nan_to_num(self.asv[:, j, p], nan=0.0)
        return pd.DataFrame(cols)

    # -- serialization

    def to_dict(self) -> dict:
        records = []
        for i in range(self.n_records):
            s = self.set_by_code[int(self.set_codes[i])]
            idx = np.asarray(s.codes) - 1
            records.append({
                "id": self.ids[i],
                "chosen": int(self.chosen[i]),
                "set_code": s.set_code,
                "asv": {a: self.asv[i, idx, p].tolist()
                        for p, a in enumerate(self.asv_names)},
            })
        return {
            "format": DATASET_FORMAT,
            "version": FORMAT_VERSION,
            "response": self.response,
            "asv_names": list(self.asv_names),
            "catalog": [{"code": c, "label": lab} for c, lab in self.catalog.entries],
            "remaining_sets": [{"set_code": s.set_code, "codes": list(s.codes),
                                "observations": s.observation_count}
                               for s in self.remaining_sets],
            "removed_sets": [{"codes": list(k), "observations": m}
                             for k, m in self.removed_sets],
            "dropped_singletons": self.dropped_singletons,
            "records": records,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TransactionDataset":
        if doc.get("format") != DATASET_FORMAT:
            raise SchemaError(f"not a dataset document (format={doc.get('format')!r})")
        try:
            catalog = AlternativeCatalog(tuple(
                e["label"] for e in sorted(doc["catalog"], key=lambda e: e["code"])))
            sets = tuple(ChoiceSet(tuple(s["codes"]), s["set_code"], s["observations"])
                         for s in doc["remaining_sets"])
            by_code = {s.set_code: s for s in sets}
            names = tuple(doc["asv_names"])
            recs = doc["records"]
            n, J, P = len(recs), len(catalog), len(names)
            asv = np.full((n, J, P), np.nan)
            for i, r in enumerate(recs):
                idx = np.asarray(by_code[r["set_code"]].codes) - 1
                for p, a in enumerate(names):
                    asv[i, idx, p] = r["asv"][a]
            return cls(
                catalog=catalog,
                remaining_sets=sets,
                removed_sets=tuple((tuple(s["codes"]), s["observations"])
                                   for s in doc["removed_sets"]),
                asv_names=names,
                ids=tuple(r["id"] for r in recs),
                chosen=np.array([r["chosen"] for r in recs], dtype=int),
                set_codes=np.array([r["set_code"] for r in recs], dtype=int),
                asv=asv,
                dropped_singletons=doc.get("dropped_singletons", 0),
                response=doc.get("response"),
            )
        except KeyError as exc:
            raise SchemaError(f"dataset document lacks field {exc}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TransactionDataset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def long_to_wide(rows: LongRows) -> pd.DataFrame:
    """Re-express long rows in the wide layout, before any filtering.

    Choice-set codes are assigned over all observed sets; unavailable
    alternatives get placeholder 0 in their ASV columns.
    """
    col = _collect_long(rows, None)
    n, J = col.avail.shape
    keys = [format_codes(np.flatnonzero(col.avail[i]) + 1) for i in range(n)]
    order = sorted(set(keys), key=lambda k: tuple(map(int, k.split("|"))))
    set_code = {k: i + 1 for i, k in enumerate(order)}
    out = pd.DataFrame({
        rows.idvar: col.ids,
        rows.alts: [col.catalog.label_of(c) for c in col.chosen],
        "Decis_Alts_Code": col.chosen,
        "Choice_Set": keys,
        "Choice_Set_Code": [set_code[k] for k in keys],
    })
    for p, a in enumerate(col.asv_names):
        for j in range(J):
            out[f"{a}_{j + 1}"] = np.nan_to_num(col.asv[:, j, p], nan=0.0)
    return out


# ---------------------------------------------------------------------------
# estimator facade


class ChoiceReshaper(TransformerMixin, BaseEstimator):
    """Transformer turning long or wide transaction tables into a
    :class:`TransactionDataset`.

    Wide format is selected when any of ``alts_code``, ``choice_set`` or
    ``choice_set_code`` is given (all three are then required).  ``fit``
    learns the alternative coding and the retained choice sets; ``transform``
    applies that coding to new data, keeping only records exposed to a
    retained set.

    Examples
    --------
    >>> rs = ChoiceReshaper(idvar="Booking_ID", resp="Purchase",
    ...                     alts="Room_Type", asv=["Price"])  # doctest: +SKIP
    >>> dataset = rs.fit_transform(hotel_long)                 # doctest: +SKIP
    """

    def __init__(self, idvar="id", resp="purchase", alts="alternative", asv=("price",),
                 alts_code=None, choice_set=None, choice_set_code=None, min_obs=30,
                 delimiter=",", drop_duplicates=False):
        self.idvar = idvar
        self.resp = resp
        self.alts = alts
        self.asv = asv
        self.alts_code = alts_code
        self.choice_set = choice_set
        self.choice_set_code = choice_set_code
        self.min_obs = min_obs
        self.delimiter = delimiter
        self.drop_duplicates = drop_duplicates

    @property
    def is_wide(self) -> bool:
        return any(x is not None for x in
                   (self.alts_code, self.choice_set, self.choice_set_code))

    def _parse(self, X):
        if self.is_wide:
            return parse_wide(X, self.idvar, self.resp, self.alts, self.asv,
                              self.alts_code, self.choice_set, self.choice_set_code,
                              delimiter=self.delimiter,
                              drop_duplicates=self.drop_duplicates)
        return parse_long(X, self.idvar, self.resp, self.alts, self.asv,
                          delimiter=self.delimiter, drop_duplicates=self.drop_duplicates)

    def fit(self, X, y=None):
        ds = reshape(self._parse(X), self.min_obs)
        self.dataset_ = ds
        self.catalog_ = ds.catalog
        self.remaining_sets_ = ds.remaining_sets
        self.removed_sets_ = ds.removed_sets
        return self

    def transform(self, X):
        check_is_fitted(self, "catalog_")
        return reshape(self._parse(X), 1, catalog=self.catalog_,
                       choice_sets=self.remaining_sets_)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).dataset_
