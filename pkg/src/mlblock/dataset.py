"""Panel experiment data: loading, validation and standardization."""
from __future__ import annotations

import csv
import hashlib
import math
import os
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    LeakageError,
    MissingData,
    NonNumeric,
    SchemaMismatch,
    TooFewPeriods,
)

_PERIOD_RE = re.compile(r"^pre(\d+)$")
_MISSING = {"", "na", "nan", "null", "none"}


def _period_key(label: str) -> tuple[int, int]:
    if label == "post":
        return (1, 0)
    m = _PERIOD_RE.match(label)
    if m is None:
        raise SchemaMismatch(f"unknown period label {label!r}; expected pre<k> or post")
    return (0, int(m.group(1)))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Units x periods outcomes with static (and optionally time-varying) covariates.

    Periods are positional: ``periods[t]`` labels column ``t`` of ``outcomes``.
    Labels withheld from design procedures raise ``LeakageError`` on access.
    """

    unit_ids: tuple
    outcomes: np.ndarray
    periods: tuple[str, ...]
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    time_varying: np.ndarray | None = None
    time_varying_names: tuple[str, ...] = ()
    withheld: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        n = len(self.unit_ids)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "time_varying_names", tuple(self.time_varying_names))
        outcomes = _frozen(self.outcomes).reshape(n, len(self.periods))
        covariates = _frozen(self.covariates).reshape(n, len(self.covariate_names))
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "covariates", covariates)
        if self.time_varying is not None:
            tv = _frozen(self.time_varying)
            if tv.shape != (n, len(self.periods), len(self.time_varying_names)):
                raise SchemaMismatch(
                    f"time-varying array has shape {tv.shape}, expected "
                    f"{(n, len(self.periods), len(self.time_varying_names))}"
                )
            object.__setattr__(self, "time_varying", tv)
        keys = [_period_key(p) for p in self.periods]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise SchemaMismatch(f"period labels not strictly ordered: {self.periods}")
        if not (np.all(np.isfinite(outcomes)) and np.all(np.isfinite(covariates))):
            raise MissingData(
                np.flatnonzero(
                    ~(np.isfinite(outcomes).all(1) & np.isfinite(covariates).all(1))
                ).tolist(),
                "non-finite values in panel",
            )
        object.__setattr__(self, "withheld", frozenset(self.withheld))

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def K(self) -> int:
        return len(self.covariate_names)

    @property
    def pre_periods(self) -> tuple[str, ...]:
        return tuple(p for p in self.periods if p.startswith("pre"))

    def has(self, label: str) -> bool:
        return label in self.periods

    def outcome(self, label: str) -> np.ndarray:
        if label in self.withheld:
            raise LeakageError(f"period {label!r} is withheld from design procedures")
        try:
            return self.outcomes[:, self.periods.index(label)]
        except ValueError:
            raise TooFewPeriods(f"panel has no period {label!r}") from None

    def z(self, label: str) -> np.ndarray:
        """Time-varying covariates for one period as an n x J matrix."""
        if self.time_varying is None:
            return np.empty((self.n, 0))
        if label in self.withheld:
            raise LeakageError(f"period {label!r} is withheld from design procedures")
        return self.time_varying[:, self.periods.index(label), :]

    def feature(self, name: str) -> np.ndarray:
        """Resolve a covariate name or an outcome period label to a column."""
        if name in self.covariate_names:
            return self.covariates[:, self.covariate_names.index(name)]
        if name in self.periods or name in self.withheld:
            return self.outcome(name)
        raise SchemaMismatch(f"no covariate or period named {name!r}")

    def feature_matrix(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.feature(nm) for nm in names])

    def subset(self, idx) -> "PanelDataset":
        idx = np.asarray(idx)
        return PanelDataset(
            unit_ids=tuple(self.unit_ids[i] for i in idx),
            outcomes=self.outcomes[idx],
            periods=self.periods,
            covariates=self.covariates[idx],
            covariate_names=self.covariate_names,
            time_varying=None if self.time_varying is None else self.time_varying[idx],
            time_varying_names=self.time_varying_names,
            withheld=self.withheld,
        )

    def restrict(self, labels: Sequence[str]) -> "PanelDataset":
        """Keep only the listed periods (in panel order)."""
        missing = [lb for lb in labels if lb not in self.periods]
        if missing:
            raise TooFewPeriods(f"panel has no period(s) {missing}")
        cols = [t for t, p in enumerate(self.periods) if p in labels]
        return PanelDataset(
            unit_ids=self.unit_ids,
            outcomes=self.outcomes[:, cols],
            periods=tuple(self.periods[t] for t in cols),
            covariates=self.covariates,
            covariate_names=self.covariate_names,
            time_varying=None if self.time_varying is None else self.time_varying[:, cols],
            time_varying_names=self.time_varying_names,
            withheld=self.withheld,
        )

    def withhold(self, label: str) -> "PanelDataset":
        """Drop a period and make any later request for it a LeakageError."""
        keep = [p for p in self.periods if p != label]
        out = self.restrict(keep)
        object.__setattr__(out, "withheld", self.withheld | {label})
        return out

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.unit_ids, self.periods, self.covariate_names)).encode())
        h.update(np.ascontiguousarray(self.outcomes).tobytes())
        h.update(np.ascontiguousarray(self.covariates).tobytes())
        if self.time_varying is not None:
            h.update(repr(self.time_varying_names).encode())
            h.update(np.ascontiguousarray(self.time_varying).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class PanelSchema:
    """Column roles for ``load_panel``.

    ``periods`` maps period labels to CSV columns; its order fixes the period
    order. ``covariates=None`` means every column not used elsewhere.
    ``time_varying`` maps a variable name to a label -> column mapping that
    must cover every period.
    """

    periods: Mapping[str, str]
    unit: str = "unit"
    covariates: Sequence[str] | None = None
    time_varying: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, m: Mapping) -> "PanelSchema":
        """Accept the nested form or a flat ``{"pre1": "y1", "pre2": "y2", ...}``."""
        m = dict(m)
        unit = m.pop("unit", "unit")
        covariates = m.pop("covariates", None)
        tv = m.pop("time_varying", {}) or {}
        if "periods" in m:
            periods = m.pop("periods")
        else:
            periods = {k: m.pop(k) for k in list(m) if k == "post" or _PERIOD_RE.match(k)}
        if m:
            raise SchemaMismatch(f"unknown schema keys: {sorted(m)}")
        return cls(periods=dict(periods), unit=unit, covariates=covariates, time_varying=dict(tv))


def load_panel(path: str | os.PathLike, schema: PanelSchema | Mapping) -> PanelDataset:
    """Read a CSV (header row, UTF-8, '.' decimals) into a validated panel.

    Row numbers in errors are 1-based data rows (the header is row 0).
    """
    if not isinstance(schema, PanelSchema):
        schema = PanelSchema.from_mapping(schema)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaMismatch(f"{path} is empty") from None
        rows = [r for r in reader if any(c.strip() for c in r)]

    labels = list(schema.periods)
    for lb in labels:
        _period_key(lb)
    tv_names = list(schema.time_varying)
    used = {schema.unit, *schema.periods.values()}
    for nm, cols in schema.time_varying.items():
        if list(cols) != labels:
            raise SchemaMismatch(f"time-varying {nm!r} must list periods {labels}")
        used.update(cols.values())
    if schema.covariates is None:
        covs = [h for h in header if h not in used]
    else:
        covs = list(schema.covariates)
    required = [schema.unit, *schema.periods.values(), *covs]
    required += [c for nm in tv_names for c in schema.time_varying[nm].values()]
    absent = [c for c in required if c not in header]
    if absent:
        raise SchemaMismatch(f"column(s) not in header: {absent}")
    pos = {h: i for i, h in enumerate(header)}

    missing_rows = []
    for i, r in enumerate(rows, start=1):
        if any(pos[c] >= len(r) or r[pos[c]].strip().lower() in _MISSING for c in required):
            missing_rows.append(i)
    if missing_rows:
        raise MissingData(missing_rows)

    def numeric(col):
        out = np.empty(len(rows))
        for i, r in enumerate(rows):
            cell = r[pos[col]].strip()
            try:
                out[i] = float(cell)
            except ValueError:
                raise NonNumeric(f"row {i + 1}, column {col!r}: cannot parse {cell!r}") from None
            if not math.isfinite(out[i]):
                raise NonNumeric(f"row {i + 1}, column {col!r}: non-finite value {cell!r}")
        return out

    n = len(rows)
    outcomes = np.column_stack([numeric(schema.periods[lb]) for lb in labels]) if labels else np.empty((n, 0))
    X = np.column_stack([numeric(c) for c in covs]) if covs else np.empty((n, 0))
    tv = None
    if tv_names:
        tv = np.stack(
            [np.column_stack([numeric(schema.time_varying[nm][lb]) for nm in tv_names]) for lb in labels],
            axis=1,
        )
    unit_ids = tuple(r[pos[schema.unit]].strip() for r in rows)
    if len(set(unit_ids)) != n:
        raise SchemaMismatch(f"duplicate unit ids in column {schema.unit!r}")
    return PanelDataset(
        unit_ids=unit_ids,
        outcomes=outcomes,
        periods=tuple(labels),
        covariates=X,
        covariate_names=tuple(covs),
        time_varying=tv,
        time_varying_names=tuple(tv_names),
    )


@dataclass(frozen=True, eq=False)
class Scaler:
    """Column means and sample (ddof=1) standard deviations.

    Constant columns keep ``stddevs == 1`` internally and are flagged; they map
    to all-zero columns.
    """

    means: np.ndarray
    stddevs: np.ndarray
    constant: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = (X - self.means) / self.stddevs
        if self.constant.any():
            Z[:, self.constant] = 0.0
        return Z

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return Z * self.stddevs + self.means


def standardize(X) -> tuple[np.ndarray, Scaler]:
    """Center each column and scale it to unit sample standard deviation."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("standardize needs at least 2 rows")
    means = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    scale = np.maximum(np.abs(means), 1.0)
    constant = sd <= 1e-12 * scale
    sd = np.where(constant, 1.0, sd)
    scaler = Scaler(means=means, stddevs=sd, constant=constant)
    return scaler.transform(X), scaler
