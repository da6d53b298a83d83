"""Partially treated panels: data container, treatment masks, CSV ingestion."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd


class PanelError(ValueError):
    """Raised for malformed panel input."""


@dataclass(frozen=True)
class PanelData:
    """Outcome matrix (J x T), treatment mask, covariates (J x T x L) and labels.

    Treated cells (mask == 1) carry the realized treated outcome y(1).
    Arrays are made read-only on construction so a panel can be shared
    between concurrently running chains.
    """

    outcomes: np.ndarray
    mask: np.ndarray
    covariates: np.ndarray | None = None
    unit_labels: tuple[str, ...] = ()
    period_labels: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.array(self.outcomes, dtype=float)
        m = np.array(self.mask)
        J, T = y.shape
        x = self.covariates
        x = np.zeros((J, T, 0)) if x is None else np.array(x, dtype=float)
        if x.ndim == 2:
            x = x[:, :, None]
        for arr in (y, m, x):
            arr.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "covariates", x)
        if not self.unit_labels:
            object.__setattr__(self, "unit_labels", tuple(str(j + 1) for j in range(J)))
        else:
            object.__setattr__(self, "unit_labels", tuple(map(str, self.unit_labels)))
        if not self.period_labels:
            object.__setattr__(self, "period_labels", tuple(str(t + 1) for t in range(T)))
        else:
            object.__setattr__(self, "period_labels", tuple(map(str, self.period_labels)))

    @property
    def J(self) -> int:
        return self.outcomes.shape[0]

    @property
    def T(self) -> int:
        return self.outcomes.shape[1]

    @property
    def L(self) -> int:
        return self.covariates.shape[2]

    @property
    def treated(self) -> np.ndarray:
        """Boolean J x T array marking I1."""
        return self.mask == 1

    @property
    def treated_cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major (unit, period) indices of I1; this fixes the draw column order."""
        return np.nonzero(self.treated)

    @property
    def n_treated(self) -> int:
        return int(self.treated.sum())


@dataclass(frozen=True)
class TreatmentSpec:
    kind: str  # "single-unit-block" | "multi-unit-block" | "arbitrary-cells"
    treated_units: Sequence[int] = ()
    start_period: int | None = None
    explicit_cells: Sequence[tuple[int, int]] = field(default_factory=tuple)


def build_mask(spec: TreatmentSpec, J: int, T: int) -> np.ndarray:
    """Binary J x T mask for a treatment pattern (0-based indices).

    Block kinds set ``start_period .. T-1`` for every treated unit.
    """
    mask = np.zeros((J, T), dtype=np.int8)
    if spec.kind in ("single-unit-block", "multi-unit-block"):
        units = list(spec.treated_units)
        if not units:
            raise PanelError("empty treated set")
        if spec.kind == "single-unit-block" and len(units) != 1:
            raise PanelError("single-unit-block needs exactly one treated unit")
        if spec.start_period is None or not 0 <= spec.start_period < T:
            raise PanelError(f"start_period out of range 0..{T - 1}")
        for j in units:
            if not 0 <= j < J:
                raise PanelError(f"treated unit {j} out of range 0..{J - 1}")
            mask[j, spec.start_period:] = 1
    elif spec.kind == "arbitrary-cells":
        cells = list(spec.explicit_cells)
        if not cells:
            raise PanelError("empty treated set")
        for j, t in cells:
            if not (0 <= j < J and 0 <= t < T):
                raise PanelError(f"treated cell ({j},{t}) out of range")
            mask[j, t] = 1
    else:
        raise PanelError(f"unknown treatment kind {spec.kind!r}")
    if mask.all():
        raise PanelError("treated cells cover the whole panel; no controls")
    return mask


def validate(data: PanelData) -> list[str]:
    """List invariant violations; an empty list means the panel is usable."""
    problems = []
    y, m, x = data.outcomes, data.mask, data.covariates
    if y.ndim != 2:
        return [f"outcomes must be 2-d, got shape {y.shape}"]
    J, T = y.shape
    if J < 2 or T < 2:
        problems.append(f"panel too small: J={J}, T={T} (need J>=2, T>=2)")
    if m.shape != (J, T):
        problems.append(f"mask shape {m.shape} != outcomes shape {(J, T)}")
        return problems
    if x.shape[:2] != (J, T):
        problems.append(f"covariates shape {x.shape[:2]} != outcomes shape {(J, T)}")
    bad = np.argwhere((m != 0) & (m != 1))
    for j, t in bad:
        problems.append(f"mask not binary at ({j},{t})")
    if bad.size == 0 and np.all(m == 1):
        problems.append("no untreated observations")
    untreated = m == 0
    for j, t in np.argwhere(untreated & ~np.isfinite(y)):
        problems.append(f"non-finite outcome at untreated cell ({j},{t})")
    if x.shape[:2] == (J, T) and x.shape[2] > 0:
        for j, t in np.argwhere(untreated & ~np.all(np.isfinite(x), axis=2)):
            problems.append(f"non-finite covariate at untreated cell ({j},{t})")
    if len(data.unit_labels) != J:
        problems.append("unit_labels length != J")
    if len(data.period_labels) != T:
        problems.append("period_labels length != T")
    return problems


@dataclass(frozen=True)
class CsvSchema:
    """Column roles of a long-format panel file."""

    unit: str = "unit"
    period: str = "period"
    outcome: str = "outcome"
    treatment: str = "treated"
    covariates: tuple[str, ...] = ()
    time_invariant: tuple[str, ...] = ()


def _to_float(col: pd.Series) -> np.ndarray:
    """Correctly rounded parse of a string column; raises ValueError on junk."""
    return np.fromiter((float(v) for v in col), dtype=float, count=len(col))


def _period_sort_key(labels):
    try:
        return sorted(labels, key=float)
    except ValueError:
        return sorted(labels)


def load_panel_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> PanelData:
    """Read a long-format CSV (one row per unit-period) into a PanelData.

    Units keep their first-appearance order; periods are sorted numerically
    when possible. Time-invariant covariates may be blank on some rows; the
    unit's single non-blank value is broadcast over all periods.
    """
    path = Path(path)
    if not path.exists():
        raise PanelError(f"no such file: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    needed = [schema.unit, schema.period, schema.outcome, schema.treatment, *schema.covariates]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise PanelError(f"missing columns: {', '.join(missing)}")
    for c in schema.time_invariant:
        if c not in schema.covariates:
            raise PanelError(f"time-invariant column {c} is not a declared covariate")

    units = list(dict.fromkeys(df[schema.unit]))
    periods = _period_sort_key(list(dict.fromkeys(df[schema.period])))
    dup = df.duplicated([schema.unit, schema.period])
    if dup.any():
        r = df[dup].iloc[0]
        raise PanelError(f"duplicate row: unit {r[schema.unit]} period {r[schema.period]}")
    uidx = {u: i for i, u in enumerate(units)}
    pidx = {p: i for i, p in enumerate(periods)}
    J, T, L = len(units), len(periods), len(schema.covariates)

    present = np.zeros((J, T), dtype=bool)
    rows = df[schema.unit].map(uidx).to_numpy()
    cols = df[schema.period].map(pidx).to_numpy()
    present[rows, cols] = True
    if not present.all():
        j, t = np.argwhere(~present)[0]
        raise PanelError(f"incomplete grid: unit {units[j]} period {periods[t]}")

    y = np.empty((J, T))
    try:
        y[rows, cols] = _to_float(df[schema.outcome])
    except (ValueError, TypeError) as exc:
        raise PanelError(f"non-numeric outcome in column {schema.outcome}: {exc}") from None

    s_raw = df[schema.treatment].str.strip()
    if not s_raw.isin(["0", "1", "0.0", "1.0"]).all():
        bad = s_raw[~s_raw.isin(["0", "1", "0.0", "1.0"])].iloc[0]
        raise PanelError(f"non-binary treatment value {bad!r} in column {schema.treatment}")
    mask = np.empty((J, T), dtype=np.int8)
    mask[rows, cols] = s_raw.astype(float).astype(np.int8).to_numpy()

    x = np.empty((J, T, L))
    for k, c in enumerate(schema.covariates):
        raw = df[c].str.strip()
        if c in schema.time_invariant:
            for u, grp in raw.groupby(df[schema.unit], sort=False):
                vals = set(grp[grp != ""])
                if len(vals) != 1:
                    raise PanelError(
                        f"time-invariant covariate {c} for unit {u} has values {sorted(vals)}"
                    )
                try:
                    x[uidx[u], :, k] = float(vals.pop())
                except ValueError:
                    raise PanelError(f"non-numeric covariate {c} for unit {u}") from None
        else:
            try:
                x[rows, cols, k] = _to_float(raw)
            except (ValueError, TypeError):
                raise PanelError(f"non-numeric covariate in column {c}") from None

    data = PanelData(y, mask, x, tuple(units), tuple(periods))
    problems = validate(data)
    if problems:
        raise PanelError("; ".join(problems))
    return data


def write_panel_csv(data: PanelData, path: str | Path, schema: CsvSchema = CsvSchema()) -> None:
    """Write a panel in the long layout read by :func:`load_panel_csv`."""
    J, T = data.J, data.T
    cov_names = list(schema.covariates) or [f"x{k + 1}" for k in range(data.L)]
    if len(cov_names) != data.L:
        raise PanelError("schema covariates do not match panel L")
    records = {
        schema.unit: np.repeat(data.unit_labels, T),
        schema.period: np.tile(data.period_labels, J),
        schema.outcome: [repr(float(v)) for v in data.outcomes.ravel()],
        schema.treatment: data.mask.ravel().astype(int),
    }
    for k, c in enumerate(cov_names):
        records[c] = [repr(float(v)) for v in data.covariates[:, :, k].ravel()]
    pd.DataFrame(records).to_csv(path, index=False, lineterminator="\n")
