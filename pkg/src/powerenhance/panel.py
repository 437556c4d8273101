"""Panel containers and CSV ingestion.

Two on-disk layouts are accepted:

* ``units-as-rows``: header row holds time labels, first column holds unit labels;
* ``units-as-columns``: the transpose (the usual "dates down the side" layout).

A blank cell is a missing value. Any other non-numeric or non-finite cell is a
parse error that cites the offending row and column.
"""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PanelError

LAYOUTS = ("units-as-rows", "units-as-columns")
MISSING_POLICIES = ("reject", "drop-unit")


def _check_labels(labels, what):
    labels = [str(x) for x in labels]
    seen = set()
    for lab in labels:
        if lab in seen:
            raise PanelError(f"duplicate {what} label {lab!r}")
        seen.add(lab)
    return tuple(labels)


@dataclass(frozen=True)
class Panel:
    """Units x time matrix of observations (returns, regressors, residuals)."""

    values: np.ndarray
    unit_labels: tuple
    time_labels: tuple
    dropped_count: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise PanelError(f"panel values must be 2-d, got shape {vals.shape}")
        n, t = vals.shape
        if n < 1 or t < 2:
            raise PanelError(f"panel needs >=1 unit and >=2 time points, got {n}x{t}")
        if not np.all(np.isfinite(vals)):
            raise PanelError("panel values contain missing or non-finite entries")
        units = _check_labels(self.unit_labels, "unit")
        times = _check_labels(self.time_labels, "time")
        if len(units) != n or len(times) != t:
            raise PanelError(
                f"label lengths ({len(units)} units, {len(times)} times) do not match values {n}x{t}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "unit_labels", units)
        object.__setattr__(self, "time_labels", times)

    @property
    def n_units(self):
        return self.values.shape[0]

    @property
    def n_time(self):
        return self.values.shape[1]

    def select_times(self, labels):
        pos = {lab: k for k, lab in enumerate(self.time_labels)}
        idx = [pos[lab] for lab in labels]
        return Panel(self.values[:, idx], self.unit_labels, tuple(labels), self.dropped_count)

    def select_units(self, idx):
        idx = list(idx)
        return Panel(self.values[idx], [self.unit_labels[i] for i in idx], self.time_labels)


@dataclass(frozen=True)
class FactorPanel:
    """K factors x T observations."""

    values: np.ndarray
    factor_labels: tuple
    time_labels: tuple

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise PanelError(f"factor values must be 2-d, got shape {vals.shape}")
        k, t = vals.shape
        if k < 1:
            raise PanelError("need at least one factor")
        if k + 1 >= t:
            raise PanelError(f"need K + 1 < T, got K={k}, T={t}")
        if not np.all(np.isfinite(vals)):
            raise PanelError("factor values contain missing or non-finite entries")
        labels = _check_labels(self.factor_labels, "factor")
        times = _check_labels(self.time_labels, "time")
        if len(labels) != k or len(times) != t:
            raise PanelError("factor label lengths do not match values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "factor_labels", labels)
        object.__setattr__(self, "time_labels", times)

    @property
    def n_factors(self):
        return self.values.shape[0]

    @property
    def n_time(self):
        return self.values.shape[1]

    def select_times(self, labels):
        pos = {lab: k for k, lab in enumerate(self.time_labels)}
        idx = [pos[lab] for lab in labels]
        return FactorPanel(self.values[:, idx], self.factor_labels, tuple(labels))


@dataclass
class RawTable:
    """Parsed CSV before any missing-value policy is applied (NaN = blank cell)."""

    values: np.ndarray
    unit_labels: list
    time_labels: list
    missing: np.ndarray = field(repr=False, default=None)


def read_table_csv(path, layout="units-as-rows"):
    """Parse a labelled CSV into a units x time array, keeping blanks as NaN."""
    if layout not in LAYOUTS:
        raise PanelError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    path = Path(path)
    if not path.exists():
        raise PanelError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise PanelError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0][1:]]
    body_labels = []
    data = np.full((len(rows) - 1, len(header)), np.nan)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) - 1 > len(header):
            raise PanelError(f"{path}: row {r} has {len(row) - 1} cells, header has {len(header)}")
        body_labels.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            if not cell:
                continue
            try:
                x = float(cell)
            except ValueError:
                raise PanelError(
                    f"{path}: cannot parse cell at row {r}, column {c + 2} "
                    f"({header[c]!r}): {cell!r}"
                ) from None
            if not math.isfinite(x):
                raise PanelError(f"{path}: non-finite cell at row {r}, column {c + 2}: {cell!r}")
            data[r - 2, c] = x
    if layout == "units-as-rows":
        units, times, vals = body_labels, header, data
    else:
        units, times, vals = header, body_labels, data.T
    _check_labels(units, "unit")
    _check_labels(times, "time")
    return RawTable(vals, list(units), list(times), np.isnan(vals))


def _apply_policy(raw, missing_policy, path):
    if missing_policy not in MISSING_POLICIES:
        raise PanelError(f"missing_policy must be one of {MISSING_POLICIES}, got {missing_policy!r}")
    incomplete = raw.missing.any(axis=1)
    if missing_policy == "reject" and incomplete.any():
        i, t = np.argwhere(raw.missing)[0]
        raise PanelError(
            f"{path}: missing value for unit {raw.unit_labels[i]!r} at time {raw.time_labels[t]!r}"
        )
    keep = ~incomplete
    if not keep.any():
        raise PanelError(f"{path}: panel is empty after dropping incomplete units")
    return keep, int(incomplete.sum())


def load_panel_csv(path, layout="units-as-rows", missing_policy="reject"):
    """Load a complete-case Panel from CSV."""
    raw = read_table_csv(path, layout)
    keep, dropped = _apply_policy(raw, missing_policy, path)
    units = [u for u, k in zip(raw.unit_labels, keep) if k]
    return Panel(raw.values[keep], units, raw.time_labels, dropped_count=dropped)


def load_factor_csv(path, layout="units-as-columns"):
    """Load factors; defaults to the dates-down-the-side layout of factor libraries."""
    raw = read_table_csv(path, layout)
    _apply_policy(raw, "reject", path)
    return FactorPanel(raw.values, raw.unit_labels, raw.time_labels)


def write_panel_csv(panel, path, layout="units-as-rows"):
    """Write a Panel or FactorPanel; ``repr`` floats make reload bitwise exact."""
    if layout not in LAYOUTS:
        raise PanelError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    row_labels = panel.unit_labels if isinstance(panel, Panel) else panel.factor_labels
    vals = panel.values
    if layout == "units-as-rows":
        header, labels, body = panel.time_labels, row_labels, vals
    else:
        header, labels, body = row_labels, panel.time_labels, vals.T
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(header))
        for lab, row in zip(labels, body):
            w.writerow([lab] + [repr(float(x)) for x in row])


def align(a, b):
    """Restrict two panels to their shared time labels.

    The order follows ``a``'s time axis. Fails if fewer than K + 2 periods are
    shared, where K is the factor count of whichever argument is a FactorPanel
    (0 if neither).
    """
    shared = set(a.time_labels) & set(b.time_labels)
    common = [lab for lab in a.time_labels if lab in shared]
    k = max(
        (p.n_factors for p in (a, b) if isinstance(p, FactorPanel)),
        default=0,
    )
    if len(common) < k + 2:
        raise PanelError(f"insufficient time overlap: {len(common)} shared periods, need {k + 2}")
    if len(common) == len(a.time_labels) == len(b.time_labels) and tuple(common) == tuple(b.time_labels):
        return a, b
    return a.select_times(common), b.select_times(common)
