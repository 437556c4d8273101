"""Rolling-window alpha tests on an unbalanced returns panel.

Each window keeps only the units observed in every period of that window, so
the cross-section size changes from window to window.
"""
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PanelError, PowerEnhanceError
from .fileio import atomic_open
from .panel import FactorPanel, Panel
from .quad_tests import FpConfig, power_enhanced_fp

COLUMNS = (
    "window_end",
    "n_units",
    "delta",
    "c_used",
    "j0",
    "j_wald",
    "j",
    "p_wald",
    "p_pe",
    "n_selected",
    "selected",
    "mean_abs_theta_all",
    "mean_abs_theta_selected",
    "note",
)


@dataclass
class RollingRecord:
    window_end: str
    n_units: int
    delta: float = math.nan
    c_used: float = math.nan
    j0: float = math.nan
    j_wald: float = math.nan
    j: float = math.nan
    p_wald: float = math.nan
    p_pe: float = math.nan
    selected: list = field(default_factory=list)
    mean_abs_theta_all: float = math.nan
    mean_abs_theta_selected: float = math.nan
    note: str = ""

    @property
    def n_selected(self):
        return len(self.selected)

    @property
    def ok(self):
        return math.isfinite(self.p_pe)

    def csv_row(self):
        def num(x):
            return repr(float(x))

        return [
            self.window_end,
            str(self.n_units),
            num(self.delta),
            num(self.c_used),
            num(self.j0),
            num(self.j_wald),
            num(self.j),
            num(self.p_wald),
            num(self.p_pe),
            str(self.n_selected),
            ";".join(self.selected),
            num(self.mean_abs_theta_all),
            num(self.mean_abs_theta_selected),
            self.note,
        ]


@dataclass
class RollingResult:
    records: list
    window: int
    level: float = 0.05

    def summary(self):
        ok = [r for r in self.records if r.ok]
        out = {"windows": len(self.records), "windows_failed": len(self.records) - len(ok)}
        if not ok:
            return out
        cols = {
            "n_units": [r.n_units for r in ok],
            "n_selected": [r.n_selected for r in ok],
            "delta": [r.delta for r in ok],
            "p_wald": [r.p_wald for r in ok],
            "p_pe": [r.p_pe for r in ok],
        }
        for name, xs in cols.items():
            out[f"mean_{name}"] = float(np.mean(xs))
            out[f"median_{name}"] = float(np.median(xs))
        out["reject_share_wald"] = float(np.mean([r.p_wald < self.level for r in ok]))
        out["reject_share_pe"] = float(np.mean([r.p_pe < self.level for r in ok]))
        return out

    def summary_text(self):
        s = self.summary()
        lines = [f"windows: {s['windows']} (length {self.window}, failed {s['windows_failed']})"]
        if "mean_n_units" in s:
            for name in ("n_units", "n_selected", "delta", "p_wald", "p_pe"):
                lines.append(f"{name:<11} mean {s['mean_' + name]:.4f}  median {s['median_' + name]:.4f}")
            lines.append(f"share of windows rejecting at {self.level:g}: "
                         f"J_wald {s['reject_share_wald']:.4f}, PE {s['reject_share_pe']:.4f}")
        return "\n".join(lines) + "\n"


def rolling_fp(raw, factors, window=60, config=FpConfig(), level=0.05):
    """Run the alpha test on every window of ``window`` consecutive shared periods.

    ``raw`` is a :class:`~powerenhance.panel.RawTable` (blank cells allowed);
    ``factors`` a complete :class:`FactorPanel`.
    """
    if window < 1:
        raise PanelError(f"window must be positive, got {window}")
    fset = set(factors.time_labels)
    times = [t for t in raw.time_labels if t in fset]
    if window > len(times):
        raise PanelError(f"window {window} is longer than the {len(times)} periods shared by returns and factors")
    tpos = {t: k for k, t in enumerate(raw.time_labels)}
    fpos = {t: k for k, t in enumerate(factors.time_labels)}
    records = []
    for end in range(window - 1, len(times)):
        wt = times[end - window + 1 : end + 1]
        cols = [tpos[t] for t in wt]
        block = raw.values[:, cols]
        keep = ~np.isnan(block).any(axis=1)
        label = wt[-1]
        n = int(keep.sum())
        if n < 2:
            records.append(RollingRecord(label, n, note="fewer than 2 complete units"))
            continue
        if n <= window:
            warnings.warn(f"window ending {label}: N={n} <= T={window}", RuntimeWarning, stacklevel=2)
        units = [u for u, k in zip(raw.unit_labels, keep) if k]
        try:
            ret = Panel(block[keep], units, list(wt))
            fac = FactorPanel(factors.values[:, [fpos[t] for t in wt]], factors.factor_labels, list(wt))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = power_enhanced_fp(ret, fac, config)
        except PowerEnhanceError as exc:
            records.append(RollingRecord(label, n, note=f"{type(exc).__name__}: {exc}"))
            continue
        records.append(
            RollingRecord(
                label,
                n,
                rep.delta,
                rep.c_used,
                rep.j0,
                rep.pivotal,
                rep.combined,
                rep.p_value_pivotal,
                rep.p_value,
                list(rep.selected_labels),
                rep.extras["mean_abs_theta"],
                rep.extras["mean_abs_theta_selected"],
                ";".join(rep.flags),
            )
        )
    return RollingResult(records, window, level)


def write_rolling_csv(result, path):
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in result.records:
            w.writerow(r.csv_row())
