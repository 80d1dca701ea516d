"""Regression metrics, reference baselines, and training-curve rendering.

MAE, RMSE and the coefficient of determination are computed in float64.
R squared uses the mean of the targets it is evaluated on (for validation
splits: the validation mean, not the training mean).

Curves are emitted as hand-rolled SVG plus a CSV of the raw records; output
bytes are a pure function of the report, so re-rendering an unchanged report
reproduces identical files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


class MetricsError(ValueError):
    """Undefined metric (empty/mismatched inputs, constant targets for R2)."""


def _as_vectors(pred, target):
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise MetricsError(
            f"prediction and target lengths differ: {p.size} vs {t.size}")
    if p.size == 0:
        raise MetricsError("metrics over empty inputs are undefined")
    return p, t


def mae(pred, target) -> float:
    p, t = _as_vectors(pred, target)
    return float(np.abs(p - t).mean())


def rmse(pred, target) -> float:
    p, t = _as_vectors(pred, target)
    return float(np.sqrt(((p - t) ** 2).mean()))


def r2(pred, target) -> float:
    p, t = _as_vectors(pred, target)
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise MetricsError("R2 is undefined for constant targets")
    ss_res = float(((p - t) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class EpochRecord:
    fold: int
    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float
    val_r2: float


@dataclass(frozen=True)
class Summary:
    mae: float
    rmse: float
    r2: float


@dataclass(frozen=True)
class Baselines:
    mean_predictor_mae: float
    linreg_mae: float
    linreg_rmse: float
    linreg_r2: float


@dataclass
class MetricsReport:
    records: list[EpochRecord]
    summary: Summary
    baselines: Baselines

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "summary": asdict(self.summary),
            "baselines": asdict(self.baselines),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        return cls(records=[EpochRecord(**r) for r in doc["records"]],
                   summary=Summary(**doc["summary"]),
                   baselines=Baselines(**doc["baselines"]))


def mean_predictor_mae(targets, fold_of) -> float:
    """MAE of predicting each fold's training-target mean, averaged over folds."""
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    fold_of = np.asarray(fold_of)
    per_fold = []
    for f in np.unique(fold_of):
        val = fold_of == f
        per_fold.append(mae(np.full(val.sum(), y[~val].mean()), y[val]))
    return float(np.mean(per_fold))


def linreg_baseline(features, targets, fold_of) -> tuple[float, float, float]:
    """Ordinary least squares on flattened features over the same CV splits.

    Solved by normal equations with a 1e-8 ridge jitter for conditioning.
    Returns (mae, rmse, r2) averaged across folds. Raises MetricsError when
    the design matrix is degenerate beyond what the jitter can rescue.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    fold_of = np.asarray(fold_of)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise MetricsError(f"bad design matrix shape {x.shape} for {y.size} targets")
    if not (np.ptp(x, axis=0) > 0).any():
        raise MetricsError("degenerate design: every feature column is constant")

    maes, rmses, r2s = [], [], []
    for f in np.unique(fold_of):
        val = fold_of == f
        xtr = np.column_stack([x[~val], np.ones((~val).sum())])
        xva = np.column_stack([x[val], np.ones(val.sum())])
        gram = xtr.T @ xtr
        gram[np.diag_indices_from(gram)] += 1e-8
        try:
            coef = np.linalg.solve(gram, xtr.T @ y[~val])
        except np.linalg.LinAlgError as exc:
            raise MetricsError(f"normal equations unsolvable: {exc}") from None
        if not np.all(np.isfinite(coef)):
            raise MetricsError("normal equations produced non-finite coefficients")
        pred = xva @ coef
        maes.append(mae(pred, y[val]))
        rmses.append(rmse(pred, y[val]))
        r2s.append(r2(pred, y[val]))
    return float(np.mean(maes)), float(np.mean(rmses)), float(np.mean(r2s))


# fold colors for the SVG curves
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

_CHART_W, _CHART_H, _PAD = 640, 400, 54


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _line_chart(title: str, series: list[tuple[str, list[float], list[float]]]) -> str:
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    span_x = _CHART_W - 2 * _PAD
    span_y = _CHART_H - 2 * _PAD

    def sx(x):
        return _PAD + (x - x_lo) / (x_hi - x_lo) * span_x

    def sy(y):
        return _CHART_H - _PAD - (y - y_lo) / (y_hi - y_lo) * span_y

    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
              f'width="{_CHART_W}" height="{_CHART_H}" '
              f'viewBox="0 0 {_CHART_W} {_CHART_H}">\n')
    out.write('<rect width="100%" height="100%" fill="white"/>\n')
    out.write(f'<text x="{_CHART_W // 2}" y="24" font-family="monospace" '
              f'font-size="15" text-anchor="middle">{title}</text>\n')

    for i in range(5):
        y_val = y_lo + (y_hi - y_lo) * i / 4.0
        y = sy(y_val)
        out.write(f'<line x1="{_PAD}" y1="{_fmt(y)}" x2="{_CHART_W - _PAD}" '
                  f'y2="{_fmt(y)}" stroke="#dddddd"/>\n')
        out.write(f'<text x="{_PAD - 6}" y="{_fmt(y + 4)}" font-family="monospace" '
                  f'font-size="11" text-anchor="end">{y_val:.4g}</text>\n')
    for i in range(5):
        x_val = x_lo + (x_hi - x_lo) * i / 4.0
        x = sx(x_val)
        out.write(f'<text x="{_fmt(x)}" y="{_CHART_H - _PAD + 16}" '
                  f'font-family="monospace" font-size="11" '
                  f'text-anchor="middle">{x_val:.4g}</text>\n')
    out.write(f'<line x1="{_PAD}" y1="{_CHART_H - _PAD}" x2="{_CHART_W - _PAD}" '
              f'y2="{_CHART_H - _PAD}" stroke="black"/>\n')
    out.write(f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" '
              f'y2="{_CHART_H - _PAD}" stroke="black"/>\n')

    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}"
                          for x, y in zip(xs, ys))
        out.write(f'<polyline points="{points}" fill="none" '
                  f'stroke="{color}" stroke-width="1.5"/>\n')
        ly = 40 + 16 * idx
        out.write(f'<rect x="{_CHART_W - 130}" y="{ly - 9}" width="10" '
                  f'height="10" fill="{color}"/>\n')
        out.write(f'<text x="{_CHART_W - 114}" y="{ly}" font-family="monospace" '
                  f'font-size="11">{label}</text>\n')

    out.write("</svg>\n")
    return out.getvalue()


def write_metrics_csv(records: list[EpochRecord], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "epoch", "train_loss", "val_mae",
                         "val_rmse", "val_r2"])
        for r in records:
            writer.writerow([r.fold, r.epoch, repr(r.train_loss),
                             repr(r.val_mae), repr(r.val_rmse),
                             repr(r.val_r2)])


def render_curves(report: MetricsReport, out_dir: Path | str) -> list[Path]:
    """Write mae.svg, rmse.svg, r2.svg and metrics.csv; deterministic bytes."""
    if not report.records:
        raise MetricsError("cannot render curves from an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    folds = sorted({r.fold for r in report.records})
    written = []
    for metric, title in (("val_mae", "validation MAE per epoch"),
                          ("val_rmse", "validation RMSE per epoch"),
                          ("val_r2", "validation R2 per epoch")):
        series = []
        for f in folds:
            rows = [r for r in report.records if r.fold == f]
            rows.sort(key=lambda r: r.epoch)
            series.append((f"fold {f}", [float(r.epoch) for r in rows],
                           [getattr(r, metric) for r in rows]))
        name = {"val_mae": "mae.svg", "val_rmse": "rmse.svg",
                "val_r2": "r2.svg"}[metric]
        path = out / name
        path.write_text(_line_chart(title, series), encoding="utf-8")
        written.append(path)

    csv_path = out / "metrics.csv"
    write_metrics_csv(report.records, csv_path)
    written.append(csv_path)
    return written
