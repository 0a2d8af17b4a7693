"""Force/time skill metrics for single episodes and batches, plus the report file format."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

METRICS = ("F_max", "F_i", "F_FFT", "t_e")


@dataclass(frozen=True)
class ForceSeries:
    """Force modulus sampled at a uniform rate."""

    times: np.ndarray
    forces: np.ndarray
    sample_rate: float = 50.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        f = np.asarray(self.forces, dtype=np.float64)
        if t.shape != f.shape or t.ndim != 1:
            raise ValueError("times and forces must be 1-d arrays of equal length")
        if np.any(f < 0):
            raise ValueError("force modulus must be non-negative")
        if t.size > 1:
            gaps = np.diff(t)
            if np.any(gaps <= 0) or not np.allclose(gaps, 1.0 / self.sample_rate, rtol=1e-6, atol=1e-12):
                raise ValueError("timestamps must be strictly increasing with spacing 1/sample_rate")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "forces", f)

    @classmethod
    def uniform(cls, forces, sample_rate: float = 50.0, t0: Optional[float] = None) -> "ForceSeries":
        """Samples at ``t0 + k / sample_rate`` (``t0`` defaults to one period)."""
        f = np.asarray(forces, dtype=np.float64)
        start = 1.0 / sample_rate if t0 is None else t0
        return cls(start + np.arange(f.size) / sample_rate, f, sample_rate)

    def __len__(self):
        return self.forces.size


def max_force(series: ForceSeries) -> float:
    if len(series) == 0:
        raise ValueError("empty force series")
    return float(np.max(series.forces))


def integral_force(series: ForceSeries) -> float:
    """Trapezoidal time integral of the force modulus (N*s)."""
    if len(series) < 2:
        raise ValueError("integral needs at least two samples")
    f, t = series.forces, series.times
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))


def amplitude_spectrum(signal, sample_rate: float):
    """One-sided amplitude spectrum ``2|X_k|/N`` of the mean-removed signal, k = 1..N//2."""
    x = np.asarray(signal, dtype=np.float64)
    x = x - x.mean()
    n = x.size
    spectrum = np.fft.rfft(x)
    k = np.arange(1, n // 2 + 1)
    return k * sample_rate / n, 2.0 * np.abs(spectrum[k]) / n


def force_fft_band(series: ForceSeries, f_lo: float = 1.0, f_hi: float = 13.0,
                   pad_to_resolve: bool = False) -> float:
    """Sum of amplitude-spectrum values over bins with ``f_lo <= f <= f_hi``.

    Series shorter than ``1/f_lo`` cannot resolve the lower band edge and
    are rejected, unless ``pad_to_resolve`` is set, in which case the
    mean-removed signal is zero-padded to the minimal resolvable length and
    normalized by the padded length.
    """
    if not 0 <= f_lo < f_hi:
        raise ValueError("need 0 <= f_lo < f_hi")
    n = len(series)
    fs = series.sample_rate
    x = series.forces - series.forces.mean() if n else series.forces
    need = int(math.ceil(fs / f_lo - 1e-9)) if f_lo > 0 else 1
    if n < need:
        if not pad_to_resolve or n == 0:
            raise ValueError(f"series of {n / fs:.3f} s cannot resolve {f_lo} Hz")
        x = np.concatenate([x, np.zeros(need - n)])
    freqs, amps = amplitude_spectrum(x, fs)
    tol = 1e-9 * fs
    band = (freqs >= f_lo - tol) & (freqs <= f_hi + tol)
    return float(np.sum(amps[band]))


def execution_time(success: bool, steps: int, dt: float, done: bool = True) -> Optional[float]:
    """Time of the success event, or None when the episode failed."""
    if not done:
        raise ValueError("episode has not finished")
    return steps * dt if success else None


@dataclass(frozen=True)
class MetricsReport:
    F_max: float
    F_i: float
    F_FFT: float
    t_e: Optional[float]
    success: bool

    def get(self, name: str) -> Optional[float]:
        return getattr(self, name)


def episode_metrics(episode, pad_fft: bool = True) -> MetricsReport:
    """Metrics for an ``expert.Episode``-like object (forces, success, steps, dt)."""
    fs = 1.0 / episode.dt
    series = ForceSeries.uniform(episode.forces, fs)
    return MetricsReport(
        F_max=max_force(series),
        F_i=integral_force(series) if len(series) > 1 else 0.0,
        F_FFT=force_fft_band(series, pad_to_resolve=pad_fft),
        t_e=execution_time(episode.success, episode.steps, episode.dt),
        success=bool(episode.success),
    )


@dataclass(frozen=True)
class Summary:
    median: float
    sd: float
    q1: float
    q3: float
    n: int


def summarize(values: Sequence[float]) -> Summary:
    """Median, population SD and linear-interpolation quartiles; NaNs when empty."""
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        nan = float("nan")
        return Summary(nan, nan, nan, nan, 0)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return Summary(float(med), float(np.std(v)), float(q1), float(q3), int(v.size))


@dataclass
class BatchReport:
    episodes: list  # of MetricsReport
    episode_ids: list = field(default_factory=list)
    label: str = "run"

    def __post_init__(self):
        if not self.episodes:
            raise ValueError("batch report needs at least one episode")
        if not self.episode_ids:
            self.episode_ids = list(range(len(self.episodes)))

    @property
    def success_rate(self) -> float:
        return sum(e.success for e in self.episodes) / len(self.episodes)

    def summary(self) -> dict:
        return {m: summarize([e.get(m) for e in self.episodes]) for m in METRICS}


def batch_report(reports: Sequence[MetricsReport], episode_ids=None, label: str = "run") -> BatchReport:
    return BatchReport(list(reports), list(episode_ids or []), label)


# --- report files ----------------------------------------------------------------

_REPORT_HEADER = "# canalrl-report v1"
_COLUMNS = ("episode_id", "success") + METRICS


def _num(x) -> str:
    if x is None:
        return "NA"
    return repr(float(x))


def format_report(report: BatchReport) -> str:
    lines = [f"{_REPORT_HEADER} label={report.label}", "\t".join(_COLUMNS)]
    for eid, e in zip(report.episode_ids, report.episodes):
        lines.append("\t".join([str(eid), str(int(e.success))] + [_num(e.get(m)) for m in METRICS]))
    lines.append("# summary")
    lines.append("metric\tmedian\tsd\tq1\tq3\tn")
    for m, s in report.summary().items():
        lines.append("\t".join([m, _num(s.median), _num(s.sd), _num(s.q1), _num(s.q3), str(s.n)]))
    lines.append(f"success_rate\t{_num(report.success_rate)}")
    return "\n".join(lines) + "\n"


def write_report(report: BatchReport, path) -> None:
    Path(path).write_text(format_report(report))


def _parse_float(tok: str, where: str) -> Optional[float]:
    if tok == "NA":
        return None
    try:
        return float(tok)
    except ValueError:
        raise ValueError(f"{where}: bad number {tok!r}") from None


def read_report(path) -> BatchReport:
    """Parse a report file; the per-episode rows are authoritative, the summary is recomputed."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(_REPORT_HEADER):
        raise ValueError(f"{path}:1: not a canalrl report")
    label = "run"
    for tok in lines[0][len(_REPORT_HEADER):].split():
        if tok.startswith("label="):
            label = tok[len("label="):]
    if len(lines) < 2 or lines[1].split("\t") != list(_COLUMNS):
        raise ValueError(f"{path}:2: unexpected column header")
    ids, eps = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if line.startswith("# summary"):
            break
        where = f"{path}:{lineno}"
        parts = line.split("\t")
        if len(parts) != len(_COLUMNS):
            raise ValueError(f"{where}: expected {len(_COLUMNS)} fields, got {len(parts)}")
        if parts[1] not in ("0", "1"):
            raise ValueError(f"{where}: success flag must be 0 or 1")
        vals = [_parse_float(p, where) for p in parts[2:]]
        if any(v is None for v in vals[:3]):
            raise ValueError(f"{where}: force metrics cannot be NA")
        ids.append(parts[0])
        eps.append(MetricsReport(vals[0], vals[1], vals[2], vals[3], parts[1] == "1"))
    if not eps:
        raise ValueError(f"{path}: no episode rows")
    return BatchReport(eps, ids, label)


@dataclass
class ComparisonTable:
    """Metric rows by run columns; each cell is a ``Summary``."""

    labels: list
    cells: dict  # metric -> list of Summary, one per label
    success_rates: list

    @property
    def rows(self) -> list:
        return list(self.cells)


def compare_reports(reports: Sequence[BatchReport]) -> ComparisonTable:
    if not reports:
        raise ValueError("need at least one report")
    labels, seen = [], {}
    for r in reports:
        lab = r.label
        if lab in seen:
            seen[lab] += 1
            lab = f"{lab}#{seen[lab]}"
        else:
            seen[lab] = 0
        labels.append(lab)
    summaries = [r.summary() for r in reports]
    cells = {m: [s[m] for s in summaries] for m in METRICS}
    return ComparisonTable(labels, cells, [r.success_rate for r in reports])


def format_comparison(table: ComparisonTable) -> str:
    stats = ("median", "sd", "q1", "q3", "n")
    head = ["metric"] + [f"{lab}:{st}" for lab in table.labels for st in stats]
    lines = ["\t".join(head)]
    for m, cells in table.cells.items():
        row = [m]
        for c in cells:
            row += [_num(c.median), _num(c.sd), _num(c.q1), _num(c.q3), str(c.n)]
        lines.append("\t".join(row))
    lines.append("\t".join(["success_rate"] + [_num(s) for s in table.success_rates]))
    return "\n".join(lines) + "\n"
