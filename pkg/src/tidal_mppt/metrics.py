"""Comparison metrics over simulated time series: settling, ripple, regulation, efficiency, distortion."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MetricsError, TidalError


@dataclass(frozen=True)
class AnalysisWindow:
    t_start_s: float = 0.0
    t_end_s: Optional[float] = None  # None: to the end of the run

    def __post_init__(self):
        if self.t_start_s < 0:
            raise MetricsError("window start must be >= 0")
        if self.t_end_s is not None and not self.t_end_s > self.t_start_s:
            raise MetricsError("window end must be after its start")

    def describe(self) -> str:
        end = "end" if self.t_end_s is None else f"{self.t_end_s:g} s"
        return f"t in [{self.t_start_s:g} s, {end}]"


@dataclass(frozen=True)
class MetricWindows:
    """Window conventions of a comparison report."""

    extrema: AnalysisWindow = AnalysisWindow(1.0)
    regulation: AnalysisWindow = AnalysisWindow(0.25)
    efficiency: AnalysisWindow = AnalysisWindow(0.25)
    harmonics: AnalysisWindow = AnalysisWindow(1.0)
    response_band: float = 0.05

    def describe(self) -> list[str]:
        return [
            f"response time: last exit from a +-{100 * self.response_band:g}% band around the mean of the final 10% of v_dc",
            f"V_DC min/max, delta V_DC, delta V_AC: {self.extrema.describe()}",
            f"regulation = 100 (max - min) / mean of v_dc: {self.regulation.describe()}",
            f"efficiency = 100 mean(P_dc) / mean(0.5 rho A Cp_max U^3): {self.efficiency.describe()}",
            f"HDR of v_a, Hann window over whole fundamental periods: {self.harmonics.describe()}",
        ]


def _as_series(t, v):
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.ndim != 1 or t.shape != v.shape:
        raise MetricsError("time and value arrays must be 1-D and equally long")
    if t.size == 0:
        raise MetricsError("series is empty")
    return t, v


def _select(t, v, window: AnalysisWindow):
    t, v = _as_series(t, v)
    eps = 1e-9 * max(1.0, abs(t[-1]))
    end = t[-1] if window.t_end_s is None else window.t_end_s
    if window.t_start_s < t[0] - eps or end > t[-1] + eps or window.t_start_s > t[-1]:
        raise MetricsError(f"window {window.describe()} lies outside the series [{t[0]:g}, {t[-1]:g}] s")
    mask = (t >= window.t_start_s - eps) & (t <= end + eps)
    if not mask.any():
        raise MetricsError(f"window {window.describe()} contains no samples")
    return t[mask], v[mask]


# -- settling ----------------------------------------------------------------------


def settling(t, v, band_fraction: float = 0.05) -> tuple[float, bool]:
    """``(time, settled)``: time since the first sample after which ``v`` stays in band.

    The band is ``band_fraction`` of the mean of the last 10% of samples.  A
    series that leaves the band at its final sample never settled; the full
    duration is returned with ``settled = False``.
    """
    t, v = _as_series(t, v)
    tail = max(1, int(math.ceil(0.1 * v.size)))
    final = float(np.mean(v[-tail:]))
    outside = np.abs(v - final) > band_fraction * abs(final)
    if not outside.any():
        return 0.0, True
    last = int(np.nonzero(outside)[0][-1])
    if last == v.size - 1:
        return float(t[-1] - t[0]), False
    return float(t[last + 1] - t[0]), True


def response_time(t, v, band_fraction: float = 0.05) -> float:
    return settling(t, v, band_fraction)[0]


# -- ripple and regulation -----------------------------------------------------------


@dataclass(frozen=True)
class RippleStats:
    minimum: float
    maximum: float
    delta: float
    mean: float


def ripple_stats(t, v, window: AnalysisWindow) -> RippleStats:
    _, vw = _select(t, v, window)
    lo, hi = float(vw.min()), float(vw.max())
    return RippleStats(lo, hi, hi - lo, float(vw.mean()))


def ac_envelope(t, v):
    """Per-cycle peak magnitude of an AC waveform, one value per full cycle.

    Cycles are delimited by upward zero crossings; the value is stamped at the
    middle of its cycle.
    """
    t, v = _as_series(t, v)
    up = np.nonzero((v[:-1] < 0.0) & (v[1:] >= 0.0))[0] + 1
    if up.size < 2:
        raise MetricsError("waveform has fewer than two full cycles")
    times, peaks = [], []
    for a, b in zip(up[:-1], up[1:]):
        times.append(0.5 * (t[a] + t[b]))
        peaks.append(float(np.max(np.abs(v[a:b]))))
    return np.array(times), np.array(peaks)


def ripple_stats_ac(t, v_phase, window: AnalysisWindow) -> RippleStats:
    te, pe = ac_envelope(t, v_phase)
    end = te[-1] if window.t_end_s is None else window.t_end_s
    mask = (te >= window.t_start_s) & (te <= end)
    if not mask.any():
        raise MetricsError(f"no complete AC cycle inside {window.describe()}")
    sel = pe[mask]
    lo, hi = float(sel.min()), float(sel.max())
    return RippleStats(lo, hi, hi - lo, float(sel.mean()))


def regulation_pct(t, v, window: AnalysisWindow) -> float:
    """Peak-to-peak excursion as a percentage of the window mean."""
    _, vw = _select(t, v, window)
    mean = float(vw.mean())
    if not mean > 0:
        raise MetricsError("regulation needs a positive window mean")
    return 100.0 * float(vw.max() - vw.min()) / mean


# -- efficiency ----------------------------------------------------------------------


def efficiency_from_series(t, p_dc, flow_speed, mpp_power_coefficient: float, window: AnalysisWindow) -> float:
    """``100 * mean(P_dc) / mean(k U^3)`` over the window, capped at 100."""
    tw, pw = _select(t, p_dc, window)
    _, uw = _select(t, flow_speed, window)
    ideal = mpp_power_coefficient * np.mean(uw**3)
    if not ideal > 0:
        raise MetricsError("ideal power over the window is not positive")
    return float(min(max(100.0 * np.mean(pw) / ideal, 0.0), 100.0))


def efficiency(result, window: AnalysisWindow) -> float:
    return efficiency_from_series(
        result["t"], result["P_dc"], result["U"], result.metadata["mpp_power_coefficient"], window
    )


# -- harmonic distortion -----------------------------------------------------------


def harmonic_amplitudes(t, v, fundamental_hz: float, window: AnalysisWindow, max_harmonic: int = 50):
    """Hann-weighted amplitudes at 1..K times the fundamental over whole periods.

    Evaluated at the exact harmonic frequencies rather than FFT bins, so a
    fundamental that is not commensurate with the sample rate does not smear.
    """
    if not fundamental_hz > 0 or not math.isfinite(fundamental_hz):
        raise MetricsError("fundamental frequency must be positive")
    tw, vw = _select(t, v, window)
    dt = float(np.median(np.diff(tw))) if tw.size > 1 else 0.0
    if dt <= 0:
        raise MetricsError("need at least two samples")
    n_periods = int(math.floor((tw[-1] - tw[0] + dt) * fundamental_hz + 1e-9))
    if n_periods < 10:
        raise MetricsError(f"window holds {n_periods} fundamental periods; at least 10 are required")
    n = int(round(n_periods / (fundamental_hz * dt)))
    n = min(n, tw.size)
    x = vw[:n] - np.mean(vw[:n])
    tt = tw[:n] - tw[0]
    w = 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(n) / n)
    nyquist = 0.5 / dt
    k_max = int(min(max_harmonic, math.floor(nyquist / fundamental_hz + 1e-9)))
    if k_max < 1:
        raise MetricsError("fundamental lies above the Nyquist frequency")
    k = np.arange(1, k_max + 1)
    phase = np.exp(-2j * math.pi * np.outer(k * fundamental_hz, tt))
    amps = 2.0 * np.abs(phase @ (w * x)) / np.sum(w)
    return k, amps


def hdr(t, v, fundamental_hz: float, window: AnalysisWindow, max_harmonic: int = 50) -> float:
    """Total harmonic distortion in percent of the fundamental amplitude."""
    _, amps = harmonic_amplitudes(t, v, fundamental_hz, window, max_harmonic)
    if amps[0] <= 1e-12 * max(1.0, float(np.max(amps))):
        raise MetricsError("fundamental component is zero")
    return float(100.0 * math.sqrt(float(np.sum(amps[1:] ** 2))) / amps[0])


# -- comparison report -------------------------------------------------------------


@dataclass
class MetricsReport:
    label: str
    response_time_s: float = math.nan
    settled: bool = False
    v_dc_min: float = math.nan
    v_dc_max: float = math.nan
    delta_v_dc: float = math.nan
    regulation_pct: float = math.nan
    delta_v_ac: float = math.nan
    efficiency_pct: float = math.nan
    hdr_pct: float = math.nan
    windows: MetricWindows = field(default_factory=MetricWindows)
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


def report_for(label: str, result, windows: MetricWindows = MetricWindows()) -> MetricsReport:
    """All metrics of one run; a failing metric raises with the label attached."""
    try:
        t = result["t"]
        rt, ok = settling(t, result["v_dc"], windows.response_band)
        dc = ripple_stats(t, result["v_dc"], windows.extrema)
        ac = ripple_stats_ac(t, result["v_a"], windows.extrema)
        reg = regulation_pct(t, result["v_dc"], windows.regulation)
        eta = efficiency(result, windows.efficiency)
        _, omega = _select(t, result["omega"], windows.harmonics)
        f1 = result.metadata["pole_pairs"] * float(np.mean(omega)) / (2.0 * math.pi)
        thd = hdr(t, result["v_a"], f1, windows.harmonics)
    except TidalError as exc:
        raise MetricsError(f"{label}: {exc}") from exc
    return MetricsReport(label, rt, ok, dc.minimum, dc.maximum, dc.maximum - dc.minimum, reg, ac.delta, eta, thd, windows)


def compare_report(results, windows: MetricWindows = MetricWindows()) -> list[MetricsReport]:
    """One report per ``(label, result)`` pair, in the given order.

    ``result`` may be ``None``, an error message or an exception for a failed
    run; that row is kept with its error text instead of aborting the table.
    """
    if not results:
        raise MetricsError("compare_report needs at least one run")
    rows = []
    for label, result in results:
        if result is None or isinstance(result, (str, BaseException)):
            rows.append(MetricsReport(label, windows=windows, error=str(result) if result else "run failed"))
        else:
            rows.append(report_for(label, result, windows))
    return rows


ROWS = (
    ("Response time (s)", "response_time_s"),
    ("V_DC,min (V)", "v_dc_min"),
    ("V_DC,max (V)", "v_dc_max"),
    ("Delta V_DC (V)", "delta_v_dc"),
    ("Voltage regulation (%)", "regulation_pct"),
    ("Delta V_AC (V)", "delta_v_ac"),
    ("Efficiency (%)", "efficiency_pct"),
    ("HDR (%)", "hdr_pct"),
)

CSV_FIELDS = ("label", "status") + tuple(attr for _, attr in ROWS) + ("settled",)


def _fmt(value: float) -> str:
    return "nan" if not math.isfinite(value) else f"{value:.6g}"


def report_csv(reports: list[MetricsReport], path=None) -> str:
    buf = io.StringIO()
    for line in (reports[0].windows if reports else MetricWindows()).describe():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in reports:
        status = "failed" if r.failed else "ok"
        w.writerow([r.label, status] + [_fmt(getattr(r, a)) for _, a in ROWS] + [str(r.settled).lower()])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def report_table(reports: list[MetricsReport]) -> str:
    """Aligned text table: one row per metric, one column per controller."""
    windows = reports[0].windows if reports else MetricWindows()
    lines = [f"# {line}" for line in windows.describe()]
    header = ["Parameter"] + [r.label for r in reports]
    body = []
    for name, attr in ROWS:
        cells = []
        for r in reports:
            if r.failed:
                cells.append("FAILED")
            else:
                cell = f"{getattr(r, attr):.2f}"
                if attr == "response_time_s" and not r.settled:
                    cell += "*"
                cells.append(cell)
        body.append([name] + cells)
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]

    def fmt(row):
        return "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(row))

    lines.append(fmt(header))
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(fmt(row) for row in body)
    if any(not r.settled and not r.failed for r in reports):
        lines.append("* never settled inside the band; value is the run duration")
    for r in reports:
        if r.failed:
            lines.append(f"{r.label}: {r.error}")
    return "\n".join(lines) + "\n"
