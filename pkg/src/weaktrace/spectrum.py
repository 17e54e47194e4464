"""Power spectra, peak readout and log-log exponent fits."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

NUMERIC_FLOOR = 1e-18


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """One-sided spectrum calibrated so a bin-centred unit sinusoid peaks at 1.0.

    DC and Nyquist bins hold the squared mean / Nyquist amplitude.
    """

    freqs: np.ndarray
    power: np.ndarray
    window: str
    sample_rate: float
    n: int

    @property
    def resolution(self) -> float:
        return self.sample_rate / self.n

    def bin(self, f: float) -> int:
        if not 0 <= f <= self.sample_rate / 2:
            raise ValueError(f"frequency {f} Hz outside 0..{self.sample_rate / 2} Hz")
        return int(round(f / self.resolution))

    def parseval_sum(self) -> float:
        """Sum of bins weighted back to the mean square of the (windowed) series."""
        w = np.full(len(self.power), 0.5)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * self.power))


def power_spectrum(rec, window: str = "rect", channel: str = "S", sample_rate: float | None = None) -> PowerSpectrum:
    """Spectrum of a detector record (``channel`` ``"S"`` or ``"P"``) or a bare series."""
    if hasattr(rec, "timebase"):
        x = np.asarray(getattr(rec, channel), dtype=float)
        fs = rec.timebase.sample_rate
    else:
        if sample_rate is None:
            raise ValueError("sample_rate required for a bare series")
        x = np.asarray(rec, dtype=float)
        fs = sample_rate
    n = len(x)
    if n < 16:
        raise ValueError("need at least 16 samples")
    if window == "rect":
        w = np.ones(n)
    elif window == "hann":
        w = np.hanning(n + 1)[:-1]   # periodic
    else:
        raise ValueError(f"unknown window {window!r}")
    X = np.fft.rfft(x * w) / w.sum()
    p = np.abs(X) ** 2
    p[1:] *= 4.0
    if n % 2 == 0:
        p[-1] /= 4.0
    return PowerSpectrum(np.fft.rfftfreq(n, 1.0 / fs), p, window, fs, n)


def peak_power(spec: PowerSpectrum, f: float) -> float:
    """Largest power within one bin of ``f``."""
    k = spec.bin(f)
    lo, hi = max(0, k - 1), min(len(spec.power), k + 2)
    return float(spec.power[lo:hi].max())


def noise_floor(spec: PowerSpectrum, f: float, span: int = 20, guard: int = 2) -> float:
    """Median power in a band around ``f``, excluding the peak's neighbourhood."""
    k = spec.bin(f)
    idx = np.arange(max(1, k - span), min(len(spec.power), k + span + 1))
    idx = idx[np.abs(idx - k) > guard]
    return float(np.median(spec.power[idx])) if len(idx) else 0.0


@dataclass(frozen=True)
class Peak:
    label: str
    frequency: float
    power: float
    floor: float


def peak_table(spec: PowerSpectrum, lines: dict[str, float]) -> list[Peak]:
    nyq = spec.sample_rate / 2
    return [
        Peak(label, f, peak_power(spec, f), noise_floor(spec, f))
        for label, f in lines.items()
        if 0 < f <= nyq
    ]


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r2: float


def fit_exponent(points) -> ExponentFit:
    """Least squares of ``ln(power)`` on ``ln(eps)``."""
    pts = [(float(e), float(p)) for e, p in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(e <= 0 or p <= 0 for e, p in pts):
        raise ValueError("exponent fit needs positive eps and power")
    x = np.log([e for e, _ in pts])
    y = np.log([p for _, p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(slope), float(intercept), r2)


def write_csv(spec: PowerSpectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "power"])
        for f, p in zip(spec.freqs, spec.power):
            w.writerow([repr(float(f)), repr(float(p))])


def mirror_lines(mirrors) -> dict[str, float]:
    """Labels for every mirror frequency and second-order combination."""
    out: dict[str, float] = {}
    fs = [(m.name, m.vibration.frequency) for m in mirrors]
    for n, f in fs:
        out[f"f_{n}"] = f
    for i, (a, fa) in enumerate(fs):
        out[f"2f_{a}"] = 2 * fa
        for b, fb in fs[i + 1:]:
            out[f"f_{a}+f_{b}"] = fa + fb
            hi, lo = ((a, fa), (b, fb)) if fa >= fb else ((b, fb), (a, fa))
            if hi[1] != lo[1]:
                out[f"f_{hi[0]}-f_{lo[0]}"] = hi[1] - lo[1]
    return out

