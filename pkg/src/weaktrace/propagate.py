"""Time-domain simulation of a network with vibrating mirrors.

Two engines share one network walk: ``Modal`` carries K Hermite-Gauss
coefficients per arm, ``Grid`` carries the DFT of the transverse profile and
translates it exactly.  Mirror displacements are evaluated at a common time
for the whole traversal (quasi-static).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import re

import numpy as np

from . import kernels
from .detect import DetectorRecord, grid_readout, modal_readout
from .netlang import ValidatedNetwork
from .optics import (
    DEFAULT_K,
    DEFAULT_N,
    Displacer,
    GridField,
    ModalField,
    compile_transfer,
    grid_points,
    hg_mode,
    wavenumbers,
)


@dataclass(frozen=True)
class TimeBase:
    sample_rate: float = 10000.0
    duration: float = 1.0

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate

    def check(self, net: ValidatedNetwork | None = None) -> None:
        n = self.duration * self.sample_rate
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 16:
            raise ValueError("duration * sample_rate must be an integer >= 16")
        if net is not None:
            fmax = max((m.vibration.frequency for m in net.vibrating_mirrors), default=0.0)
            if self.sample_rate <= 2 * fmax:
                raise ValueError(f"sample rate {self.sample_rate} Hz does not resolve {fmax} Hz")


@dataclass(frozen=True)
class Modal:
    K: int = DEFAULT_K

    def __str__(self):
        return f"modal:{self.K}"


@dataclass(frozen=True)
class Grid:
    N: int = DEFAULT_N
    L: float | None = None      # half-width; default 6 beam widths

    def __str__(self):
        return f"grid:{self.N}" + ("" if self.L is None else f",{self.L!r}")


def parse_mode(text: str):
    """``modal:K`` or ``grid:N[,L]``."""
    m = re.fullmatch(r"\s*modal(?::(\d+))?\s*", text)
    if m:
        return Modal(int(m.group(1) or DEFAULT_K))
    m = re.fullmatch(r"\s*grid(?::(\d+)(?:,([0-9.eE+-]+))?)?\s*", text)
    if m:
        return Grid(int(m.group(1) or DEFAULT_N), float(m.group(2)) if m.group(2) else None)
    raise ValueError(f"bad mode {text!r}; expected modal:K or grid:N[,L]")


def displacements(net: ValidatedNetwork, times: np.ndarray) -> dict[str, np.ndarray]:
    """Mirror shifts in units of the beam width, keyed by mirror name."""
    out = {}
    for m in net.vibrating_mirrors:
        v = m.vibration
        out[m.name] = v.amplitude * np.sin(2 * np.pi * v.frequency * times + v.phase)
    return out


def propagate_static(net: ValidatedNetwork) -> dict[str, complex]:
    """Fundamental-mode amplitude at the start of every arm, vibrations off.

    Each source injects unit power.
    """
    tr = compile_transfer(net)
    src = np.array([net.element(n).kind == "source" for n, _ in net.inputs], dtype=complex)
    return {a: complex(row @ src) for a, row in tr.start.items()}


class _ModalEngine:
    def __init__(self, net: ValidatedNetwork, mode: Modal):
        self.net = net
        self.K = mode.K
        self.disp = Displacer(mode.K)

    def fields(self, times):
        T = len(times)
        shifts = displacements(self.net, times)

        def source(el):
            c = np.zeros((T, self.K), dtype=complex)
            c[:, 0] = 1.0
            return c

        def inline(el, x):
            if el.name in shifts:
                return self.disp.apply(x, shifts[el.name])
            return x

        _, end = self.net.walk(source, inline)
        return end

    def readout(self, x, T):
        if x is None:
            return np.zeros(T), np.zeros(T)
        return modal_readout(x)

    def to_field(self, x):
        c = np.zeros(self.K, dtype=complex) if x is None else x[0]
        return ModalField(c, self.net.beam.width)


class _GridEngine:
    def __init__(self, net: ValidatedNetwork, mode: Grid):
        self.net = net
        self.width = net.beam.width
        self.N = mode.N
        self.L = 6.0 * self.width if mode.L is None else mode.L
        GridField(np.zeros(self.N, dtype=complex), self.width, self.L)  # validates N, L
        g = hg_mode(0, grid_points(self.N, self.L), self.width)
        self.g_hat = np.fft.fft(g.astype(complex))
        self.k = wavenumbers(self.N, self.L)
        self.dk = math.pi / self.L

    def fields(self, times):
        T = len(times)
        shifts = displacements(self.net, times)

        def source(el):
            return np.broadcast_to(self.g_hat, (T, self.N)).copy()

        def inline(el, x):
            if el.name in shifts:
                # every array in the walk is freshly allocated, so in place is safe
                kernels.translate_inplace(x, shifts[el.name] * self.width, self.dk)
            return x

        _, end = self.net.walk(source, inline, split=kernels.beam_split)
        return end

    def readout(self, x, T):
        if x is None:
            return np.zeros(T), np.zeros(T)
        return grid_readout(x, self.L)

    def to_field(self, x):
        s = np.zeros(self.N, dtype=complex) if x is None else np.fft.ifft(x[0])
        return GridField(s, self.width, self.L)


def _engine(net, mode):
    if isinstance(mode, Modal):
        return _ModalEngine(net, mode)
    if isinstance(mode, Grid):
        return _GridEngine(net, mode)
    raise TypeError(f"unknown mode {mode!r}")


def propagate_sample(net: ValidatedNetwork, t: float, mode=Modal()) -> dict:
    """Field arriving at each detector at time ``t``."""
    eng = _engine(net, mode)
    end = eng.fields(np.array([float(t)]))
    return {d.name: eng.to_field(end[d.arm]) for d in net.detectors}


def output_ports(net: ValidatedNetwork) -> list[tuple[str, str, str]]:
    """``(record name, arm, kind)`` for every way out of the network."""
    dets = {d.arm: d for d in net.detectors}
    out = []
    for a in net.outputs:
        if a in dets:
            out.append((dets[a].name, a, dets[a].detector_kind))
        else:
            out.append((a, a, "open"))
    return out


def simulate(
    net: ValidatedNetwork,
    tb: TimeBase = TimeBase(),
    mode=Modal(),
    ports: str = "detectors",
    chunk: int = 64,
    workers: int | None = None,
) -> dict[str, DetectorRecord]:
    """Run the experiment; one record per detector (``ports="all"`` adds open outputs).

    Samples are evaluated in chunks, optionally on a thread pool; results are
    collected in time order so the output does not depend on ``workers``.
    """
    tb.check(net)
    eng = _engine(net, mode)
    selected = output_ports(net)
    if ports == "detectors":
        selected = [p for p in selected if p[2] != "open"]
    elif ports != "all":
        raise ValueError("ports must be 'detectors' or 'all'")
    times = tb.times
    bounds = [(i, min(i + chunk, len(times))) for i in range(0, len(times), chunk)]

    def run(b):
        ts = times[b[0]:b[1]]
        end = eng.fields(ts)
        return [eng.readout(end[arm], len(ts)) for _, arm, _ in selected]

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]

    records = {}
    for j, (name, _, kind) in enumerate(selected):
        S = np.concatenate([p[j][0] for p in parts])
        P = np.concatenate([p[j][1] for p in parts])
        if kind == "bucket":
            S = P.copy()
        records[name] = DetectorRecord(name, S, P, tb, kind)
    return records


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / ||b||``."""
    nb = math.sqrt(float(np.sum(b * b)))
    return math.sqrt(float(np.sum((a - b) ** 2))) / nb if nb > 0 else math.sqrt(float(np.sum(a * a)))
