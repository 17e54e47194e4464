"""Perturbative expansion of detector amplitudes in the mirror deflections.

Every amplitude is a finite sum over keys ``(mode n, frequency lattice m,
multidegree k)``: the term ``c * eps**|k| * exp(2j*pi*(m . f)*t)`` in mode
``n``.  Mirror ``i`` vibrates with deflection ``eps * rho_i * sin(2 pi f_i t +
phi_i)`` in beam widths, where ``eps`` is the largest amplitude in the
network and ``rho_i`` the mirror's share of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .detect import modal_readout
from .netlang import ValidatedNetwork
from .optics import DEFAULT_K, ladder_derivative, sign_gram

MAX_DEGREE = 3
LEADING_TOL = 1e-13
PRUNE_REL = 1e-15


class LatticeOverflowError(ValueError):
    pass


class _Poly:
    """Sparse amplitude polynomial; supports ``+`` and complex scaling."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict):
        self.terms = terms

    def __add__(self, other):
        if other is None:
            return self
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0.0) + c
        return _Poly(_prune(out))

    __radd__ = __add__

    def __mul__(self, s):
        s = complex(s)
        if s == 0:
            return _Poly({})
        return _Poly({key: c * s for key, c in self.terms.items()})

    __rmul__ = __mul__


def _prune(terms: dict) -> dict:
    if not terms:
        return terms
    big = max(abs(c) for c in terms.values())
    tol = PRUNE_REL * big
    return {key: c for key, c in terms.items() if abs(c) > tol}


def _mirror_expansion(rho: float, phi: float, D: int, K: int):
    """Taylor terms of exp(-x L) with x = rho*sin(theta): (j, shift, scalar, L^j)."""
    L = ladder_derivative(K)
    out = []
    power = np.eye(K)
    for j in range(D + 1):
        if j:
            power = power @ L
        base = (-rho) ** j / math.factorial(j) / (2j) ** j
        for l in range(j + 1):
            shift = j - 2 * l
            scalar = base * math.comb(j, l) * (-1) ** l * complex(math.cos(shift * phi), math.sin(shift * phi))
            out.append((j, shift, scalar, power.copy()))
    return out


@dataclass(frozen=True, eq=False)
class TracePolynomial:
    mirrors: tuple[str, ...]
    freqs: tuple[float, ...]
    eps_ref: float
    K: int
    D: int
    terms: dict = field(default_factory=dict)

    def coefficient(self, n: int, m, k) -> complex:
        return self.terms.get((n, tuple(m), tuple(k)), 0.0)

    def keys_by_order(self, order: int):
        return [key for key in self.terms if sum(key[2]) == order]

    def evaluate(self, times, eps: float | None = None) -> np.ndarray:
        """Mode coefficients at ``times``; shape (T, K)."""
        eps = self.eps_ref if eps is None else eps
        times = np.asarray(times, dtype=float)
        out = np.zeros((len(times), self.K), dtype=complex)
        if not self.terms:
            return out
        keys = list(self.terms)
        f = np.array([np.dot(m, self.freqs) if m else 0.0 for _, m, _ in keys])
        w = np.array([self.terms[key] * eps ** sum(key[2]) for key in keys])
        E = np.exp(2j * np.pi * np.outer(times, f)) * w
        for col, (n, _, _) in enumerate(keys):
            out[:, n] += E[:, col]
        return out

    def reconstruct(self, times, eps: float | None = None, channel: str = "S") -> np.ndarray:
        """Detector signal rebuilt from the truncated amplitude."""
        S, P = modal_readout(self.evaluate(times, eps))
        return S if channel == "S" else P


def _vibration_scale(net: ValidatedNetwork):
    mirrors = net.vibrating_mirrors
    eps_ref = max((m.vibration.amplitude for m in mirrors), default=0.0)
    return mirrors, eps_ref


def _symbolic_walk(net: ValidatedNetwork, D: int, K: int):
    if D > MAX_DEGREE:
        raise LatticeOverflowError(f"max degree {D} exceeds supported {MAX_DEGREE}")
    if D < 0:
        raise ValueError("degree must be non-negative")
    mirrors, eps_ref = _vibration_scale(net)
    M = len(mirrors)
    index = {m.name: i for i, m in enumerate(mirrors)}
    expansions = {
        m.name: _mirror_expansion(m.vibration.amplitude / eps_ref, m.vibration.phase, D, K)
        for m in mirrors
    }
    zero = (0,) * M

    def source(el):
        return _Poly({(0, zero, zero): 1.0 + 0j})

    def inline(el, x):
        if el.name not in index:
            return x
        i = index[el.name]
        out: dict = {}
        for (n, m, k), c in x.terms.items():
            room = D - sum(k)
            for j, shift, scalar, Lj in expansions[el.name]:
                if j > room:
                    break
                col = Lj[:, n]
                for n2 in np.flatnonzero(col):
                    m2 = m[:i] + (m[i] + shift,) + m[i + 1:]
                    k2 = k[:i] + (k[i] + j,) + k[i + 1:]
                    key = (int(n2), m2, k2)
                    out[key] = out.get(key, 0.0) + c * scalar * col[n2]
        return _Poly(_prune(out))

    start, end = net.walk(source, inline)
    meta = (tuple(m.name for m in mirrors), tuple(m.vibration.frequency for m in mirrors), eps_ref)

    def wrap(p):
        return TracePolynomial(*meta, K, D, dict(p.terms) if p is not None else {})

    return {a: wrap(p) for a, p in start.items()}, {a: wrap(p) for a, p in end.items()}


def symbolic_propagate(net: ValidatedNetwork, D: int = 2, K: int = DEFAULT_K) -> dict[str, TracePolynomial]:
    """Amplitude polynomial arriving at each detector, truncated at total degree ``D``."""
    _, end = _symbolic_walk(net, D, K)
    return {d.name: end[d.arm] for d in net.detectors}


# ---------------------------------------------------------------------------
# spectral lines


@dataclass(frozen=True)
class Line:
    label: str
    terms: tuple[str, ...]       # lattice expressions landing on this frequency
    freq_hz: float
    order: int
    coefficient: complex         # phasor amplitude per unit eps**order
    interferes_with_zeroth: bool

    @property
    def amplitude(self) -> float:
        return abs(self.coefficient)


@dataclass(frozen=True)
class LineTable:
    channel: str
    D: int
    eps_ref: float
    mirrors: tuple[str, ...]
    lines: tuple[Line, ...]

    def at(self, freq_hz: float) -> Line | None:
        for ln in self.lines:
            if abs(ln.freq_hz - freq_hz) < 1e-9:
                return ln
        return None

    def find(self, expr: str) -> Line | None:
        """Look a line up by a lattice expression such as ``f_F+f_A``."""
        want = _parse_expr(expr, self.mirrors)
        for ln in self.lines:
            for term in ln.terms:
                if _parse_expr(term, self.mirrors) == want:
                    return ln
        return None


def lattice_label(m, names) -> str:
    pos, neg = [], []
    for c, name in zip(m, names):
        if c == 0:
            continue
        s = (f"{abs(c)}" if abs(c) != 1 else "") + f"f_{name}"
        (pos if c > 0 else neg).append(s)
    return "+".join(pos) + "".join("-" + s for s in neg)


def _parse_expr(expr: str, names) -> tuple:
    import re

    vec = dict.fromkeys(names, 0)
    for sign, mult, name in re.findall(r"([+-]?)\s*(\d*)\s*f_([A-Za-z0-9_]+)", expr):
        if name not in vec:
            return ()
        vec[name] += (-1 if sign == "-" else 1) * int(mult or 1)
    return tuple(vec[n] for n in names)


def classify_lines(tp: TracePolynomial, channel: str = "S") -> LineTable:
    """Collect the intensity cross terms of ``tp`` into spectral lines.

    ``channel="S"`` weighs mode pairs with the quad-cell kernel, ``"P"`` with the
    identity (total power).  Only products of total degree <= D are used, so
    every reported order is complete.  Lattice points that share a numeric
    frequency are merged, as a spectrum cannot separate them.
    """
    if channel == "S":
        kern = sign_gram(K=tp.K).matrix
    elif channel == "P":
        kern = np.eye(tp.K)
    else:
        raise ValueError("channel must be 'S' or 'P'")
    keys = list(tp.terms)
    M = len(tp.mirrors)
    empty = LineTable(channel, tp.D, tp.eps_ref, tp.mirrors, ())
    if not keys or M == 0:
        return empty
    n = np.array([key[0] for key in keys])
    m = np.array([key[1] for key in keys], dtype=np.int64).reshape(len(keys), M)
    order = np.array([sum(key[2]) for key in keys])
    c = np.array([tp.terms[key] for key in keys])

    prod = np.conj(c)[:, None] * c[None, :] * kern[n[:, None], n[None, :]]
    tot = order[:, None] + order[None, :]
    zeroth = (order[:, None] == 0) | (order[None, :] == 0)
    dm = m[None, :, :] - m[:, None, :]
    keep = (tot <= tp.D) & (prod != 0)
    prod, tot, zeroth, dm = prod[keep], tot[keep], zeroth[keep], dm[keep]
    freq = dm @ np.asarray(tp.freqs, dtype=float)
    pos = freq > 1e-9
    prod, tot, zeroth, dm, freq = prod[pos], tot[pos], zeroth[pos], dm[pos], freq[pos]

    # group by (lattice point, order)
    groups: dict = {}
    for p, o, z, v, f in zip(prod, tot, zeroth, map(tuple, dm), freq):
        g = groups.setdefault((v, int(o)), [0j, False, f])
        g[0] += 2.0 * p
        g[1] = g[1] or bool(z)

    by_freq: dict = {}
    for (v, o), (amp, z, f) in groups.items():
        slot = by_freq.setdefault(round(f, 9), {}).setdefault(o, [0j, False, []])
        slot[0] += amp
        if abs(amp) > LEADING_TOL:
            slot[1] = slot[1] or z
            slot[2].append(v)

    lines = []
    for f in sorted(by_freq):
        for o in sorted(by_freq[f]):
            amp, z, lat = by_freq[f][o]
            if abs(amp) > LEADING_TOL:
                terms = tuple(lattice_label(v, tp.mirrors) for v in sorted(lat, key=lambda v: (sum(map(abs, v)), v)))
                lines.append(Line(" | ".join(terms), terms, float(f), o, complex(amp), z))
                break
    return LineTable(channel, tp.D, tp.eps_ref, tp.mirrors, tuple(lines))


@dataclass(frozen=True)
class PredictedPeak:
    label: str
    freq_hz: float
    order: int
    power: float


def predict_spectrum(lt: LineTable, eps: float | None = None) -> list[PredictedPeak]:
    """Peak power ``(|coefficient| * eps**order)**2`` for every line."""
    eps = lt.eps_ref if eps is None else eps
    if eps > 0.05:
        raise ValueError("prediction valid only for eps <= 0.05")
    return [PredictedPeak(ln.label, ln.freq_hz, ln.order, (ln.amplitude * eps ** ln.order) ** 2) for ln in lt.lines]


@dataclass(frozen=True)
class ArmPresence:
    rows: tuple                  # (arm, order, magnitude)
    lines: dict                  # detector -> {channel: LineTable}

    def magnitude(self, arm: str, order: int) -> float:
        for a, o, mag in self.rows:
            if a == arm and o == order:
                return mag
        return 0.0


def arm_presence_report(net: ValidatedNetwork, D: int = 2, K: int = DEFAULT_K) -> ArmPresence:
    """Largest coefficient per arm and total order, next to what each detector sees."""
    start, end = _symbolic_walk(net, D, K)
    rows = []
    for arm in net.arms:
        tp = start[arm]
        for o in range(D + 1):
            mags = [abs(c) for key, c in tp.terms.items() if sum(key[2]) == o]
            rows.append((arm, o, max(mags, default=0.0)))
    lines = {
        d.name: {ch: classify_lines(end[d.arm], ch) for ch in ("S", "P")}
        for d in net.detectors
    }
    return ArmPresence(tuple(rows), lines)


def line_table_json(lt: LineTable, eps: float | None = None) -> list[dict]:
    eps = lt.eps_ref if eps is None else eps
    return [
        {
            "line": ln.label,
            "freq_hz": ln.freq_hz,
            "order": ln.order,
            "coefficient": ln.amplitude,
            "phase_rad": math.atan2(ln.coefficient.imag, ln.coefficient.real),
            "interferes_with_zeroth": ln.interferes_with_zeroth,
            "predicted_power": (ln.amplitude * eps ** ln.order) ** 2,
        }
        for ln in lt.lines
    ]
