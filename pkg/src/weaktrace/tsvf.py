"""Pre- and post-selected arm states and weak values of arm projectors.

Everything here is zeroth order: vibrations are off and each arm carries a
single complex amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import math

import numpy as np

from .netlang import ValidatedNetwork
from .optics import compile_transfer

OVERLAP_TOL = 1e-12
ZERO_TOL = 1e-12
ROUNDING = 1e-14            # static amplitudes below this are cancellation residue
CONVENTIONS = ("adjoint", "c_arm_only", "custom")
FLAG = "forward-present, weak-value-zero"


class CutError(ValueError):
    pass


@dataclass(frozen=True)
class ForwardState:
    cut: tuple[str, ...]
    amplitudes: tuple[complex, ...]

    def __getitem__(self, arm: str) -> complex:
        return self.amplitudes[self.cut.index(arm)]

    @property
    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes))


@dataclass(frozen=True)
class BackwardState:
    cut: tuple[str, ...]
    convention: str
    amplitudes: tuple[complex, ...]
    detector: str | None = None

    def __getitem__(self, arm: str) -> complex:
        return self.amplitudes[self.cut.index(arm)]


def _check_cut(net: ValidatedNetwork, cut) -> tuple[str, ...]:
    cut = tuple(cut)
    unknown = [a for a in cut if a not in net.arms]
    if unknown:
        raise CutError(f"unknown arm(s) {', '.join(unknown)}")
    if len(set(cut)) != len(cut) or not net.is_cut(cut):
        raise CutError(f"{{{', '.join(cut)}}} is not a cut: some path misses it or crosses it twice")
    return cut


def forward_state(net: ValidatedNetwork, cut) -> ForwardState:
    """Static amplitudes on the cut's arms, every source injecting unit power.

    Amplitudes below 1e-14 are set to exactly zero so that a dark arm has an
    exactly vanishing weak value under every backward state.
    """
    cut = _check_cut(net, cut)
    tr = compile_transfer(net)
    src = np.array([net.element(n).kind == "source" for n, _ in net.inputs], dtype=complex)
    amps = [complex(tr.start[a] @ src) for a in cut]
    return ForwardState(cut, tuple(0j if abs(a) < ROUNDING else a for a in amps))


def cut_to_detector(net: ValidatedNetwork, cut, detector: str) -> np.ndarray:
    """Amplitude reaching ``detector`` per unit amplitude started on each cut arm."""
    cut = _check_cut(net, cut)
    arm = net.detector_arm(detector)
    n = len(cut)
    pos = {a: i for i, a in enumerate(cut)}

    def seed(a, x):
        if a in pos:
            v = np.zeros(n, dtype=complex)
            v[pos[a]] = 1.0
            return v
        return x

    _, end = net.walk(
        source=lambda el: np.zeros(n, dtype=complex),
        inline=lambda el, x: x,
        seed=seed,
    )
    v = end[arm]
    return np.zeros(n, dtype=complex) if v is None else v


def load_custom(path) -> dict[str, complex]:
    """Read a custom backward state: JSON object mapping arm to ``[re, im]``, a number or ``"a+bj"``."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("custom state must be a JSON object of arm -> amplitude")
    out = {}
    for arm, v in raw.items():
        if isinstance(v, (list, tuple)) and len(v) == 2:
            out[arm] = complex(float(v[0]), float(v[1]))
        elif isinstance(v, (int, float)):
            out[arm] = complex(v)
        elif isinstance(v, str):
            out[arm] = complex(v.replace(" ", ""))
        else:
            raise ValueError(f"bad amplitude for arm {arm!r}")
    return out


def backward_state(
    net: ValidatedNetwork,
    detector: str,
    cut,
    convention: str = "adjoint",
    custom: dict | None = None,
    c_arm: str = "C",
) -> BackwardState:
    """Post-selected state on ``cut`` for a click in ``detector``.

    ``adjoint`` conjugates the cut-to-detector transfer, ``c_arm_only`` keeps
    only arm ``c_arm`` of it (renormalized), ``custom`` takes ``custom``.
    """
    cut = _check_cut(net, cut)
    if (convention == "custom") != (custom is not None):
        raise ValueError("a custom state is required exactly for the custom convention")
    if convention == "custom":
        unknown = sorted(set(custom) - set(net.arms))
        if unknown:
            raise ValueError(f"custom state names unknown arm(s) {', '.join(unknown)}")
        missing = [a for a in cut if a not in custom]
        if missing:
            raise ValueError(f"custom state does not cover arm(s) {', '.join(missing)}")
        amps = np.array([custom[a] for a in cut], dtype=complex)
    elif convention in ("adjoint", "c_arm_only"):
        amps = np.conj(cut_to_detector(net, cut, detector))
        if convention == "c_arm_only":
            if c_arm not in cut:
                raise ValueError(f"arm {c_arm!r} is not on cut {{{', '.join(cut)}}}")
            amps = np.where(np.array(cut) == c_arm, amps, 0)
            nrm = np.linalg.norm(amps)
            if nrm > 0:
                amps = amps / nrm
    else:
        raise ValueError(f"unknown convention {convention!r}")
    if np.linalg.norm(amps) <= ZERO_TOL:
        raise ValueError(f"{convention} backward state from {detector} vanishes on {{{', '.join(cut)}}}")
    return BackwardState(cut, convention, tuple(complex(a) for a in amps), detector)


def overlap(fw: ForwardState, bw: BackwardState) -> complex:
    if fw.cut != bw.cut:
        raise CutError("forward and backward states live on different cuts")
    return complex(sum(np.conj(p) * s for p, s in zip(bw.amplitudes, fw.amplitudes)))


def weak_value(fw: ForwardState, bw: BackwardState, arm) -> complex | None:
    """Weak value of the projector on ``arm`` (name or index); ``None`` when undefined."""
    ov = overlap(fw, bw)
    if abs(ov) <= OVERLAP_TOL:
        return None
    i = arm if isinstance(arm, int) else fw.cut.index(arm)
    return complex(np.conj(bw.amplitudes[i]) * fw.amplitudes[i] / ov)


@dataclass(frozen=True)
class ArmWeakValue:
    name: str
    forward: complex
    backward: complex
    weak_value: complex | None


@dataclass(frozen=True)
class CutReport:
    cut: tuple[str, ...]
    convention: str
    arms: tuple[ArmWeakValue, ...]
    overlap: complex

    @property
    def defined(self) -> bool:
        return abs(self.overlap) > OVERLAP_TOL

    @property
    def sum_weak(self) -> complex | None:
        if not self.defined:
            return None
        return complex(sum(a.weak_value for a in self.arms))

    def weak(self, arm: str) -> complex | None:
        for a in self.arms:
            if a.name == arm:
                return a.weak_value
        raise KeyError(arm)


@dataclass(frozen=True)
class WeakValueReport:
    detector: str
    cuts: tuple[CutReport, ...]
    flags: tuple[dict, ...]
    notes: tuple[str, ...] = ()

    def get(self, cut, convention: str) -> CutReport:
        cut = tuple(sorted(cut))
        for r in self.cuts:
            if tuple(sorted(r.cut)) == cut and r.convention == convention:
                return r
        raise KeyError((cut, convention))


def cut_report(fw: ForwardState, bw: BackwardState) -> CutReport:
    ov = overlap(fw, bw)
    arms = tuple(
        ArmWeakValue(a, fw.amplitudes[i], bw.amplitudes[i], weak_value(fw, bw, i))
        for i, a in enumerate(fw.cut)
    )
    return CutReport(fw.cut, bw.convention, arms, ov)


def weak_trace_report(
    net: ValidatedNetwork,
    detector: str,
    conventions=("adjoint", "c_arm_only"),
    custom: dict | None = None,
    c_arm: str = "C",
    cuts=None,
    presence=None,
) -> WeakValueReport:
    """Weak values on every frontier cut under each convention.

    Arms with forward amplitude but zero weak value are flagged; ``presence``
    (an arm-presence report) adds the arm's per-order content to each flag.
    """
    net.detector_arm(detector)
    cuts = net.frontier_cuts() if cuts is None else [tuple(c) for c in cuts]
    conventions = list(conventions)
    if custom is not None and "custom" not in conventions:
        conventions.append("custom")
    reports, notes = [], []
    zero_in: dict = {}
    for cut in cuts:
        fw = forward_state(net, cut)
        for conv in conventions:
            if conv == "c_arm_only" and c_arm not in cut:
                continue
            if conv == "custom" and not set(cut) <= set(custom or {}):
                notes.append(f"custom state does not cover {{{', '.join(cut)}}}")
                continue
            try:
                bw = backward_state(net, detector, cut, conv, custom if conv == "custom" else None, c_arm)
            except ValueError as exc:
                notes.append(str(exc))
                continue
            rep = cut_report(fw, bw)
            reports.append(rep)
            if not rep.defined:
                continue
            for a in rep.arms:
                if abs(a.forward) > ZERO_TOL and abs(a.weak_value) <= ZERO_TOL:
                    zero_in.setdefault((a.name, cut), []).append(conv)
    flags = []
    for (arm, cut), convs in zero_in.items():
        flag = {"arm": arm, "cut": list(cut), "flag": FLAG, "conventions": convs,
                "forward_power": abs(forward_state(net, cut)[arm]) ** 2}
        if presence is not None:
            flag["presence"] = [
                {"order": o, "magnitude": mag} for a, o, mag in presence.rows if a == arm
            ]
        flags.append(flag)
    return WeakValueReport(detector, tuple(reports), tuple(flags), tuple(notes))


def _cx(z: complex | None):
    if z is None:
        return "undefined"
    return [float(z.real), float(z.imag)]


def report_json(rep: WeakValueReport) -> dict:
    return {
        "detector": rep.detector,
        "reports": [
            {
                "cut": list(r.cut),
                "convention": r.convention,
                "arms": [
                    {"name": a.name, "forward": _cx(a.forward), "backward": _cx(a.backward),
                     "weak_value": _cx(a.weak_value)}
                    for a in r.arms
                ],
                "sum_weak": _cx(r.sum_weak),
                "overlap": _cx(r.overlap),
            }
            for r in rep.cuts
        ],
        "flags": list(rep.flags),
        "notes": list(rep.notes),
    }
