"""Interferometer description language.

One statement per line, ``#`` starts a comment::

    beam (width=1.0)
    source S -> in
    bs BS1 (r=0.7071) in: in, vac out: u, v
    mirror M1 on u vibrate(f=282 Hz, amp=0.0005)
    phase P on v (1.5707963267948966)
    block X on v
    detector D quadcell on u

Mirrors, phase plates and blocks sit *on* an arm and act in declaration
order between the arm's producer and its consumer.  ``vac`` names an empty
input port and may feed any number of beam splitters.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

VAC = "vac"
DEFAULT_R = 1.0 / math.sqrt(2.0)
INLINE_KINDS = ("mirror", "phase", "block")
DETECTOR_KINDS = ("quadcell", "bucket")


class NetlangError(ValueError):
    """Base class for all diagnostics; always carries a source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}")


class ParseError(NetlangError):
    def __init__(self, message: str, line: int, col: int, expected: Iterable[str] = ()):
        self.expected = frozenset(expected)
        if self.expected:
            message = f"{message} (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(message, line, col)


class SemanticError(NetlangError):
    def __init__(self, message: str, element: str | None, line: int = 0, col: int = 0):
        self.element = element
        if element is not None:
            message = f"{message} [element {element}]"
        super().__init__(message, line, col)


@dataclass(frozen=True)
class VibrationSpec:
    frequency: float
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class BeamSpec:
    width: float = 1.0


@dataclass(frozen=True)
class Element:
    """A network element.

    Inline kinds (mirror, phase, block) have ``inputs == outputs == (arm,)``.
    """

    kind: str
    name: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    r: float | None = None
    angle: float | None = None
    vibration: VibrationSpec | None = None
    detector_kind: str | None = None
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    @property
    def t(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.r * self.r))

    @property
    def arm(self) -> str:
        return self.inputs[0] if self.inputs else self.outputs[0]

    @property
    def vibrating(self) -> bool:
        return self.vibration is not None and self.vibration.amplitude > 0


@dataclass(frozen=True)
class NetworkSpec:
    elements: tuple[Element, ...]
    beam: BeamSpec = BeamSpec()

    def element(self, name: str) -> Element:
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)

    @property
    def arms(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for el in self.elements:
            for a in el.inputs + el.outputs:
                seen.setdefault(a, None)
        return tuple(seen)

    @property
    def sources(self) -> list[tuple[str, str]]:
        return [(el.name, el.outputs[0]) for el in self.elements if el.kind == "source"]

    @property
    def detectors(self) -> list[tuple[str, str]]:
        return [(el.name, el.detector_kind) for el in self.elements if el.kind == "detector"]

    @property
    def mirrors(self) -> list[Element]:
        return [el for el in self.elements if el.kind == "mirror"]


def structural_key(spec: NetworkSpec):
    """Comparison key that ignores declaration order and source positions.

    Order still matters for inline elements sharing an arm.
    """
    chains: dict[str, list[str]] = {}
    for el in spec.elements:
        if el.kind in INLINE_KINDS:
            chains.setdefault(el.arm, []).append(el.name)
    return (
        spec.beam,
        tuple(sorted((el for el in spec.elements), key=lambda e: e.name)),
        tuple(sorted((a, tuple(c)) for a, c in chains.items())),
    )


def structurally_equal(a: NetworkSpec, b: NetworkSpec) -> bool:
    return structural_key(a) == structural_key(b)


def scale_vibrations(spec: NetworkSpec, factor: float) -> NetworkSpec:
    """Multiply every vibration amplitude by ``factor``."""
    els = []
    for el in spec.elements:
        if el.vibration is not None:
            v = el.vibration
            el = replace(el, vibration=VibrationSpec(v.frequency, v.amplitude * factor, v.phase))
        els.append(el)
    return replace(spec, elements=tuple(els))


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<arrow>->)
  | (?P<punct>[(),:=])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str  # "num", "name", "punct", "eol"
    text: str
    col: int


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(line)
    while pos < n:
        if line[pos] == "#":
            break
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            if kind in ("arrow", "punct"):
                kind = "punct"
            toks.append(_Tok(kind, m.group(), pos + 1))
        pos = m.end()
    toks.append(_Tok("eol", "", pos + 1))
    return toks


class _Line:
    def __init__(self, toks: list[_Tok], lineno: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, what: str, expected: Iterable[str]):
        tok = self.cur
        found = "end of line" if tok.kind == "eol" else repr(tok.text)
        raise ParseError(f"{what}: found {found}", self.lineno, tok.col, expected)

    def punct(self, p: str) -> _Tok:
        if self.cur.kind == "punct" and self.cur.text == p:
            tok = self.cur
            self.i += 1
            return tok
        self.fail("syntax error", [repr(p)])

    def accept(self, p: str) -> bool:
        if self.cur.kind == "punct" and self.cur.text == p:
            self.i += 1
            return True
        return False

    def keyword(self, *words: str) -> str:
        if self.cur.kind == "name" and self.cur.text in words:
            w = self.cur.text
            self.i += 1
            return w
        self.fail("syntax error", [repr(w) for w in words])

    def name(self, what: str = "NAME") -> _Tok:
        if self.cur.kind == "name":
            tok = self.cur
            self.i += 1
            return tok
        self.fail("syntax error", [what])

    def number(self) -> float:
        if self.cur.kind == "num":
            tok = self.cur
            self.i += 1
            value = float(tok.text)
            if not math.isfinite(value):
                raise ParseError("number out of range", self.lineno, tok.col)
            return value
        self.fail("syntax error", ["FLOAT"])

    def end(self):
        if self.cur.kind != "eol":
            self.fail("trailing input", ["end of line"])

    def arm_list(self) -> list[str]:
        arms = [self.name("ARM").text]
        while self.accept(","):
            arms.append(self.name("ARM").text)
        return arms

    def params(self, allowed: dict[str, bool], units: dict[str, str] | None = None) -> dict[str, float]:
        """``( key=value, ... )`` after the opening paren was consumed.

        ``allowed`` maps key -> required.
        """
        units = units or {}
        out: dict[str, float] = {}
        while True:
            tok = self.name("parameter name")
            if tok.text not in allowed:
                raise ParseError(
                    f"unknown parameter {tok.text!r}", self.lineno, tok.col, allowed
                )
            if tok.text in out:
                raise ParseError(f"duplicate parameter {tok.text!r}", self.lineno, tok.col)
            self.punct("=")
            out[tok.text] = self.number()
            if tok.text in units:
                self.keyword(units[tok.text])
            if self.accept(")"):
                break
            if not self.accept(","):
                self.fail("syntax error", ["','", "')'"])
        for key, required in allowed.items():
            if required and key not in out:
                raise ParseError(f"missing parameter {key!r}", self.lineno, self.toks[self.i - 1].col)
        return out


_STATEMENTS = ("source", "bs", "mirror", "phase", "block", "detector", "beam")


def _parse_line(ln: _Line) -> Element | BeamSpec | None:
    if ln.cur.kind == "eol":
        return None
    head = ln.cur
    kw = ln.keyword(*_STATEMENTS)
    pos = dict(line=ln.lineno, col=head.col)
    if kw == "beam":
        ln.punct("(")
        p = ln.params({"width": True})
        ln.end()
        if p["width"] <= 0:
            raise SemanticError("beam width must be positive", None, **pos)
        return BeamSpec(p["width"])

    name = ln.name().text
    if kw == "source":
        ln.punct("->")
        arm = ln.name("ARM").text
        ln.end()
        return Element("source", name, outputs=(arm,), **pos)
    if kw == "bs":
        r = DEFAULT_R
        if ln.accept("("):
            r = ln.params({"r": True})["r"]
        ln.keyword("in")
        ln.punct(":")
        ins = ln.arm_list()
        ln.keyword("out")
        ln.punct(":")
        outs = ln.arm_list()
        ln.end()
        if len(ins) != 2 or len(outs) != 2:
            raise SemanticError(
                f"arity mismatch: beam splitter needs 2 inputs and 2 outputs, got {len(ins)} and {len(outs)}",
                name, **pos,
            )
        if not 0.0 <= r <= 1.0:
            raise SemanticError(f"reflection magnitude r={r} outside [0, 1]", name, **pos)
        return Element("bs", name, tuple(ins), tuple(outs), r=r, **pos)
    if kw == "detector":
        kind = ln.keyword(*DETECTOR_KINDS)
        ln.keyword("on")
        arm = ln.name("ARM").text
        ln.end()
        return Element("detector", name, inputs=(arm,), detector_kind=kind, **pos)

    ln.keyword("on")
    arm = ln.name("ARM").text
    if kw == "mirror":
        vib = None
        if ln.cur.kind == "name" and ln.cur.text == "vibrate":
            ln.i += 1
            ln.punct("(")
            p = ln.params({"f": True, "amp": True, "phase": False}, units={"f": "Hz"})
            if p["f"] <= 0:
                raise SemanticError("vibration frequency must be positive", name, **pos)
            if p["amp"] < 0:
                raise SemanticError("vibration amplitude must be non-negative", name, **pos)
            vib = VibrationSpec(p["f"], p["amp"], p.get("phase", 0.0))
        ln.end()
        return Element("mirror", name, (arm,), (arm,), vibration=vib, **pos)
    if kw == "phase":
        ln.punct("(")
        angle = ln.number()
        ln.punct(")")
        ln.end()
        return Element("phase", name, (arm,), (arm,), angle=angle, **pos)
    ln.end()
    return Element("block", name, (arm,), (arm,), **pos)


def parse_network(text: str | bytes) -> NetworkSpec:
    """Parse a network description; raise :class:`NetlangError` on any problem."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            prefix = bytes(text)[: exc.start]
            line = prefix.count(b"\n") + 1
            col = len(prefix) - (prefix.rfind(b"\n") + 1) + 1
            raise ParseError("invalid UTF-8", line, col) from None
    elements: list[Element] = []
    beam = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        ln = _Line(_tokenize(raw, lineno), lineno)
        item = _parse_line(ln)
        if item is None:
            continue
        if isinstance(item, BeamSpec):
            if beam is not None:
                raise SemanticError("beam declared twice", None, lineno, 1)
            beam = item
        else:
            elements.append(item)
    spec = NetworkSpec(tuple(elements), beam or BeamSpec())
    check_spec(spec)
    return spec


def check_spec(spec: NetworkSpec) -> None:
    """Check names, arm wiring and acyclicity."""
    names: set[str] = set()
    producer: dict[str, Element] = {}
    consumer: dict[str, Element] = {}
    for el in spec.elements:
        pos = dict(line=el.line, col=el.col)
        if el.name in names:
            raise SemanticError("duplicate element name", el.name, **pos)
        names.add(el.name)
        if el.kind == "bs" and (len(el.inputs) != 2 or len(el.outputs) != 2):
            raise SemanticError("arity mismatch", el.name, **pos)
        if el.kind in INLINE_KINDS or el.kind == "detector":
            if el.arm == VAC:
                raise SemanticError("vacuum port cannot carry elements", el.name, **pos)
            continue
        for a in el.outputs:
            if a == VAC:
                raise SemanticError("'vac' cannot be an output arm", el.name, **pos)
            if a in producer:
                raise SemanticError(f"arm {a!r} has two producers", el.name, **pos)
            producer[a] = el
    for el in spec.elements:
        pos = dict(line=el.line, col=el.col)
        if el.kind == "phase" and not math.isfinite(el.angle):
            raise SemanticError("phase angle must be finite", el.name, **pos)
        if el.kind == "bs" or el.kind == "detector":
            for a in el.inputs:
                if a == VAC:
                    if el.kind == "detector":
                        raise SemanticError("detector on vacuum port", el.name, **pos)
                    continue
                if a not in producer:
                    raise SemanticError(f"dangling arm {a!r}: no producer", el.name, **pos)
                if a in consumer:
                    raise SemanticError(f"arm {a!r} consumed twice", el.name, **pos)
                consumer[a] = el
        elif el.kind in INLINE_KINDS and el.arm not in producer:
            raise SemanticError(f"dangling arm {el.arm!r}: no producer", el.name, **pos)
    _topo_order(spec)


def _graph(spec: NetworkSpec):
    """Successor lists over element indices; inline elements chain along their arm."""
    idx = {el.name: i for i, el in enumerate(spec.elements)}
    producer: dict[str, int] = {}
    consumer: dict[str, int] = {}
    chain: dict[str, list[int]] = {}
    for i, el in enumerate(spec.elements):
        if el.kind in INLINE_KINDS:
            chain.setdefault(el.arm, []).append(i)
            continue
        for a in el.outputs:
            producer[a] = i
        for a in el.inputs:
            if a != VAC:
                consumer[a] = i
    succ: list[list[int]] = [[] for _ in spec.elements]
    for a, p in producer.items():
        seq = [p] + chain.get(a, []) + ([consumer[a]] if a in consumer else [])
        for u, v in zip(seq, seq[1:]):
            succ[u].append(v)
    return idx, succ, producer, consumer, chain


def _topo_order(spec: NetworkSpec) -> list[int]:
    _, succ, *_ = _graph(spec)
    indeg = [0] * len(succ)
    for vs in succ:
        for v in vs:
            indeg[v] += 1
    heap = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(order) != len(succ):
        stuck = min(i for i, d in enumerate(indeg) if d > 0)
        el = spec.elements[stuck]
        raise SemanticError("cycle detected", el.name, el.line, el.col)
    return order


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Arm:
    name: str
    producer: str
    port: int
    inline: tuple[str, ...]
    consumer: str | None
    consumer_port: int | None


@dataclass(frozen=True)
class ValidatedNetwork:
    spec: NetworkSpec
    order: tuple[str, ...]
    arms: dict
    inputs: tuple[tuple[str, int], ...]   # (source name, 0) or (bs name, vac port)
    outputs: tuple[str, ...]              # arms leaving the network
    dark_outputs: tuple[str, ...]
    unitarity_error: float | None         # None when the net contains blocks

    @property
    def beam(self) -> BeamSpec:
        return self.spec.beam

    @property
    def live_outputs(self) -> tuple[str, ...]:
        return tuple(a for a in self.outputs if a not in self.dark_outputs)

    def element(self, name: str) -> Element:
        return self.spec.element(name)

    def detector_arm(self, name: str) -> str:
        el = self.spec.element(name)
        if el.kind != "detector":
            raise KeyError(f"{name!r} is not a detector")
        return el.arm

    @property
    def detectors(self) -> list[Element]:
        return [self.spec.element(n) for n in self.order if self.spec.element(n).kind == "detector"]

    @property
    def vibrating_mirrors(self) -> list[Element]:
        return [self.spec.element(n) for n in self.order if self.spec.element(n).vibrating]

    @property
    def lossless(self) -> bool:
        return not any(el.kind == "block" for el in self.spec.elements)

    def walk(
        self,
        source: Callable[[Element], object],
        inline: Callable[[Element, object], object],
        vacuum: Callable[[Element, int], object] | None = None,
        seed: Callable[[str, object], object] | None = None,
        split: Callable | None = None,
    ):
        """Push values through the network in topological order.

        Values only need ``+`` and multiplication by complex scalars; ``None``
        stands for an exactly empty field.  Returns ``(start, end)`` dicts with
        the value on every arm right after its producer and right before its
        consumer.  ``seed(arm, value)``, if given, may replace the value an arm
        starts with.  ``split(x1, x2, t, r)`` may replace the generic beam
        splitter arithmetic when both inputs are present.
        """
        cur: dict[str, object] = {}
        start: dict[str, object] = {}
        for name in self.order:
            el = self.spec.element(name)
            if el.kind == "source":
                x = source(el)
                cur[el.arm] = start[el.arm] = x if seed is None else seed(el.arm, x)
            elif el.kind == "bs":
                xs = []
                for port, a in enumerate(el.inputs):
                    if a == VAC:
                        xs.append(vacuum(el, port) if vacuum is not None else None)
                    else:
                        xs.append(cur[a])
                t, ir = el.t, 1j * el.r
                if split is not None and xs[0] is not None and xs[1] is not None:
                    y1, y2 = split(xs[0], xs[1], el.t, el.r)
                else:
                    y1 = _lin(t, xs[0], ir, xs[1])
                    y2 = _lin(ir, xs[0], t, xs[1])
                for a, y in zip(el.outputs, (y1, y2)):
                    cur[a] = start[a] = y if seed is None else seed(a, y)
            elif el.kind in INLINE_KINDS:
                x = cur[el.arm]
                if el.kind == "block":
                    cur[el.arm] = None
                elif x is not None:
                    if el.kind == "phase":
                        cur[el.arm] = x * complex(math.cos(el.angle), math.sin(el.angle))
                    else:
                        cur[el.arm] = inline(el, x)
        return start, dict(cur)

    def frontier_cuts(self) -> list[tuple[str, ...]]:
        """Arm sets crossing the network right after each beam splitter."""
        live: list[str] = []
        cuts: list[tuple[str, ...]] = []
        for name in self.order:
            el = self.spec.element(name)
            if el.kind == "source":
                live.append(el.arm)
            elif el.kind == "bs":
                live = [a for a in live if a not in el.inputs] + list(el.outputs)
                cut = tuple(sorted(live))
                if cut not in cuts and self.is_cut(cut):
                    cuts.append(cut)
        return cuts

    def is_cut(self, arms: Iterable[str]) -> bool:
        """True when every source-to-output path crosses exactly one of ``arms``."""
        cut = set(arms)
        if not cut or not cut <= set(self.arms):
            return False
        memo: dict[str, frozenset] = {}

        def hits(a: str) -> frozenset:
            if a in memo:
                return memo[a]
            arm = self.arms[a]
            here = 1 if a in cut else 0
            if arm.consumer is None or self.spec.element(arm.consumer).kind == "detector":
                res = frozenset({here})
            else:
                nxt = self.spec.element(arm.consumer).outputs
                res = frozenset(h + here for b in nxt for h in hits(b))
            memo[a] = res
            return res

        return all(hits(a) == {1} for _, a in self.spec.sources)


def _lin(a, x, b, y):
    if x is None and y is None:
        return None
    if x is None:
        return b * y
    if y is None:
        return a * x
    return a * x + b * y


def validate(spec: NetworkSpec) -> ValidatedNetwork:
    """Topologically order the network and check it end to end."""
    check_spec(spec)
    order = _topo_order(spec)
    _, succ, producer, consumer, chain = _graph(spec)
    els = spec.elements
    arms = {}
    for a, p in producer.items():
        c = consumer.get(a)
        arms[a] = Arm(
            a, els[p].name, els[p].outputs.index(a),
            tuple(els[i].name for i in chain.get(a, [])),
            els[c].name if c is not None else None,
            els[c].inputs.index(a) if c is not None else None,
        )

    seen = set()
    stack = [i for i, el in enumerate(els) if el.kind == "source"]
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        stack.extend(succ[u])
    for i, el in enumerate(els):
        if el.kind == "detector" and i not in seen:
            raise SemanticError("unreachable detector", el.name, el.line, el.col)

    ordered = [els[i] for i in order]
    inputs = []
    for el in ordered:
        if el.kind == "source":
            inputs.append((el.name, 0))
        elif el.kind == "bs":
            inputs.extend((el.name, p) for p, a in enumerate(el.inputs) if a == VAC)
    outputs = tuple(
        a for a in _arm_order(ordered) if arms[a].consumer is None
        or spec.element(arms[a].consumer).kind == "detector"
    )
    net = ValidatedNetwork(
        spec, tuple(el.name for el in ordered), arms, tuple(inputs), outputs, (), None
    )

    from .optics import compile_transfer

    tr = compile_transfer(net)
    cols = [j for j, (n, _) in enumerate(inputs) if spec.element(n).kind == "source"]
    out_power = (abs(tr.output_matrix[:, cols]) ** 2).sum(axis=1)
    dark = tuple(a for a, p in zip(outputs, out_power) if p < 1e-24)
    err = tr.unitarity_error() if net.lossless else None
    if err is not None and err > 1e-10:
        raise SemanticError(f"transfer not unitary (error {err:.3g})", None)
    return replace(net, dark_outputs=dark, unitarity_error=err)


def _arm_order(ordered: list[Element]) -> list[str]:
    out = []
    for el in ordered:
        if el.kind in ("source", "bs"):
            out.extend(el.outputs)
    return out


# ---------------------------------------------------------------------------
# serialization


def _num(x: float) -> str:
    return repr(float(x))


def serialize(spec: NetworkSpec) -> str:
    """Canonical text: beam line first, then elements in topological order."""
    lines = [f"beam (width={_num(spec.beam.width)})"]
    for i in _topo_order(spec):
        el = spec.elements[i]
        if el.kind == "source":
            lines.append(f"source {el.name} -> {el.arm}")
        elif el.kind == "bs":
            params = "" if el.r == DEFAULT_R else f" (r={_num(el.r)})"
            lines.append(
                f"bs {el.name}{params} in: {', '.join(el.inputs)} out: {', '.join(el.outputs)}"
            )
        elif el.kind == "mirror":
            s = f"mirror {el.name} on {el.arm}"
            v = el.vibration
            if v is not None:
                s += f" vibrate(f={_num(v.frequency)} Hz, amp={_num(v.amplitude)}"
                if v.phase != 0.0:
                    s += f", phase={_num(v.phase)}"
                s += ")"
            lines.append(s)
        elif el.kind == "phase":
            lines.append(f"phase {el.name} on {el.arm} ({_num(el.angle)})")
        elif el.kind == "block":
            lines.append(f"block {el.name} on {el.arm}")
        else:
            lines.append(f"detector {el.name} {el.detector_kind} on {el.arm}")
    return "\n".join(lines) + "\n"
