"""Command-line scenario runner: ``run``, ``sweep``, ``weak`` and ``orders``."""

from __future__ import annotations

import argparse
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import os
import sys

from . import orders as orders_mod
from . import tsvf
from .detect import add_noise
from .netlang import NetlangError, ValidatedNetwork, parse_network, scale_vibrations, validate
from .presets import NAMES as PRESETS, preset_text
from .propagate import Modal, TimeBase, parse_mode, simulate
from .spectrum import fit_exponent, mirror_lines, peak_table, power_spectrum, write_csv

DEFAULT_EPS = (0.005, 0.01, 0.02, 0.04)
ABSENT_REL = 1e-16          # a line below this fraction of the strongest line is not there
# exponents asserted by the argument under test, as (quantity, exponent)
CLAIMED = (("signal amplitude of a non-interfering line", 2), ("power-spectrum peak of that line", 4),
           ("extra power suppression relative to an interfering line", 4))


class UsageError(Exception):
    pass


@dataclass
class ScenarioConfig:
    source: str                     # preset name or path
    is_preset: bool
    mode: object = field(default_factory=Modal)
    timebase: TimeBase = field(default_factory=TimeBase)
    eps_scale: float = 1.0
    noise: float = 0.0
    seed: int = 0
    detector: str | None = None
    out: str = "out"
    window: str = "rect"

    def __post_init__(self):
        if not self.eps_scale > 0:
            raise UsageError("--eps-scale must be positive")
        if self.noise < 0:
            raise UsageError("--noise must be non-negative")

    def network(self, eps_scale: float | None = None) -> ValidatedNetwork:
        if self.is_preset:
            text = preset_text(self.source)
        else:
            with open(self.source, "rb") as fh:
                text = fh.read()
        spec = parse_network(text)
        return validate(scale_vibrations(spec, self.eps_scale if eps_scale is None else eps_scale))


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _detectors(net: ValidatedNetwork, name: str | None) -> list[str]:
    names = [d.name for d in net.detectors]
    if name is None:
        return names
    if name not in names:
        raise UsageError(f"no detector {name!r}; have {', '.join(names)}")
    return [name]


def _eps_ref(net: ValidatedNetwork) -> float:
    return max((m.vibration.amplitude for m in net.vibrating_mirrors), default=0.0)


def _simulate(cfg: ScenarioConfig, net: ValidatedNetwork, dets: list[str]):
    recs = simulate(net, cfg.timebase, cfg.mode)
    recs = {d: recs[d] for d in dets}
    if cfg.noise > 0:
        recs = {d: add_noise(r, cfg.noise, cfg.seed + j) for j, (d, r) in enumerate(recs.items())}
    return recs


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(cfg: ScenarioConfig) -> dict:
    net = cfg.network()
    tb = cfg.timebase
    tb.check(net)
    dets = _detectors(net, cfg.detector)
    recs = _simulate(cfg, net, dets)
    lines = mirror_lines(net.vibrating_mirrors)
    os.makedirs(cfg.out, exist_ok=True)
    report = {"mode": str(cfg.mode), "eps": _eps_ref(net), "sample_rate": tb.sample_rate,
              "duration": tb.duration, "window": cfg.window, "detectors": {}}
    for d, rec in recs.items():
        spec = power_spectrum(rec, cfg.window)
        write_csv(spec, os.path.join(cfg.out, f"spectrum_{d}.csv"))
        with open(os.path.join(cfg.out, f"signal_{d}.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "S", "P"])
            for t, s, p in zip(rec.t, rec.S, rec.P):
                w.writerow([repr(float(t)), repr(float(s)), repr(float(p))])
        report["detectors"][d] = {
            "kind": rec.kind,
            "peaks": [{"line": p.label, "freq_hz": p.frequency, "power": p.power, "floor": p.floor}
                      for p in peak_table(spec, lines)],
        }
    _dump(report, os.path.join(cfg.out, "peaks.json"))
    return report


def _sweep_point(cfg, eps):
    base = cfg.network(1.0)
    ref = _eps_ref(base)
    net = cfg.network(eps / ref)
    dets = _detectors(net, cfg.detector)
    recs = _simulate(cfg, net, dets)
    return {d: {ch: power_spectrum(r, cfg.window, channel=ch) for ch in ("S", "P")} for d, r in recs.items()}


def cmd_sweep(cfg: ScenarioConfig, eps_list, workers: int | None = None) -> dict:
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise UsageError("--eps needs at least 3 values")
    if any(e <= 0 for e in eps_list):
        raise UsageError("--eps values must be positive")
    base = cfg.network(1.0)
    cfg.timebase.check(base)
    report = {"mode": str(cfg.mode), "window": cfg.window, "eps": eps_list, "detectors": {}}
    if not base.vibrating_mirrors:
        report["notes"] = ["no lines"]
        report["claims"] = _claims({})
        _ensure(cfg.out)
        _dump(report, os.path.join(cfg.out, "sweep.json"))
        return report
    lines = mirror_lines(base.vibrating_mirrors)
    workers = workers or min(len(eps_list), os.cpu_count() or 1)
    try:
        with ThreadPoolExecutor(workers) as pool:
            points = list(pool.map(lambda e: _sweep_point(cfg, e), eps_list))
    except (ValueError, ArithmeticError) as exc:
        raise RuntimeError(f"sweep point failed: {exc}") from exc
    for d in points[0]:
        rows = []
        for label, f in lines.items():
            row = {"line": label, "freq_hz": f}
            for ch in ("S", "P"):
                powers = []
                present = True
                for pt in points:
                    spec = pt[d][ch]
                    if f > spec.sample_rate / 2:
                        present = False
                        break
                    top = max(peak_table(spec, lines), key=lambda p: p.power).power
                    pw = peak_table(spec, {label: f})[0].power
                    powers.append(pw)
                    if not pw > ABSENT_REL * top:
                        present = False
                entry = {"powers": powers}
                if present:
                    fit = fit_exponent(zip(eps_list, powers))
                    entry.update(slope=fit.slope, intercept=fit.intercept, r2=fit.r2)
                else:
                    entry.update(slope=None, intercept=None, r2=None, note="absent")
                row[ch] = entry
            rows.append(row)
        report["detectors"][d] = rows
    report["claims"] = _claims(report["detectors"])
    _ensure(cfg.out)
    _dump(report, os.path.join(cfg.out, "sweep.json"))
    return report


def _ensure(path) -> bool:
    os.makedirs(path, exist_ok=True)
    return True


def _claims(detectors: dict) -> list[dict]:
    """Claimed exponents next to every measured slope they can be compared with."""
    s_slopes = {}
    all_slopes = {}
    for d, rows in detectors.items():
        for row in rows:
            for ch in ("S", "P"):
                sl = row[ch]["slope"]
                if sl is not None:
                    all_slopes[f"{d}:{ch}:{row['line']}"] = sl
                    if ch == "S":
                        s_slopes[f"{d}:{row['line']}"] = sl
    (q1, e1), (q2, e2), (q3, e3) = CLAIMED
    return [
        {"quantity": q1, "claimed_exponent": e1, "measured": {k: v / 2 for k, v in s_slopes.items()}},
        {"quantity": q2, "claimed_exponent": e2, "measured": all_slopes},
        {"quantity": q3, "claimed_exponent": e3,
         "measured": {k: v - 2 for k, v in all_slopes.items()}},
    ]


def cmd_weak(cfg: ScenarioConfig, conventions, custom_path=None, c_arm="C") -> dict:
    net = cfg.network()
    dets = _detectors(net, cfg.detector)
    custom = tsvf.load_custom(custom_path) if custom_path else None
    if custom is not None:
        unknown = sorted(set(custom) - set(net.arms))
        if unknown:
            raise UsageError(f"custom state names unknown arm(s) {', '.join(unknown)}")
    presence = orders_mod.arm_presence_report(net, 1) if net.vibrating_mirrors else None
    out = {"detectors": []}
    for d in dets:
        rep = tsvf.weak_trace_report(net, d, [c for c in conventions if c != "custom"], custom, c_arm,
                                     presence=presence)
        out["detectors"].append(tsvf.report_json(rep))
    _ensure(cfg.out)
    _dump(out, os.path.join(cfg.out, "weak.json"))
    return out


def cmd_orders(cfg: ScenarioConfig, D: int, verify: bool) -> dict:
    net = cfg.network()
    dets = _detectors(net, cfg.detector)
    eps = _eps_ref(net)
    presence = orders_mod.arm_presence_report(net, D)
    out = {"eps": eps, "max_degree": D, "detectors": {}, "arm_presence": [
        {"arm": a, "order": o, "magnitude": m} for a, o, m in presence.rows]}
    for d in dets:
        out["detectors"][d] = {ch: orders_mod.line_table_json(lt, eps) for ch, lt in presence.lines[d].items()}
    if verify:
        if eps > 0.05:
            raise UsageError("--verify needs eps <= 0.05")
        cfg.timebase.check(net)
        recs = simulate(net, cfg.timebase, cfg.mode)
        rows = []
        for d in dets:
            spec = power_spectrum(recs[d], cfg.window, channel="S")
            for ln in presence.lines[d]["S"].lines:
                if ln.freq_hz > spec.sample_rate / 2:
                    continue
                pred = (ln.amplitude * eps ** ln.order) ** 2
                sim = peak_table(spec, {ln.label: ln.freq_hz})[0].power
                rel = abs(sim - pred) / pred
                rows.append({"detector": d, "line": ln.label, "freq_hz": ln.freq_hz, "order": ln.order,
                             "predicted_power": pred, "simulated_power": sim, "rel_error": rel,
                             "ok": bool(rel <= 0.05) if ln.order == 1 else None})
        out["verify"] = {"mode": str(cfg.mode), "rows": rows,
                         "order1_ok": all(r["ok"] for r in rows if r["order"] == 1)}
    _ensure(cfg.out)
    _dump(out, os.path.join(cfg.out, "orders.json"))
    return out


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--net", metavar="FILE")
    common.add_argument("--mode", default="modal:4", help="modal:K or grid:N[,L]")
    common.add_argument("--rate", type=float, default=10000.0, metavar="HZ")
    common.add_argument("--duration", type=float, default=1.0, metavar="S")
    common.add_argument("--eps-scale", type=float, default=1.0, metavar="X")
    common.add_argument("--noise", type=float, default=0.0, metavar="SIGMA")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--detector", metavar="NAME")
    common.add_argument("--window", choices=("rect", "hann"), default="rect")
    common.add_argument("--out", default="out", metavar="DIR")

    p = _Parser(prog="weaktrace", description="Vibrating-mirror interferometer simulations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="simulate and write spectra, signals and peaks")
    sw = sub.add_parser("sweep", parents=[common], help="fit peak-power exponents over eps")
    sw.add_argument("--eps", default=",".join(map(str, DEFAULT_EPS)), metavar="LIST")
    wk = sub.add_parser("weak", parents=[common], help="weak values of arm projectors")
    wk.add_argument("--convention", nargs="+", default=["adjoint"], metavar="NAME",
                    help="adjoint | c-arm | custom FILE")
    wk.add_argument("--all-conventions", action="store_true")
    wk.add_argument("--c-arm", default="C", metavar="ARM")
    od = sub.add_parser("orders", parents=[common], help="perturbative line classification")
    od.add_argument("--max-degree", type=int, default=2, metavar="D")
    od.add_argument("--verify", action="store_true")
    return p


def _config(a) -> ScenarioConfig:
    try:
        mode = parse_mode(a.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return ScenarioConfig(
        source=a.preset or a.net,
        is_preset=a.preset is not None,
        mode=mode,
        timebase=TimeBase(a.rate, a.duration),
        eps_scale=a.eps_scale,
        noise=a.noise,
        seed=a.seed,
        detector=a.detector,
        out=a.out,
        window=a.window,
    )


def _conventions(a):
    conv = a.convention
    custom = None
    if conv[0] == "custom":
        if len(conv) != 2:
            raise UsageError("--convention custom needs a FILE")
        custom = conv[1]
        names = ["custom"]
    else:
        if len(conv) != 1:
            raise UsageError("--convention takes one of adjoint, c-arm, custom FILE")
        names = [{"adjoint": "adjoint", "c-arm": "c_arm_only"}.get(conv[0], "")]
        if not names[0]:
            raise UsageError(f"unknown convention {conv[0]!r}")
    if a.all_conventions:
        names = ["adjoint", "c_arm_only"] + (["custom"] if custom else [])
    return names, custom


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        cfg = _config(a)
        if a.command == "run":
            res = cmd_run(cfg)
        elif a.command == "sweep":
            try:
                eps = [float(x) for x in a.eps.split(",") if x.strip()]
            except ValueError as exc:
                raise UsageError(f"bad --eps list: {exc}") from exc
            res = cmd_sweep(cfg, eps)
        elif a.command == "weak":
            names, custom = _conventions(a)
            res = cmd_weak(cfg, names, custom, a.c_arm)
        else:
            if a.max_degree > orders_mod.MAX_DEGREE:
                raise orders_mod.LatticeOverflowError(
                    f"--max-degree {a.max_degree} exceeds supported {orders_mod.MAX_DEGREE}")
            res = cmd_orders(cfg, a.max_degree, a.verify)
    except (UsageError, NetlangError, orders_mod.LatticeOverflowError) as exc:
        print(f"weaktrace: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"weaktrace: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, FileNotFoundError) else 1
    except (ValueError, RuntimeError, ArithmeticError, KeyError) as exc:
        print(f"weaktrace: error: {exc}", file=sys.stderr)
        return 1
    json.dump(res, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
