from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weaktrace import orders
from weaktrace.netlang import parse_network, scale_vibrations, validate
from weaktrace.presets import NAMES, preset_text
from weaktrace.propagate import Modal, TimeBase, propagate_static, relative_l2, simulate
from weaktrace.spectrum import peak_power, power_spectrum


def preset(name, scale=20.0):
    return validate(scale_vibrations(parse_network(preset_text(name)), scale))


def single(amp=0.01, phase=0.0, f=307.0):
    return validate(parse_network(
        f"source S -> a\nmirror M on a vibrate(f={f!r} Hz, amp={amp!r}, phase={phase!r})\ndetector D quadcell on a"))


def test_no_vibration_single_key():
    net = preset("nested_aligned", 0.0)
    tp = orders.symbolic_propagate(net, 2)["D"]
    assert list(tp.terms) == [(0, (), ())]
    assert abs(tp.terms[(0, (), ())] - propagate_static(net)["D"]) < 1e-15
    assert orders.classify_lines(tp).lines == ()


def test_single_mirror_first_order_keys():
    tp = orders.symbolic_propagate(single(), 1)["D"]
    # sin = (e^{+} - e^{-}) / 2i and the shift feeds mode 1 with d / sqrt(2)
    c = 1 / (2j * math.sqrt(2))
    assert set(tp.terms) == {(0, (0,), (0,)), (1, (1,), (1,)), (1, (-1,), (1,))}
    assert tp.coefficient(0, (0,), (0,)) == 1
    assert abs(tp.coefficient(1, (1,), (1,)) - c) < 1e-16
    assert abs(tp.coefficient(1, (-1,), (1,)) + c) < 1e-16


def test_nested_aligned_e_cancels_on_detector_arm():
    tp = orders.symbolic_propagate(preset("nested_aligned"), 1)["D"]
    names = tp.mirrors
    e, a, b = names.index("E"), names.index("A"), names.index("B")
    assert all(abs(c) < 1e-15 for (n, m, k), c in tp.terms.items() if k[e] == 1) or not any(
        k[e] == 1 for _, _, k in tp.terms)
    assert any(k[a] == 1 for _, _, k in tp.terms)
    assert any(k[b] == 1 for _, _, k in tp.terms)


def test_single_path_line():
    lt = orders.classify_lines(orders.symbolic_propagate(single(), 2)["D"])
    ln = lt.find("f_M")
    assert ln.order == 1 and ln.interferes_with_zeroth and ln.freq_hz == 307.0
    # S ~ (2/sqrt(pi)) eps sin: phasor magnitude 2/sqrt(pi)
    assert ln.amplitude == pytest.approx(2 / math.sqrt(math.pi), abs=1e-12)


def test_nested_aligned_lines():
    lt = orders.classify_lines(orders.symbolic_propagate(preset("nested_aligned"), 2)["D"])
    for m in "ABC":
        ln = lt.find(f"f_{m}")
        assert ln is not None and ln.order == 1 and ln.interferes_with_zeroth
    assert lt.at(318.0) is None
    # the difference signal is odd in the displacements: no second-order lines at all
    assert all(ln.order % 2 == 1 for ln in lt.lines)


def test_nested_aligned_f_e_absent_at_degree_three():
    lt = orders.classify_lines(orders.symbolic_propagate(preset("nested_aligned"), 3)["D"])
    assert lt.at(318.0) is None
    assert lt.find("f_F") is None


def test_nested_aligned_power_channel_combination_lines():
    lt = orders.classify_lines(orders.symbolic_propagate(preset("nested_aligned"), 2)["D"], "P")
    for expr, f in (("f_F-f_A", 50.0), ("f_B+f_F", 628.0)):
        ln = lt.find(expr)
        assert ln.order == 2 and ln.interferes_with_zeroth and ln.freq_hz == f
    # f_A + f_F shares 614 Hz with f_B + f_E and 2 f_C; the three cancel
    assert lt.at(614.0) is None


def test_nested_misaligned_lines():
    lt = orders.classify_lines(orders.symbolic_propagate(preset("nested_misaligned"), 2)["D"])
    assert lt.find("f_E").order == 1
    assert lt.find("f_F").order == 1


def test_line_table_invariants():
    for name in NAMES:
        for ch in ("S", "P"):
            lt = orders.classify_lines(orders.symbolic_propagate(preset(name), 2)[preset(name).detectors[0].name], ch)
            freqs = [ln.freq_hz for ln in lt.lines]
            assert len(set(freqs)) == len(freqs)
            assert all(ln.order >= 1 for ln in lt.lines)


@pytest.mark.parametrize("name", NAMES)
def test_reconstruction_consistency(name):
    net = preset(name)
    tb = TimeBase(10000.0, 0.2)
    recs = simulate(net, tb, Modal(4))
    tps = orders.symbolic_propagate(net, 2, K=4)
    sim = np.concatenate([recs[d].S for d in recs])
    rec = np.concatenate([tps[d].reconstruct(tb.times) for d in recs])
    assert relative_l2(rec, sim) <= 1e-4


@pytest.mark.parametrize("name", NAMES)
def test_reconstruction_error_order(name):
    # S is odd in the shifts, so the D=2 residual is the cubic term: relative error ~ eps^2
    tb = TimeBase(10000.0, 0.2)
    errs = []
    for scale in (10.0, 20.0):
        net = preset(name, scale)
        recs = simulate(net, tb, Modal(4))
        tps = orders.symbolic_propagate(net, 2, K=4)
        sim = np.concatenate([recs[d].S for d in recs])
        rec = np.concatenate([tps[d].reconstruct(tb.times) for d in recs])
        errs.append(relative_l2(rec, sim))
    assert math.log2(errs[1] / errs[0]) == pytest.approx(2.0, abs=0.05)
    net = preset(name)
    recs = simulate(net, tb, Modal(4))
    tps = orders.symbolic_propagate(net, 3, K=4)
    sim = np.concatenate([recs[d].S for d in recs])
    rec = np.concatenate([tps[d].reconstruct(tb.times) for d in recs])
    assert relative_l2(rec, sim) < 1e-7


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.05), st.floats(-math.pi, math.pi), st.integers(1, 3))
def test_conjugate_symmetry_real_path(amp, phase, D):
    tp = orders.symbolic_propagate(single(amp, phase), D)["D"]
    for (n, m, k), c in tp.terms.items():
        other = tp.coefficient(n, tuple(-x for x in m), k)
        assert abs(c - np.conj(other)) <= 1e-15 * max(1.0, abs(c))


def test_prune_keeps_everything_above_threshold():
    terms = {i: 10.0 ** -i for i in range(20)}
    kept = orders._prune(dict(terms))
    assert all(i in kept for i in range(13))
    assert all(v > 1e-15 for v in kept.values())


def test_predict_spectrum():
    lt = orders.classify_lines(orders.symbolic_propagate(preset("nested_aligned"), 2)["D"], "P")
    full = {p.label: p for p in orders.predict_spectrum(lt, 0.01)}
    half = {p.label: p for p in orders.predict_spectrum(lt, 0.005)}
    for ln in lt.lines:
        assert full[ln.label].power == pytest.approx((ln.amplitude * 0.01 ** ln.order) ** 2, rel=1e-14)
        if ln.order == 2:
            assert half[ln.label].power / full[ln.label].power == pytest.approx(1 / 16, rel=1e-12)
    with pytest.raises(ValueError):
        orders.predict_spectrum(lt, 0.06)


def test_predicted_f_c_matches_simulation():
    net = preset("nested_aligned")
    lt = orders.classify_lines(orders.symbolic_propagate(net, 2)["D"])
    pred = {p.label: p.power for p in orders.predict_spectrum(lt, 0.01)}
    sim = peak_power(power_spectrum(simulate(net, TimeBase(), Modal())["D"]), 307.0)
    assert abs(sim / pred["f_C"] - 1) < 0.05


def test_arm_presence():
    rep = orders.arm_presence_report(preset("nested_aligned"), 2)
    assert rep.magnitude("E", 0) == pytest.approx(math.sqrt(2 / 3), abs=1e-14)
    assert rep.magnitude("F", 0) < 1e-15
    assert rep.magnitude("F", 1) > 1e-3
    assert rep.lines["D"]["S"].at(318.0) is None
    mzi = orders.arm_presence_report(preset("simple_mzi"), 2)
    assert mzi.magnitude("dark_arm", 0) < 1e-15
    assert mzi.magnitude("dark_arm", 1) > 1e-3


def test_lattice_overflow():
    with pytest.raises(orders.LatticeOverflowError):
        orders.symbolic_propagate(preset("nested_aligned"), 4)


def test_json_report_fields():
    lt = orders.classify_lines(orders.symbolic_propagate(preset("nested_aligned"), 2)["D"])
    rows = orders.line_table_json(lt, 0.01)
    assert set(rows[0]) == {"line", "freq_hz", "order", "coefficient", "phase_rad", "interferes_with_zeroth",
                            "predicted_power"}
    fc = next(r for r in rows if r["line"] == "f_C")
    assert fc["coefficient"] == pytest.approx(abs(cmath.rect(fc["coefficient"], fc["phase_rad"])))


def test_lattice_labels():
    assert orders.lattice_label((1, 0, -1), ("A", "B", "F")) == "f_A-f_F"
    assert orders.lattice_label((0, 2, 0), ("A", "B", "F")) == "2f_B"
    lt = orders.classify_lines(orders.symbolic_propagate(preset("nested_aligned"), 2)["D"], "P")
    assert lt.find("f_A-f_F") is lt.find("f_F-f_A") or lt.find("f_A-f_F") is None
