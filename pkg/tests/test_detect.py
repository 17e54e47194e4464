from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weaktrace.detect import DetectorRecord, add_noise, quad_cell
from weaktrace.optics import GridField, ModalField, displacement_matrix, grid_shift, hg_mode
from weaktrace.propagate import TimeBase


def test_centered_gaussian():
    S, P = quad_cell(GridField.gaussian())
    assert abs(S) < 1e-15
    assert P == pytest.approx(1.0, abs=1e-12)
    S, P = quad_cell(ModalField.fundamental())
    assert S == 0.0 and P == 1.0


def test_shifted_gaussian_grid_is_erf():
    S, P = quad_cell(grid_shift(GridField.gaussian(), 0.01))
    assert abs(S - math.erf(0.01)) <= 1e-9
    assert abs(P - 1) < 1e-12


@pytest.mark.parametrize("d", [0.001, 0.05, 0.3, -0.2])
def test_grid_readout_exact_for_shifts(d):
    S, _ = quad_cell(grid_shift(GridField.gaussian(), d))
    assert abs(S - math.erf(d)) < 1e-12


def test_midpoint_rule_is_second_order_accurate():
    S, _ = quad_cell(grid_shift(GridField.gaussian(), 0.01), rule="midpoint")
    assert abs(S - math.erf(0.01)) < 1e-6
    with pytest.raises(ValueError):
        quad_cell(GridField.gaussian(), rule="simpson")


def test_modal_k2_linear_response():
    c = displacement_matrix(0.01, 1.0, 2)[:, 0]
    S, P = quad_cell(ModalField(c))
    assert abs(S - 2 / math.sqrt(math.pi) * 0.01) <= 1e-6
    assert P == pytest.approx(1.0, abs=1e-14)


@st.composite
def _small_modes(draw):
    c = [complex(draw(st.floats(0.5, 2)), draw(st.floats(-1, 1)))]
    for _ in range(3):
        mag = draw(st.floats(0, 0.05)) * abs(c[0])
        ang = draw(st.floats(0, 2 * math.pi))
        c.append(mag * complex(math.cos(ang), math.sin(ang)))
    return np.array(c)


@settings(max_examples=50, deadline=None)
@given(_small_modes())
def test_modal_and_grid_agree(c):
    y = GridField.gaussian().y
    samples = sum(cn * hg_mode(n, y) for n, cn in enumerate(c))
    Sg, Pg = quad_cell(GridField(samples))
    Sm, Pm = quad_cell(ModalField(c))
    assert abs(Sg - Sm) <= 1e-6 * Pm
    assert abs(Pg - Pm) <= 1e-12 * Pm


@settings(max_examples=100, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=1, max_size=8))
def test_s_bounded_by_p_modal(coeffs):
    S, P = quad_cell(ModalField(np.array(coeffs)))
    assert abs(S) <= P * (1 + 1e-12) + 1e-300


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(0.1, 3))
def test_s_bounded_by_p_grid(d, a):
    f = grid_shift(GridField.gaussian(), d)
    g = GridField(a * f.samples + 0.3j * np.roll(f.samples, 40))
    S, P = quad_cell(g)
    assert abs(S) <= P * (1 + 1e-12)


def _record(n=100000):
    tb = TimeBase(10000.0, n / 10000.0)
    return DetectorRecord("D", np.zeros(n), np.ones(n), tb)


def test_noise_identity_and_determinism():
    rec = _record()
    assert add_noise(rec, 0.0, 1) is rec
    a = add_noise(rec, 0.2, 7)
    b = add_noise(rec, 0.2, 7)
    assert np.array_equal(a.S, b.S)
    assert np.array_equal(a.P, rec.P)
    assert not np.array_equal(a.S, add_noise(rec, 0.2, 8).S)
    with pytest.raises(ValueError):
        add_noise(rec, -1.0, 0)


def test_noise_variance():
    a = add_noise(_record(), 0.3, 11)
    assert abs(np.var(a.S) / 0.09 - 1) < 0.03


def test_normalized_flags_dark_samples():
    tb = TimeBase(10000.0, 0.002)
    P = np.ones(20)
    P[3] = 1e-13
    rec = DetectorRecord("D", np.full(20, 0.5), P, tb)
    s, ok = rec.normalized()
    assert np.isnan(s[3]) and not ok[3]
    assert np.all(s[ok] == 0.5)


def test_record_length_checked():
    with pytest.raises(ValueError):
        DetectorRecord("D", np.zeros(5), np.zeros(5), TimeBase(10000.0, 0.002))
