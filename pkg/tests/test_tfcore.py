import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclink import tfcore as tf
from aclink.errors import DegenerateSystemError, DomainError

L, C, R = 1e-3, 33e-6, 2 * np.pi * 8 * 1e-3
TD = 0.5 / 6000.0

# zero or reasonably sized: coefficient ratios near 1e300 are not a meaningful test
coef = st.one_of(st.just(0.0), st.floats(1e-3, 5.0), st.floats(-5.0, -1e-3))


def test_polynomial_trims_and_evaluates():
    p = tf.Polynomial([1.0, 2.0, 0.0, 0.0])
    assert p.degree == 1
    assert p(3.0) == 7.0
    assert (p * p).coeffs.tolist() == [1.0, 4.0, 4.0]
    assert tf.Polynomial([0.0]).is_zero()


def test_polynomial_rejects_nonfinite():
    with pytest.raises(DomainError):
        tf.Polynomial([1.0, np.nan])


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=6, unique=True))
def test_roots_of_constructed_polynomial(milli):
    # well-separated roots so the comparison is conditioned
    rts = [m / 100.0 for m in milli]
    c = np.polynomial.polynomial.polyfromroots(rts)
    got = np.sort(tf.poly_roots(c).real)
    assert np.allclose(got, np.sort(rts), atol=1e-6 * max(1.0, max(map(abs, rts))))


def test_roots_at_origin_are_exact():
    r = tf.poly_roots([0.0, 0.0, 2.0, 1.0])
    assert np.sum(r == 0) == 2
    assert np.isclose(r[r != 0][0].real, -2.0)


@settings(max_examples=300)
@given(st.integers(1, 6).flatmap(lambda n: st.lists(coef, min_size=n + 1, max_size=n + 1)))
def test_routh_agrees_with_roots(coeffs):
    c = np.array(coeffs)
    if c[-1] == 0.0:
        c[-1] = 1.0
    roots = tf.poly_roots(c)
    re = roots.real
    # skip cases within rounding of the imaginary axis
    margin = 1e-6 * max(1.0, np.max(np.abs(roots)))
    if np.any(np.abs(re) < margin):
        return
    assert tf.routh_hurwitz_stable(c) == bool(np.all(re < 0))


def test_routh_known_cases():
    assert tf.routh_hurwitz_stable([6.0, 11.0, 6.0, 1.0])  # (s+1)(s+2)(s+3)
    assert not tf.routh_hurwitz_stable([1.0, 0.0, 1.0])  # s^2 + 1
    assert not tf.routh_hurwitz_stable([-1.0, 1.0])
    assert not tf.routh_hurwitz_stable([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])


def test_pade_is_exact_form():
    d = tf.make_pade_delay(TD)
    assert np.allclose(d.num.coeffs, [1.0, -TD / 2, TD * TD / 12], rtol=0, atol=0)
    assert np.allclose(d.den.coeffs, [1.0, TD / 2, TD * TD / 12], rtol=0, atol=0)
    assert abs(d.dc_gain() - 1.0) == 0.0


@given(st.floats(1e-7, 1e-2), st.floats(-2, 6))
def test_pade_all_pass(Td, logw):
    d = tf.make_pade_delay(Td)
    w = 10.0 ** logw
    assert abs(abs(d(1j * w)) - 1.0) < 1e-12


def test_pade_all_pass_eight_decades():
    d = tf.make_pade_delay(TD)
    w = np.logspace(0, 8, 400)
    assert np.max(np.abs(np.abs(d(1j * w)) - 1.0)) < 1e-12


def test_pade_phase_near_exact_at_inverse_delay():
    d = tf.make_pade_delay(TD)
    w = 1.0 / TD
    ph = np.degrees(np.angle(d(1j * w)))
    assert abs(ph - (-np.degrees(w * TD))) < 0.5


@pytest.mark.parametrize("Td", [0.0, -1e-6])
def test_pade_rejects_nonpositive(Td):
    with pytest.raises(DomainError):
        tf.make_pade_delay(Td)


@pytest.mark.parametrize("f_c", [8.0, 160.0, 320.0])
def test_hpf_half_power_at_corner(f_c):
    h = tf.make_hpf(f_c)
    m = 20 * np.log10(abs(h(2j * np.pi * f_c)))
    assert abs(m - 20 * np.log10(np.sqrt(0.5))) < 1e-9
    assert h.dc_gain() == 0.0


def test_plant_dc_gain_and_resonance():
    p = tf.make_plant(L, C, R)
    assert p.dc_gain() == 1.0
    f0 = 1.0 / (2 * np.pi * np.sqrt(L * C))
    fr = tf.freq_response(p, tf.log_grid(1, 10e3, 200, p))
    f_pk, _ = fr.peak()
    assert abs(f_pk - f0) < 5.0
    assert abs(f0 - 876.3) < 5.0


@pytest.mark.parametrize("bad", [dict(L=0), dict(C=-1), dict(r=-0.1)])
def test_plant_domain(bad):
    kw = dict(L=L, C=C, r=R) | bad
    with pytest.raises(DomainError):
        tf.make_plant(**kw)


def test_compensator_zero_at_eight_hz():
    comp = tf.make_compensator(0.2, L, R)
    z = comp.zeros()
    assert np.isclose(abs(z[0]) / (2 * np.pi), 8.0)
    assert np.isclose(tf.zero_hz_of_inductor(L, R), 8.0)
    with pytest.raises(DomainError):
        tf.make_compensator(0.0, L, R)


@settings(max_examples=50)
@given(st.floats(1e-6, 1e-3), st.floats(0.01, 2.0), st.floats(1.0, 2000.0))
def test_forward_loop_composes_pointwise(Td, k, f_c):
    d = tf.make_pade_delay(Td)
    c = tf.make_compensator(k, L, R, tf.make_hpf(f_c))
    p = tf.make_plant(L, C, R)
    f = tf.log_grid(1.0, 10e3, 50)
    whole = tf.freq_response(tf.forward_loop(d, c, p), f).magnitude_db
    parts = sum(tf.freq_response(x, f).magnitude_db for x in (d, c, p))
    assert np.max(np.abs(whole - parts)) < 1e-9


def test_closed_loop_without_compensator_is_delay_times_plant():
    d = tf.make_pade_delay(TD)
    p = tf.make_plant(L, C, R)
    cl = tf.closed_loop_grid_tf(d, None, p)
    assert cl.equals(d * p)
    zero = tf.TransferFunction(tf.Polynomial([0.0]), tf.Polynomial([1.0]))
    assert tf.closed_loop_grid_tf(d, zero, p).equals(d * p)


@pytest.mark.parametrize("hpf", [None, 160.0, 320.0])
def test_damped_loop_stable_both_ways(hpf):
    d = tf.make_pade_delay(TD)
    p = tf.make_plant(L, C, R)
    c = tf.make_compensator(0.2, L, R, None if hpf is None else tf.make_hpf(hpf))
    cl = tf.closed_loop_grid_tf(d, c, p)
    rep = tf.stability(cl)
    assert rep.is_stable
    assert tf.routh_hurwitz_stable(cl.den.coeffs)


def test_degenerate_closed_loop():
    one = tf.TransferFunction.gain(1.0)
    neg = tf.TransferFunction.gain(-1.0)
    with pytest.raises(DegenerateSystemError):
        tf.closed_loop_grid_tf(one, neg, one)


def test_stability_flags_axis_poles():
    rep = tf.stability(tf.TransferFunction(tf.Polynomial([1.0]), tf.Polynomial([1.0, 0.0, 1.0])))
    assert not rep.is_stable


def test_freq_response_marks_poles_on_axis():
    h = tf.TransferFunction(tf.Polynomial([1.0]), tf.Polynomial([1.0, 0.0, 1.0 / (2 * np.pi) ** 2]))
    fr = tf.freq_response(h, [0.5, 1.0, 2.0])
    assert fr.infinite.tolist() == [False, True, False]
    with pytest.raises(DomainError):
        tf.freq_response(h, [2.0, 1.0])


def test_margins_of_integrator():
    # 1000/s: no phase crossover, 90 deg margin at 159 Hz
    ol = tf.TransferFunction(tf.Polynomial([1000.0]), tf.Polynomial([0.0, 1.0]))
    gm, pm = tf.margins(ol)
    assert gm is None
    assert abs(pm - 90.0) < 1e-6


def test_select_parameters():
    r = tf.select_parameters(6000.0, L, C, R)
    assert r.damping_bw_target == 600.0
    assert r.current_loop_bw_max == 60.0
    assert np.isclose(r.hpf_zero_hz, 8.0)
    with pytest.raises(DomainError):
        tf.select_parameters(0.0, L, C, R)


def test_log_grid_densifies_near_resonance():
    p = tf.make_plant(L, C, R)
    plain = tf.log_grid(1, 10e3, 50)
    dense = tf.log_grid(1, 10e3, 50, p)
    assert dense.size > plain.size
    assert np.all(np.diff(dense) > 0)
