"""
Waveform and event-log metrics: THD, step response figures, switching
frequency, soft-switching and energy checks.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import signal

from ..errors import DomainError
from .results import GATE_OFF, GATE_ON, MODE_TRANSITION

RESONANT_TAGS = {f"M{m}" for m in (2, 4, 6, 8, 10, 12)}


def thd(samples, f0, fs, n_harm=50):
    """
    Total harmonic distortion from exact harmonic bins.

    Parameters
    ----------
    samples : array_like
        Uniformly sampled waveform spanning an integer number (>= 5) of
        fundamental periods.
    f0, fs : float
        Fundamental and sampling frequency (Hz).
    n_harm : int
        Highest harmonic included.

    Returns
    -------
    float
        ``sqrt(sum_{h=2..n_harm} X_h^2) / X_1``.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise DomainError("samples must be one-dimensional")
    if not fs > 2.0 * n_harm * f0:
        raise DomainError(f"fs = {fs:g} Hz must exceed 2*n_harm*f0 = {2 * n_harm * f0:g} Hz")
    periods = x.size * f0 / fs
    p = int(round(periods))
    if abs(periods - p) > 1e-6 * max(periods, 1.0):
        raise DomainError(f"window spans {periods:.6f} fundamental periods; an integer is required")
    if p < 5:
        raise DomainError(f"window spans {p} periods; at least 5 are required")
    spec = np.abs(np.fft.rfft(x))
    bins = p * np.arange(1, n_harm + 1)
    bins = bins[bins < spec.size]
    h = spec[bins]
    if h[0] == 0.0:
        raise DomainError("fundamental component is zero")
    return float(np.sqrt(np.sum(h[1:] ** 2)) / h[0])


def thd_window(trace, f0, periods=5, t_end=None, column="i_ga"):
    """THD of ``column`` over the last ``periods`` fundamental periods."""
    t = trace["t"]
    dt = float(np.median(np.diff(t)))
    n = int(round(periods / (f0 * dt)))
    if t_end is None:
        x = trace[column][-n:]
    else:
        stop = int(np.searchsorted(t, t_end - 0.5 * dt))
        x = trace[column][stop - n:stop]
    if x.size < n:
        raise DomainError("trace too short for the requested THD window")
    return thd(x, f0, 1.0 / dt)


# %% step response

def step_metrics(trace, t_step, channel="iq", step_size=None, period=1.0 / 60.0,
                 smooth=None):
    """
    Overshoot, 2 % settling time and disturbance energy after a step.

    Parameters
    ----------
    trace : Trace
    t_step : float
        Step instant (s).
    channel : str
        Trace column.
    step_size : float, optional
        Band reference; defaults to the change of the channel between the
        pre-step and final steady values.  Pass the primary-axis step when
        evaluating a cross-axis channel.
    period : float
        Averaging window for the steady values (s).
    smooth : float, optional
        Moving-average length (s) applied before evaluating the band.

    Returns
    -------
    dict
        ``overshoot``, ``settling_time_2pct``, ``disturbance_energy`` and
        ``settled``; an unsettled response has ``settled = False`` and
        ``settling_time_2pct = nan``.
    """
    t = trace["t"]
    y = np.asarray(trace[channel], dtype=float)
    if not t[0] < t_step < t[-1]:
        raise DomainError("step time must lie inside the trace")
    if smooth:
        dt = float(np.median(np.diff(t)))
        n = max(int(round(smooth / dt)), 1)
        y = np.convolve(y, np.ones(n) / n, mode="full")[:y.size]
        y[:n - 1] = y[n - 1]
    pre_m = (t >= t_step - period) & (t < t_step)
    post_m = t >= t[-1] - period
    if not pre_m.any() or t[-1] - t_step < 2 * period:
        raise DomainError("trace lacks steady windows around the step")
    y0 = float(np.mean(y[pre_m]))
    yf = float(np.mean(y[post_m]))
    size = yf - y0 if step_size is None else float(step_size)
    after = t >= t_step
    ta, ya = t[after], y[after]
    dist = float(np.trapezoid((ya - yf) ** 2, ta)) if ta.size > 1 else 0.0
    if size == 0.0:
        return {"overshoot": math.nan, "settling_time_2pct": math.nan,
                "disturbance_energy": dist, "settled": False}
    over = max(0.0, float(np.max((ya - yf) * np.sign(size))) / abs(size))
    band = 0.02 * abs(size)
    out = np.nonzero(np.abs(ya - yf) > band)[0]
    if out.size == 0:
        ts = 0.0
    else:
        k = out[-1]
        ts = float(ta[k + 1] - t_step) if k + 1 < ta.size else math.nan
    settled = math.isfinite(ts) and (ta[-1] - (t_step + ts)) >= period
    if not settled:
        ts = math.nan
    return {"overshoot": over, "settling_time_2pct": ts,
            "disturbance_energy": dist, "settled": bool(settled)}


# %% switching-level metrics

def measured_switching_frequency(log, window=None):
    """
    Reciprocal of the mean mode-1 to mode-1 interval.

    ``window`` is ``(t0, t1)`` or a float meaning the last ``window``
    seconds of the log.  At least ten full cycles are required.
    """
    t = log.mode_entries(1)
    if window is not None:
        if np.isscalar(window):
            t_end = max(e.t for e in log)
            t0, t1 = t_end - float(window), t_end
        else:
            t0, t1 = window
        t = t[(t >= t0) & (t <= t1)]
    if t.size < 11:
        raise DomainError(f"window holds {max(t.size - 1, 0)} link cycles; at least 10 needed")
    return float(1.0 / np.mean(np.diff(t)))


def cycle_average(trace, log, column="iq", t0=0.0, t1=np.inf):
    """
    Per-link-cycle mean of a trace column.

    Returns ``(t_mid, values)`` for cycles between consecutive mode-1
    entries that lie inside ``[t0, t1]``.
    """
    edges = log.mode_entries(1)
    edges = edges[(edges >= t0) & (edges <= t1)]
    t = trace["t"]
    y = trace[column]
    c = np.concatenate([[0.0], np.cumsum(y)])
    idx = np.searchsorted(t, edges)
    mids, vals = [], []
    for a, b, ta, tb in zip(idx[:-1], idx[1:], edges[:-1], edges[1:]):
        if b > a:
            mids.append(0.5 * (ta + tb))
            vals.append((c[b] - c[a]) / (b - a))
    return np.array(mids), np.array(vals)


def zvs_ratios(log, C_link):
    """
    ``|v_device|`` of every gate event relative to its cycle's peak link
    voltage (the link voltage at the preceding half-cycle start, where the
    magnetising current is zero and all energy sits in the capacitor).
    """
    out = []
    v_pk = math.nan
    for e in log:
        if e.kind == MODE_TRANSITION and e.switch in ("M1", "M7"):
            v_pk = math.sqrt(2.0 * e.link_energy / C_link)
        elif e.kind in (GATE_ON, GATE_OFF):
            out.append(abs(e.v_device) / v_pk)
    return np.array(out)


def resonance_energy_drift(log):
    """Relative link-energy change across every non-empty resonant interval."""
    rows = log.of_kind(MODE_TRANSITION)
    out = []
    for a, b in zip(rows[:-1], rows[1:]):
        if a.switch in RESONANT_TAGS and b.t > a.t:
            out.append(abs(b.link_energy - a.link_energy) / a.link_energy)
    return np.array(out)


def mode_durations(log):
    """``{mode: array of durations}`` from the mode-transition rows."""
    rows = log.of_kind(MODE_TRANSITION)
    out = {}
    for a, b in zip(rows[:-1], rows[1:]):
        out.setdefault(int(a.switch[1:]), []).append(b.t - a.t)
    return {k: np.array(v) for k, v in out.items()}


def power_balance(cycles, period, t0=0.0):
    """
    Relative input/output energy mismatch per fundamental period.

    Half cycles are grouped by start time into consecutive periods from
    ``t0``; incomplete trailing periods are dropped.
    """
    groups = {}
    for c in cycles:
        if c.t_start < t0:
            continue
        k = int((c.t_start - t0) // period)
        e = groups.setdefault(k, [0.0, 0.0])
        e[0] += c.e_in
        e[1] += c.e_out
    last = max(groups) if groups else -1
    out = []
    for k in sorted(groups):
        if k == last:
            continue
        e_in, e_out = groups[k]
        if e_in > 0:
            out.append(abs(e_in - e_out) / e_in)
    return np.array(out)


def mode_sequence_ok(log):
    """True when mode transitions follow 1, 2, ..., 12, 1, ... without gaps."""
    modes = [int(e.switch[1:]) for e in log.of_kind(MODE_TRANSITION)]
    return all(b == a % 12 + 1 for a, b in zip(modes[:-1], modes[1:]))


# %% resonance envelope

def bandpass(x, fs, lo=500.0, hi=1500.0, order=2):
    """Zero-phase Butterworth band-pass."""
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return signal.sosfiltfilt(sos, x)


def resonance_envelope(trace, f_res, column="i_ga", t0=0.0, lo=500.0, hi=1500.0):
    """
    Peak of the band-passed channel in each resonance period from ``t0``.

    Returns ``(t_start, envelope)`` per period.
    """
    fs = trace.sample_rate
    y = bandpass(trace[column], fs, lo, hi)
    t = trace["t"]
    n = int(round(fs / f_res))
    i0 = int(np.searchsorted(t, t0))
    m = (y.size - i0) // n
    seg = np.abs(y[i0:i0 + m * n]).reshape(m, n)
    return t[i0:i0 + m * n:n], seg.max(axis=1)


def decays_monotonically(env, band=0.02, hold=30, ref=None):
    """
    True when the envelope falls without any rise from its peak into
    ``band`` times the reference and then stays in that band for ``hold``
    cycles.

    ``ref`` defaults to the envelope peak; pass the peak of a longer record
    when judging only its tail.  Returns ``False`` when the peak is the last
    sample or the record after band entry is shorter than ``hold`` cycles.
    """
    e = np.asarray(env, dtype=float)
    if e.size < 2:
        return False
    k = int(np.argmax(e))
    tail = e[k:]
    level = band * (tail[0] if ref is None else float(ref))
    inside = np.nonzero(tail <= level)[0]
    if inside.size == 0:
        return False
    j = int(inside[0])
    if not np.all(np.diff(tail[:j + 1]) <= 0.0):
        return False
    later = tail[j:j + hold + 1]
    return bool(later.size == hold + 1 and np.all(later <= level))


def dominant_frequency(x, fs, f_lo=100.0, f_hi=5000.0):
    """Frequency of the largest spectral line in ``[f_lo, f_hi]`` (Hann window)."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    pad = 1 << int(math.ceil(math.log2(8 * n)))
    spec = np.abs(np.fft.rfft(x * np.hanning(n), pad))
    f = np.fft.rfftfreq(pad, 1.0 / fs)
    m = (f >= f_lo) & (f <= f_hi)
    return float(f[m][np.argmax(spec[m])])


def steady_state_time(trace, period, tol=0.005, n_periods=5, columns=("iq", "id"),
                      t0=0.0):
    """
    First time after ``t0`` at which the per-period RMS of every dq current
    varied by less than ``tol`` over ``n_periods`` consecutive periods.

    Returns ``nan`` when no such window exists.  The variation is relative
    to the RMS magnitude of the dq current vector.
    """
    t = trace["t"]
    dt = float(np.median(np.diff(t)))
    n = int(round(period / dt))
    i0 = int(np.searchsorted(t, t0))
    m = (t.size - i0) // n
    if m < n_periods:
        return math.nan
    rms = {}
    for c in columns:
        seg = trace[c][i0:i0 + m * n].reshape(m, n)
        rms[c] = np.sqrt(np.mean(seg ** 2, axis=1))
    scale = np.sqrt(sum(r ** 2 for r in rms.values()))
    for k in range(m - n_periods + 1):
        ref = max(float(np.mean(scale[k:k + n_periods])), 1e-12)
        if all(np.ptp(r[k:k + n_periods]) < tol * ref for r in rms.values()):
            return float(t[i0 + k * n])
    return math.nan
