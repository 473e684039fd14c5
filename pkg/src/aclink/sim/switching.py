"""
Switching-level simulation of the AC-link inverter.

The twelve-mode automaton is driven here; the continuous dynamics between
events run in :mod:`aclink.sim.kernel`.  The controller is sampled at the
start of every half cycle (entry of modes 1 and 7), which also latches the
modulator plan.
"""
from __future__ import annotations

import math

import numpy as np

from .. import acside
from ..control import Controller, DqPair
from ..converter import SwitchId, device_voltage, link_energy, LinkState
from ..errors import SimulationError
from ..modulator import (IDLE_PLAN, PeriodEstimate, begin_half_cycle,
                         update_period_estimate)
from . import kernel as K
from .results import (GATE_OFF, GATE_ON, MODE_TRANSITION, EventLog, HalfCycle,
                      SimResult, Trace)

_SH = acside.SHIFTS
# pair-voltage hysteresis for hand-overs between the two output pairs,
# relative to the nominal line-line peak; bounds the device voltage at a swap
HANDOVER_BAND = 2.5e-3


class _SwitchingRun:

    def __init__(self, cfg):
        self.cfg = cfg
        cp, fp, gp = cfg.converter, cfg.filter, cfg.grid
        self.cp, self.fp, self.gp = cp, fp, gp
        self.prm = np.array([cp.L_M, cp.C_link, cp.n, cp.v_in, fp.L, fp.C, fp.r,
                             gp.v_phase_peak, gp.omega, gp.phase0], dtype=float)
        self.x = np.zeros(K.NX)
        self.idx = np.zeros(6, dtype=np.int64)
        self.ftgt = np.zeros(3)
        self.events = EventLog()
        self.cycles = []
        self.rows = []
        self.controller = Controller(cfg.control, gp, cp.v_in, theta0=gp.angle(0.0))
        if cfg.prelocked:
            self.controller.lock.locked = True
        self.period = PeriodEstimate()
        self.v_ll_nominal_peak = math.sqrt(2.0) * gp.v_ll_rms
        self.t = 0.0
        self.mode = 1
        self.t_mode = 0.0
        self.seg = (K.RES, 1, K.P_NONE, K.P_NONE)
        self.conducting = False
        self.plan = IDLE_PLAN
        self.first = None
        self.second = None
        self.e_res = 0.0
        self.half_starts = []
        self.t_latch = 0.0
        self.latches = 0
        self.anomalies = 0
        self.crossings = 0
        self.skipped = 0
        self.acc = np.zeros(6)
        self.half = None

    # -- helpers ---------------------------------------------------------

    def energy(self):
        return link_energy(self.x[0], self.x[1], self.cp)

    def log_mode(self, mode):
        self.mode = mode
        self.t_mode = self.t
        self.events.add(self.t, MODE_TRANSITION, f"M{mode}", math.nan, self.energy())

    def log_gate(self, switch, on, v_dev):
        self.events.add(self.t, GATE_ON if on else GATE_OFF, switch.name, v_dev, self.energy())

    def pol(self):
        return 1 if self.mode <= 6 else -1

    def pair_voltage(self, pair):
        pos, neg = self.plan.positive_negative(pair)
        return self.x[2 + pos] - self.x[2 + neg]

    def output_vdev(self, switch, partner):
        return device_voltage(switch, LinkState(self.x[0], self.x[1]), self.cp.v_in,
                              self.x[2:5], self.pol(), partner, self.cp)

    def other_of(self, pair):
        c = self.plan.common_phase
        return pair[1] if pair[0] == c else pair[0]

    def set_segment(self, kind, pred1, pred2=K.P_NONE, pair=None):
        if pair is not None:
            pos, neg = self.plan.positive_negative(pair)
            self.idx[0], self.idx[1] = pos, neg
        self.seg = (kind, self.pol(), pred1, pred2)

    def sample(self):
        x = self.x
        c = self.controller
        th = c.angle_at(self.t, self.t_latch) % (2.0 * math.pi)
        s0, s1, s2 = math.sin(th), math.sin(th + _SH[1]), math.sin(th + _SH[2])
        c0, c1, c2 = math.cos(th), math.cos(th + _SH[1]), math.cos(th + _SH[2])
        i_d = (2.0 / 3.0) * (x[5] * s0 + x[6] * s1 + x[7] * s2)
        i_q = (2.0 / 3.0) * (x[5] * c0 + x[6] * c1 + x[7] * c2)
        ref = self.cfg.scenario.ref(self.t)
        self.rows.append((self.t, x[0], x[1], float(self.mode), x[5], x[6], x[7],
                          x[2], x[3], x[4], i_q, i_d, ref.q, ref.d, th))

    # -- half-cycle entry --------------------------------------------------

    def close_half(self):
        h = self.half
        if h is None:
            return
        x = self.x
        q = tuple(float(x[11 + k] - h["q0"][k]) for k in range(3))
        self.cycles.append(HalfCycle(
            t_start=h["t"], t_end=self.t, polarity=h["pol"], T_est=h["T_est"],
            idle=self.plan.idle, i_ref_abc=self.plan.i_ref_abc,
            charge_targets=self.plan.per_phase_charge_targets, charge_delivered=q,
            input_charge_target=self.plan.input_charge_target,
            e_in=float(x[9] - h["e_in"]), e_out=float(x[10] - h["e_out"]),
            first_pair=self.first, max_mode_times=h["modes"]))

    def enter_half(self, pol):
        self.close_half()
        t = self.t
        self.log_mode(1 if pol > 0 else 7)
        self.half_starts.append(t)
        if len(self.half_starts) >= 3:
            measured = t - self.half_starts[-3]
            self.period = update_period_estimate(self.period, measured, self.cfg.period_bounds)
        x = self.x
        if self.latches and t > self.t_latch:
            dt = t - self.t_latch
            # multisampled measurement: averages over the elapsed half cycle,
            # referred to its midpoint
            v_c = (x[14:17] - self.acc[:3]) / dt
            i_g = (x[17:20] - self.acc[3:]) / dt
            t_m = t - 0.5 * dt
        else:
            dt = 0.5 * self.period.T_est
            v_c, i_g, t_m = x[2:5].copy(), x[5:8].copy(), t
        self.acc = x[14:20].copy()
        v_g = self.gp.v_phase_peak * np.cos(self.gp.angle(t_m) + _SH)
        ref = self.cfg.scenario.ref(t)
        out = self.controller.step(dt, v_g, v_c, i_g, ref, t_meas=t_m - t)
        self.t_latch = t
        self.latches += 1
        self.plan = begin_half_cycle(out.i_abc_ref, out.i_in_ref, self.period.T_est)
        v_ll = acside.line_line(x[2:5])
        self.e_res = self.cp.residual_energy(max(self.v_ll_nominal_peak, float(np.max(np.abs(v_ll)))))
        self.first = self.second = None
        self.half = {"t": t, "pol": pol, "T_est": self.period.T_est,
                     "q0": x[11:14].copy(), "e_in": x[9], "e_out": x[10], "modes": {}}
        self.conducting = False
        self.set_segment(K.RES, K.P_V_INPUT, K.P_CURRENT)

    def pass_through(self, modes):
        for m in modes:
            self.note_mode_time()
            self.log_mode(m)

    def note_mode_time(self):
        if self.half is not None:
            d = self.t - self.t_mode
            prev = self.half["modes"].get(self.mode, 0.0)
            self.half["modes"][self.mode] = max(prev, d)

    def goto(self, mode):
        self.note_mode_time()
        self.log_mode(mode)

    # -- event dispatch ----------------------------------------------------

    def on_event(self, status):
        m = self.mode
        base = m if m <= 6 else m - 6
        pol = self.pol()
        x = self.x
        if base == 1:
            inp = SwitchId.input_pair(pol)
            if not self.conducting:
                if status == K.FIRED_GUARD:
                    raise SimulationError("link cannot reach the input voltage", self.dump())
                self.log_gate(inp, True, pol * x[0] - self.cp.v_in)
                x[0] = pol * self.cp.v_in
                x[8] = 0.0
                self.conducting = True
                self.ftgt[0] = self.plan.input_charge_target
                self.set_segment(K.INPUT, K.P_CHARGE)
                return
            self.log_gate(inp, False, pol * x[0] - self.cp.v_in)
            self.conducting = False
            if self.plan.idle:
                self.goto(m + 1)
                self.pass_through([m + 2, m + 3, m + 4, m + 5])
                self.set_segment(K.RES, K.P_CURRENT)
                return
            self.goto(m + 1)
            self.start_discharge()
            return
        if base == 2:
            if status == K.FIRED_GUARD:
                self.abort_discharge()
                return
            if self.second is None:
                pass
            elif self.pair_voltage(self.second) < self.pair_voltage(self.first):
                self.first, self.second = self.second, self.first
            self.goto(m + 1)
            common = self.plan.common_switch
            other = self.plan.selected_switches[self.other_of(self.first)]
            for sw, partner in ((common, other), (other, common)):
                self.log_gate(sw, True, self.output_vdev(sw, partner))
            self.conduct_first()
            return
        if base == 3:
            self.on_first_discharge(status)
            return
        if base == 4:
            if status == K.FIRED_GUARD:
                self.abort_discharge()
                return
            self.goto(m + 1)
            common = self.plan.common_switch
            other = self.plan.selected_switches[self.other_of(self.second)]
            for sw, partner in ((common, other), (other, common)):
                self.log_gate(sw, True, self.output_vdev(sw, partner))
            self.conduct_final()
            return
        if base == 5:
            common = self.plan.common_switch
            other = self.plan.selected_switches[self.other_of(self.second)]
            for sw, partner in ((other, common), (common, other)):
                self.log_gate(sw, False, self.output_vdev(sw, partner))
            self.goto(m + 1)
            self.set_segment(K.RES, K.P_CURRENT)
            return
        # base == 6: voltage extremum, next half cycle
        self.note_mode_time()
        self.enter_half(-pol)

    def reachable(self, pair):
        """
        The pair is forward oriented and the descending link has not yet
        passed its voltage.

        A negative pair voltage (rails picked from reference signs that
        disagree with the capacitor voltages) would feed energy back into
        the link, which this stage cannot absorb at the input.
        """
        v_pair = self.pair_voltage(pair)
        return v_pair > 0.0 and self.pol() * self.x[0] + self.cp.n * v_pair > 0.0

    def swing_reaches(self, pair):
        """A free resonance from the present state can reach the pair voltage."""
        v_pair = self.pair_voltage(pair)
        v_peak = math.sqrt(2.0 * self.energy() / self.cp.C_link)
        return v_pair > 0.0 and v_peak > self.cp.n * v_pair

    def start_discharge(self):
        """Mode 2/8 entry: pick the pairs the link can still reach softly."""
        pairs = [p for p in self.plan.pairs if self.reachable(p)]
        self.skipped += len(self.plan.pairs) - len(pairs)
        if not pairs:
            self.pass_through([self.mode + k for k in range(1, 5)])
            self.set_segment(K.RES, K.P_CURRENT)
            return
        self.first = pairs[0]
        self.second = pairs[1] if len(pairs) > 1 else None
        a, b = self.plan.positive_negative(self.first)
        c, d = self.plan.positive_negative(self.second or self.first)
        self.idx[2:6] = (a, b, c, d)
        self.set_segment(K.RES, K.P_V_PAIR_MIN, K.P_CURRENT)

    def remaining_charge(self, phase):
        done = abs(self.x[11 + phase] - self.half["q0"][phase])
        return self.plan.per_phase_charge_targets[phase] - done

    def conduct_first(self):
        """Clamp to the first pair; with a lone pair only the energy limit applies."""
        x = self.x
        x[0] = -self.pol() * self.cp.n * self.pair_voltage(self.first)
        x[8] = 0.0
        self.ftgt[1] = self.e_res
        if self.second is None:
            self.set_segment(K.OUTPUT, K.P_ENERGY, pair=self.first)
            return
        self.ftgt[0] = self.remaining_charge(self.other_of(self.first))
        self.ftgt[2] = HANDOVER_BAND * self.v_ll_nominal_peak
        c, d = self.plan.positive_negative(self.second)
        self.idx[4:6] = (c, d)
        # guard: the second pair voltage dropping below the clamped one by
        # more than the hand-over hysteresis
        self.set_segment(K.OUTPUT, K.P_CHARGE_OR_ENERGY, K.P_PAIR_CROSS, pair=self.first)

    def conduct_final(self):
        """Energy-limited discharge into the second pair (mode 5/11)."""
        x = self.x
        x[0] = -self.pol() * self.cp.n * self.pair_voltage(self.second)
        x[8] = 0.0
        self.ftgt[1] = self.e_res
        self.set_segment(K.OUTPUT, K.P_ENERGY, pair=self.second)

    def on_first_discharge(self, status):
        """Mode 3/9 exits, including hand-overs between the two pairs."""
        m, x, pol = self.mode, self.x, self.pol()
        common = self.plan.common_switch
        other = self.plan.selected_switches[self.other_of(self.first)]
        if status == K.FIRED_GUARD and self.pair_voltage(self.second) <= 0.0:
            # the other pair turned reverse biased: finish on this one alone
            self.skipped += 1
            self.second = None
            self.conduct_first()
            return
        self.log_gate(other, False, self.output_vdev(other, common))
        if status == K.FIRED_GUARD:
            # the other pair's voltage fell below the clamped one: hand over
            self.crossings += 1
            nxt = self.plan.selected_switches[self.other_of(self.second)]
            self.log_gate(nxt, True, self.output_vdev(nxt, common))
            self.first, self.second = self.second, self.first
            self.conduct_first()
            return
        lost = self.second is not None and not self.swing_reaches(self.second)
        self.skipped += lost
        # the common device commutates with the other one while both still
        # conduct, so an aborted swing leaves nothing gated
        self.log_gate(common, False, self.output_vdev(common, other))
        if (self.second is None or lost or self.energy() - self.e_res <= 0.0
                or pol * x[1] <= 0.0):
            self.goto(m + 1)
            self.pass_through([m + 2, m + 3])
            self.set_segment(K.RES, K.P_CURRENT)
            return
        self.goto(m + 1)
        if self.pair_voltage(self.second) <= self.pair_voltage(self.first):
            # within the hand-over band below the clamp: no resonant swing
            self.on_event(K.FIRED_MAIN)
            return
        self.set_segment(K.RES, K.P_V_PAIR_SECOND, K.P_CURRENT)

    def abort_discharge(self):
        """The link turned round before reaching the awaited port voltage."""
        self.anomalies += 1
        m = self.mode
        base = m if m <= 6 else m - 6
        start = m - base
        self.pass_through([start + k for k in range(base + 1, 7)])
        self.note_mode_time()
        self.enter_half(-self.pol())

    def dump(self):
        return {"t": self.t, "mode": self.mode, "v_L": float(self.x[0]),
                "i_M": float(self.x[1]), "v_c": self.x[2:5].tolist(),
                "i_g": self.x[5:8].tolist(), "e_res": self.e_res}

    # -- main loop ---------------------------------------------------------

    def init_state(self):
        cfg = self.cfg
        if cfg.init == "steady":
            st = acside.steady_state(0.0, self.gp, self.fp)
            self.x[2:5] = st.v_c
            self.x[5:8] = st.i_g
        e_res = self.cp.residual_energy(self.v_ll_nominal_peak)
        self.x[0] = math.sqrt(2.0 * e_res / self.cp.C_link)
        self.x[1] = 0.0

    def run(self):
        cfg = self.cfg
        self.init_state()
        self.events.add(0.0, MODE_TRANSITION, "M12", math.nan, self.energy())
        self.mode = 12
        self.enter_half(+1)
        trace_dt = cfg.trace_dt
        n_samples = int(math.floor(cfg.t_stop / trace_dt + 1e-9)) + 1
        k = 0
        t_next = 0.0
        dt, tol = cfg.dt, cfg.event_tol
        while k < n_samples:
            if self.t >= t_next - 1e-15:
                self.sample()
                k += 1
                t_next = k * trace_dt
                continue
            kind, pol, p1, p2 = self.seg
            status, t = K.advance(self.x, self.t, t_next, dt, tol, kind, pol, p1, p2,
                                  self.idx, self.ftgt, self.prm)
            self.t = t
            if status == K.NONFINITE:
                raise SimulationError("non-finite state", self.dump())
            if status != K.REACHED_END:
                self.on_event(status)
            if self.t - self.t_mode > cfg.max_mode_time:
                raise SimulationError(
                    f"mode {self.mode} exceeded {cfg.max_mode_time:g} s", self.dump())
        self.close_half()
        trace = Trace(np.array(self.rows))
        stats = {"latches": self.latches, "anomalies": self.anomalies,
                 "pair_crossings": self.crossings,
                 "pairs_skipped": self.skipped,
                 "T_est_final": self.period.T_est,
                 "controller_enabled": self.controller.enabled}
        return SimResult(trace, self.events, self.cycles, cfg, stats)


def run_switching(cfg):
    """
    Simulate the switching model.

    Returns
    -------
    SimResult
        Trace, event log and per-half-cycle records.
    """
    if cfg.model != "switching":
        cfg = _replace_model(cfg, "switching")
    return _SwitchingRun(cfg).run()


def _replace_model(cfg, model):
    from dataclasses import replace
    return replace(cfg, model=model)
