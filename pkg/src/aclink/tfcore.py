"""
Continuous-time transfer-function algebra for the active-damping design loop.

Polynomials are stored with ascending powers of ``s``.  Everything here is a
pure function of its inputs; ``Polynomial`` and ``TransferFunction`` are
immutable.

The building blocks are the second-order Padé delay of the switch
controller, the damping compensator ``k (sL + r) HPF(s)``, the high-pass
filter ``s / (s + 2 pi f_c)`` and the CL-filter plant
``1 / (LCs^2 + rCs + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSystemError, DomainError, NumericFailure

__all__ = [
    "Polynomial", "TransferFunction", "FrequencyResponse", "StabilityReport",
    "DesignRules", "make_pade_delay", "make_hpf", "make_plant",
    "make_compensator", "forward_loop", "closed_loop_grid_tf",
    "freq_response", "log_grid", "stability", "margins", "poly_roots",
    "routh_array", "routh_hurwitz_stable", "select_parameters",
    "zero_hz_of_inductor",
]


# %% Polynomials

def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 0:
        return np.zeros(1)
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real polynomial in ``s`` with ascending coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _trim(self.coeffs)
        if not np.all(np.isfinite(c)):
            raise DomainError("polynomial coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return self.coeffs.size - 1

    def is_zero(self):
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.zeros_like(s)
        for a in self.coeffs[::-1]:
            out = out * s + a
        return out

    def __add__(self, other):
        other = _as_poly(other)
        n = max(self.coeffs.size, other.coeffs.size)
        a = np.zeros(n)
        a[: self.coeffs.size] += self.coeffs
        a[: other.coeffs.size] += other.coeffs
        return Polynomial(a)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __mul__(self, other):
        other = _as_poly(other)
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def roots(self):
        return poly_roots(self.coeffs)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def _as_poly(p):
    if isinstance(p, Polynomial):
        return p
    return Polynomial(np.atleast_1d(np.asarray(p, dtype=float)))


# %% Root finding

def _aberth(c, z, iters=200):
    """Aberth-Ehrlich simultaneous refinement of all roots."""
    p = np.polynomial.polynomial
    dc = p.polyder(c)
    n = z.size
    for _ in range(iters):
        pv = p.polyval(z, c)
        dv = p.polyval(z, dc)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = pv / dv
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            step = ratio / (1.0 - ratio * inv.sum(axis=1))
        step = np.where(np.isfinite(step), step, 0.0)
        z = z - step
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, np.max(np.abs(z))):
            break
    return z if n else z


def _balance(c):
    """
    Substitute ``s = w0 z`` so the end coefficients match in magnitude.

    Works in logarithms so extreme coefficient ratios cannot overflow;
    returns ``w0`` and the rescaled coefficients normalised to a largest
    magnitude of one.  Real-part signs of the roots are unchanged.
    """
    n = c.size - 1
    with np.errstate(divide="ignore"):
        lg = np.log(np.abs(c))
    lw = (lg[0] - lg[-1]) / n
    e = lg + lw * np.arange(n + 1)
    e = e - np.max(e[np.isfinite(e)])
    out = np.where(c == 0.0, 0.0, np.sign(c) * np.exp(e))
    return float(np.exp(lw)), out


def poly_roots(coeffs):
    """
    All roots of a real polynomial given in ascending order.

    The variable is rescaled so the coefficients span a narrow range, roots
    are taken as eigenvalues of the companion matrix (LAPACK balances it),
    and any root whose residual exceeds ``1e-8 * ||coeffs||`` is refined by
    Aberth-Ehrlich iteration.

    Raises
    ------
    NumericFailure
        If the roots cannot be brought below the residual tolerance.
    """
    c = _trim(coeffs)
    if c.size == 1:
        return np.zeros(0, dtype=complex)
    # strip roots at the origin exactly
    nz0 = np.flatnonzero(c)[0]
    zeros = np.zeros(nz0, dtype=complex)
    c = c[nz0:]
    n = c.size - 1
    if n == 0:
        return zeros
    scale, cs = _balance(c)
    cs = cs / cs[-1]
    comp = np.zeros((n, n))
    if n > 1:
        comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -cs[:-1]
    z = np.linalg.eigvals(comp).astype(complex)

    pp = np.polynomial.polynomial
    tol = 1e-8 * np.linalg.norm(cs)
    res = np.abs(pp.polyval(z, cs))
    if np.any(res > tol * np.maximum(1.0, np.abs(z)) ** n):
        z = _aberth(cs, z)
        res = np.abs(pp.polyval(z, cs))
        if not np.all(np.isfinite(z)) or np.any(
                res > tol * np.maximum(1.0, np.abs(z)) ** n):
            raise NumericFailure(
                f"root refinement did not converge (max residual {res.max():.3e})")
    z = z * scale
    # make conjugate pairs exact where they are pairs to rounding
    z = np.where(np.abs(z.imag) <= 1e-12 * np.maximum(np.abs(z), 1e-300),
                 z.real + 0j, z)
    return np.concatenate([zeros, np.sort_complex(z)])


# %% Routh-Hurwitz

def routh_array(coeffs, eps=1e-12):
    """
    Routh array rows for ``coeffs`` (ascending).

    Zero leading entries are replaced by ``eps`` times the row scale; a row of
    zeros is replaced by the derivative of its auxiliary polynomial.  Returns
    the array and a flag telling whether either substitution happened (roots
    on or symmetric about the imaginary axis).
    """
    a = _trim(coeffs)[::-1]  # descending
    n = a.size - 1
    width = n // 2 + 1
    rows = np.zeros((n + 1, width))
    r0 = a[0::2]
    r1 = a[1::2]
    rows[0, : r0.size] = r0
    if n >= 1:
        rows[1, : r1.size] = r1
    special = False
    scale = np.max(np.abs(a))
    for i in range(2, n + 1):
        prev, pprev = rows[i - 1], rows[i - 2]
        if np.all(np.abs(prev) <= eps * scale):
            # row of zeros: auxiliary polynomial from pprev, order n - i + 2
            special = True
            order = n - i + 2
            powers = order - 2 * np.arange(width)
            prev = np.where(powers > 0, pprev * powers, 0.0)
            rows[i - 1] = prev
        if abs(prev[0]) <= eps * max(scale, np.max(np.abs(prev))):
            special = True
            prev = prev.copy()
            prev[0] = eps * scale
            rows[i - 1] = prev
        for j in range(width - 1):
            rows[i, j] = (prev[0] * pprev[j + 1] - pprev[0] * prev[j + 1]) / prev[0]
    return rows, special


def routh_hurwitz_stable(coeffs):
    """True iff every root of the polynomial has strictly negative real part."""
    a = _trim(coeffs)
    if a.size == 1:
        return True
    if np.any(a == 0.0):
        # a missing power means a root on or right of the imaginary axis
        return False
    if not (np.all(a > 0) or np.all(a < 0)):
        return False
    # s -> w0 z keeps the sign of every real part and balances the coefficients
    _, a = _balance(a)
    rows, special = routh_array(a)
    if special:
        return False
    first = rows[:, 0]
    return bool(np.all(first > 0) or np.all(first < 0))


# %% Transfer functions

@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Ratio ``num(s) / den(s)`` of real polynomials."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        num, den = _as_poly(self.num), _as_poly(self.den)
        if den.is_zero():
            raise DegenerateSystemError("transfer function denominator is identically zero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def gain(cls, k):
        return cls(Polynomial([k]), Polynomial([1.0]))

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.num(s) / self.den(s)

    def __mul__(self, other):
        if not isinstance(other, TransferFunction):
            other = TransferFunction.gain(float(other))
        return TransferFunction(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, TransferFunction):
            other = TransferFunction.gain(float(other))
        return TransferFunction(self.num * other.den + other.num * self.den,
                                self.den * other.den)

    def is_zero(self):
        return self.num.is_zero()

    def normalized(self):
        """Same system with the denominator's leading coefficient scaled to 1."""
        lead = self.den.coeffs[-1]
        return TransferFunction(Polynomial(self.num.coeffs / lead),
                                Polynomial(self.den.coeffs / lead))

    def equals(self, other):
        a, b = self.normalized(), other.normalized()
        return a.num == b.num and a.den == b.den

    def poles(self):
        return poly_roots(self.den.coeffs)

    def zeros(self):
        return poly_roots(self.num.coeffs)

    def dc_gain(self):
        return complex(self(0.0))

    def __repr__(self):
        return f"TransferFunction(num={self.num.coeffs.tolist()}, den={self.den.coeffs.tolist()})"


def make_pade_delay(Td):
    """Second-order Padé approximant of ``exp(-s Td)``."""
    if not Td > 0:
        raise DomainError(f"delay Td must be > 0, got {Td!r}")
    a2 = Td * Td / 12.0
    return TransferFunction(Polynomial([1.0, -Td / 2.0, a2]),
                            Polynomial([1.0, Td / 2.0, a2]))


def make_hpf(f_c):
    """First-order high-pass ``s / (s + 2 pi f_c)``."""
    if not f_c > 0:
        raise DomainError(f"HPF corner f_c must be > 0, got {f_c!r}")
    return TransferFunction(Polynomial([0.0, 1.0]),
                            Polynomial([2.0 * np.pi * f_c, 1.0]))


def make_plant(L, C, r=0.0):
    """Inverter-current to grid-current transfer of the CL filter."""
    if not L > 0:
        raise DomainError(f"filter inductance must be > 0, got {L!r}")
    if not C > 0:
        raise DomainError(f"filter capacitance must be > 0, got {C!r}")
    if not r >= 0:
        raise DomainError(f"series resistance must be >= 0, got {r!r}")
    return TransferFunction(Polynomial([1.0]), Polynomial([1.0, r * C, L * C]))


def make_compensator(k, L, r, hpf=None):
    """
    Damping compensator ``k (sL + r)`` optionally cascaded with ``hpf``.

    With ``hpf`` this is the capacitor-voltage feedback variant; without it,
    the inductor-voltage variant.
    """
    if not k > 0:
        raise DomainError(f"damping factor k must be > 0, got {k!r}")
    if not L > 0:
        raise DomainError(f"filter inductance must be > 0, got {L!r}")
    if not r >= 0:
        raise DomainError(f"series resistance must be >= 0, got {r!r}")
    comp = TransferFunction(Polynomial([k * r, k * L]), Polynomial([1.0]))
    if hpf is not None:
        comp = comp * hpf
    return comp


def forward_loop(delay, comp, plant):
    """Damping forward-loop gain ``delay * comp * plant``."""
    return delay * comp * plant


def closed_loop_grid_tf(delay, comp, plant):
    """
    Grid current over commanded inverter current with the damping loop closed.

    Returns ``Gd Gp / (1 + Gd A Gp)``; with a zero compensator this is exactly
    ``Gd Gp``.
    """
    gdp = delay * plant
    if comp is None or comp.is_zero():
        return gdp
    num = gdp.num * comp.den
    den = gdp.den * comp.den + gdp.num * comp.num
    if den.is_zero():
        raise DegenerateSystemError("closed-loop denominator vanished identically")
    return TransferFunction(num, den)


def zero_hz_of_inductor(L, r):
    """Frequency of the zero of ``sL + r`` in Hz."""
    return r / (2.0 * np.pi * L)


# %% Frequency response

@dataclass(frozen=True)
class FrequencyResponse:
    freqs_hz: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray
    infinite: np.ndarray = field(default=None)

    def __post_init__(self):
        f = np.asarray(self.freqs_hz, dtype=float)
        m = np.asarray(self.magnitude_db, dtype=float)
        p = np.asarray(self.phase_deg, dtype=float)
        if not (f.shape == m.shape == p.shape):
            raise DomainError("frequency response columns must have equal length")
        if f.size and (np.any(f <= 0) or np.any(np.diff(f) <= 0)):
            raise DomainError("frequencies must be positive and strictly increasing")
        inf = np.zeros(f.shape, bool) if self.infinite is None else np.asarray(self.infinite, bool)
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "magnitude_db", m)
        object.__setattr__(self, "phase_deg", p)
        object.__setattr__(self, "infinite", inf)

    def peak(self):
        """(frequency, magnitude_db) of the largest finite magnitude."""
        m = np.where(self.infinite, -np.inf, self.magnitude_db)
        i = int(np.argmax(m))
        return self.freqs_hz[i], self.magnitude_db[i]


def freq_response(tf, freqs):
    """Bode data of ``tf`` at ``freqs`` (Hz); phase is unwrapped."""
    f = np.asarray(freqs, dtype=float)
    if f.size == 0 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
        raise DomainError("freqs must be positive and strictly increasing")
    s = 2j * np.pi * f
    num = tf.num(s)
    den = tf.den(s)
    bad = np.abs(den) == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(bad, np.inf, num / np.where(bad, 1.0, den))
    mag = np.where(bad, np.inf, 20.0 * np.log10(np.abs(np.where(bad, 1.0, h))))
    # zeros exactly on the axis give -inf, which is the honest answer
    ph = np.angle(np.where(bad, 1.0, h))
    ph = np.degrees(np.unwrap(ph))
    return FrequencyResponse(f, mag, ph, bad)


def _resonances_hz(tf, zeta_max=0.5):
    out = []
    for p in np.concatenate([tf.poles(), tf.zeros()]):
        w = abs(p)
        if p.imag > 0 and w > 0 and -p.real / w < zeta_max:
            out.append(w / (2.0 * np.pi))
    return out


def log_grid(f_lo=1.0, f_hi=10e3, per_decade=100, tf=None, densify=10):
    """
    Logarithmic frequency grid, densified around lightly damped poles/zeros.

    Within one octave either side of each resonance of ``tf`` the density is
    multiplied by ``densify``.
    """
    if not (0 < f_lo < f_hi):
        raise DomainError("need 0 < f_lo < f_hi")
    n = int(np.ceil(np.log10(f_hi / f_lo) * per_decade)) + 1
    grids = [np.logspace(np.log10(f_lo), np.log10(f_hi), n)]
    if tf is not None and densify > 1:
        for fr in _resonances_hz(tf):
            lo, hi = max(fr / 2.0, f_lo), min(fr * 2.0, f_hi)
            if lo < hi:
                m = int(np.ceil(np.log10(hi / lo) * per_decade * densify)) + 1
                grids.append(np.logspace(np.log10(lo), np.log10(hi), m))
    g = np.unique(np.concatenate(grids))
    return g


# %% Stability

@dataclass(frozen=True)
class StabilityReport:
    poles: np.ndarray
    is_stable: bool
    resonance_peak_hz: float | None = None
    gain_margin_db: float | None = None
    phase_margin_deg: float | None = None


def margins(open_loop, freqs=None):
    """
    Gain and phase margins of ``open_loop``.

    Returns ``(gain_margin_db, phase_margin_deg)``; an entry is ``None`` when
    the corresponding crossover does not exist on the grid.
    """
    if freqs is None:
        hi = 1e3 * max([abs(p) for p in open_loop.poles()] + [2 * np.pi * 10e3]) / (2 * np.pi)
        freqs = log_grid(1e-2, hi, 200, open_loop)
    fr = freq_response(open_loop, freqs)
    m, ph = fr.magnitude_db, fr.phase_deg
    gm = pm = None
    # phase crossover: phase passes an odd multiple of -180
    k = (ph + 180.0) / 360.0
    idx = np.flatnonzero(np.floor(k[:-1]) != np.floor(k[1:]))
    if idx.size:
        i = idx[0]
        edge = np.floor(max(k[i], k[i + 1]))
        t = (edge - k[i]) / (k[i + 1] - k[i])
        gm = -float(m[i] + t * (m[i + 1] - m[i]))
    idx = np.flatnonzero(np.sign(m[:-1]) != np.sign(m[1:]))
    if idx.size:
        i = idx[-1]
        t = -m[i] / (m[i + 1] - m[i])
        phc = ph[i] + t * (ph[i + 1] - ph[i])
        pm = float(((phc + 180.0) + 180.0) % 360.0 - 180.0)
    return gm, pm


def _resonance_peak_hz(tf):
    poles = tf.poles()
    if poles.size == 0:
        return None
    wmax = max(np.max(np.abs(poles)), 1.0)
    freqs = log_grid(1e-3 * wmax / (2 * np.pi), 10 * wmax / (2 * np.pi), 400, tf)
    fr = freq_response(tf, freqs)
    m = np.where(fr.infinite, np.inf, fr.magnitude_db)
    i = int(np.argmax(m))
    if 0 < i < m.size - 1 and m[i] >= m[0] + 3.0:
        return float(fr.freqs_hz[i])
    return None


def stability(tf, open_loop=None):
    """
    Pole-based stability verdict for ``tf``.

    A pole counts as unstable when its real part is not below
    ``-1e-9 * max(max |pole|, 1)``; poles on the axis are therefore reported
    as unstable.  Margins are computed from ``open_loop`` when given.
    """
    if tf.den.degree < 1:
        raise DomainError("stability needs a denominator of degree >= 1")
    poles = tf.poles()
    thresh = -1e-9 * max(float(np.max(np.abs(poles))), 1.0)
    stable = bool(np.all(poles.real < thresh))
    gm = pm = None
    if open_loop is not None:
        gm, pm = margins(open_loop)
    return StabilityReport(poles, stable, _resonance_peak_hz(tf), gm, pm)


# %% Design rules

@dataclass(frozen=True)
class DesignRules:
    f_sw_min: float
    damping_bw_target: float
    current_loop_bw_max: float
    hpf_zero_hz: float
    k: float = 0.2


def select_parameters(f_sw_min, L, C, r, k=0.2):
    """
    Bandwidth targets from the worst-case switching frequency.

    The damping loop gets a tenth of the switching frequency, the current
    loop at most a tenth of that, and the HPF corner should sit near the zero
    of ``sL + r``.
    """
    for name, v in (("f_sw_min", f_sw_min), ("L", L), ("C", C), ("r", r)):
        if not v > 0:
            raise DomainError(f"{name} must be > 0, got {v!r}")
    bw = f_sw_min / 10.0
    return DesignRules(f_sw_min=f_sw_min, damping_bw_target=bw,
                       current_loop_bw_max=bw / 10.0,
                       hpf_zero_hz=zero_hz_of_inductor(L, r), k=k)
