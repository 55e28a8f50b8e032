"""Dual-rail conclusive transfer: encoding, decode, heralded measurements.

The dual-rail state is never materialised.  After encoding, the alpha branch
holds one excitation in chain 2 and the beta branch one in chain 1, so each
rail is tracked as a single-excitation amplitude vector.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .chain_model import ChainSpec
from .evolution import SpectralData, amplitude, propagate, spectral_data

DEFAULT_MAX_MEASUREMENTS = 2
INTERSECTION_GRID_STEP = 0.05
BIAS_TOLERANCE = 1e-6
IDENTICAL = "identical"
# below this receiver modulus the rails' difference is rounding noise
MODULUS_FLOOR = 1e-8


class BiasedMeasurementError(ValueError):
    """Measuring where the two rails' transfer moduli differ biases the input."""


@dataclass(frozen=True)
class InputState:
    alpha: complex = 1.0
    beta: complex = 0.0

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {norm}, expected 1")

    @classmethod
    def random(cls, rng: np.random.Generator) -> InputState:
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        z /= np.linalg.norm(z)
        return cls(complex(z[0]), complex(z[1]))

    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


@dataclass(frozen=True)
class DualRailChannel:
    chain1: ChainSpec
    chain2: ChainSpec

    def __post_init__(self):
        if self.chain1.n_sites != self.chain2.n_sites:
            raise ValueError("both rails must have the same number of sites")
        if self.chain1.model is not self.chain2.model:
            raise ValueError("both rails must use the same model")

    @classmethod
    def identical(cls, spec: ChainSpec) -> DualRailChannel:
        return cls(spec, spec)

    @property
    def n_sites(self) -> int:
        return self.chain1.n_sites

    @property
    def is_identical(self) -> bool:
        return self.chain1 == self.chain2


@dataclass(frozen=True)
class MeasurementSchedule:
    """First entry is the time from encoding; later entries are intervals."""

    times: tuple[float, ...]
    max_measurements: int = DEFAULT_MAX_MEASUREMENTS

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValueError("schedule needs at least one measurement")
        if any(t <= 0 for t in times):
            raise ValueError("schedule times must be strictly positive")
        if len(times) > self.max_measurements:
            raise ValueError(
                f"{len(times)} measurements requested, limit is {self.max_measurements}"
            )
        object.__setattr__(self, "times", times)

    @classmethod
    def fixed_interval(cls, interval: float, count: int) -> MeasurementSchedule:
        return cls((interval,) * count, max_measurements=count)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.times)


@dataclass
class ProtocolOutcome:
    schedule: MeasurementSchedule
    step_success: list[float]
    joint_success: float
    residual_amplitudes: np.ndarray
    residual_rail2: np.ndarray
    phase_corrections: list[complex] = field(default_factory=list)

    @property
    def phase_correction(self) -> complex:
        return self.phase_corrections[-1]

    def to_dict(self) -> dict:
        return {
            "schedule": list(self.schedule.times),
            "step_success": [float(p) for p in self.step_success],
            "joint_success": float(self.joint_success),
            "phase": [[p.real, p.imag] for p in self.phase_corrections],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def joint_success_two(spec: ChainSpec, t1: float, t2: float) -> float:
    """Two-measurement joint success for identical rails, in closed form:
    |f_N1(t1)|^2 + |f_N1(t1 + t2) - f_NN(t2) f_N1(t1)|^2."""
    if t1 <= 0 or t2 < 0:
        raise ValueError("need t1 > 0 and t2 >= 0")
    sd = spectral_data(spec, 1)
    N = spec.n_sites
    f1 = amplitude(sd, 1, N, t1)
    f12 = amplitude(sd, 1, N, t1 + t2)
    fnn = amplitude(sd, N, N, t2)
    return abs(f1) ** 2 + abs(f12 - fnn * f1) ** 2


def heralded_amplitudes(spec: ChainSpec, times) -> np.ndarray:
    """Site-N amplitude seen at each measurement of a failing run.

    Renewal recursion g_j = f_N1(T_j) - sum_{i<j} f_NN(T_j - T_i) g_i over the
    cumulative times T; the success mass of measurement j is |g_j|^2.
    """
    sd = spectral_data(spec, 1)
    N = spec.n_sites
    T = np.cumsum(np.asarray(times, dtype=float))
    g = np.zeros(len(T), dtype=complex)
    for j in range(len(T)):
        g[j] = amplitude(sd, 1, N, T[j]) - sum(
            amplitude(sd, N, N, T[j] - T[i]) * g[i] for i in range(j)
        )
    return g


def joint_success_closed_form(spec: ChainSpec, times) -> float:
    return float(np.sum(np.abs(heralded_amplitudes(spec, times)) ** 2))


def conclusive_simulate(
    channel: DualRailChannel,
    schedule: MeasurementSchedule,
    state: InputState | None = None,
    allow_biased: bool = False,
    bias_tol: float = BIAS_TOLERANCE,
) -> ProtocolOutcome:
    """Run encode, free evolution and the heralded measurement sequence.

    Each failure zeroes the site-N amplitude of both rails (the projection for
    outcome "0"); amplitudes are kept unnormalised so the removed weight is
    the accumulated success mass.
    """
    state = state or InputState()
    N = channel.n_sites
    sd1 = spectral_data(channel.chain1, 1)
    sd2 = spectral_data(channel.chain2, 1)
    w_alpha, w_beta = abs(state.alpha) ** 2, abs(state.beta) ** 2
    rail1 = np.zeros(N, dtype=complex)  # beta branch: excitation in chain 1
    rail1[0] = 1.0
    rail2 = rail1.copy()  # alpha branch: excitation in chain 2
    joint = 0.0
    steps, phases = [], []
    for t in schedule.times:
        rail1 = propagate(sd1, rail1, t)
        rail2 = propagate(sd2, rail2, t)
        f1, f2 = rail1[-1], rail2[-1]
        if abs(abs(f1) - abs(f2)) > bias_tol:
            message = (f"rails differ at the receiver (|f1|={abs(f1):.3g}, "
                       f"|f2|={abs(f2):.3g}); success would depend on the input")
            if not allow_biased:
                raise BiasedMeasurementError(message)
            warnings.warn(message, stacklevel=2)
        mass = w_alpha * abs(f2) ** 2 + w_beta * abs(f1) ** 2
        remaining = 1.0 - joint
        steps.append(mass / remaining if remaining > 0 else 0.0)
        joint += mass
        phases.append(_unit_ratio(f1, f2))
        rail1[-1] = 0.0
        rail2[-1] = 0.0
    return ProtocolOutcome(schedule, steps, joint, rail1, rail2, phases)


def _unit_ratio(f1: complex, f2: complex) -> complex:
    if f1 == 0 or f2 == 0:
        return 1.0 + 0.0j
    r = f1 / f2
    return r / abs(r)


def apply_phase_correction(qubit, phase: complex) -> np.ndarray:
    """Receiver correction on outcome "1": multiply |1> by conj(phase)."""
    out = np.array(qubit, dtype=complex)
    out[1] *= np.conj(phase)
    return out


@dataclass(frozen=True)
class Intersection:
    tau: float
    modulus: float
    slope_gap: float


@dataclass(frozen=True)
class BestIntersection:
    tau: float
    probability: float
    phase: complex


def _modulus_and_slope(sd: SpectralData, N: int, t: float) -> tuple[float, float]:
    weights = sd.eigenvectors[-1] * sd.eigenvectors[0]
    ph = np.exp(-1j * t * sd.eigenvalues)
    f = complex(ph @ weights)
    df = complex((-1j * sd.eigenvalues * ph) @ weights)
    mod = abs(f)
    return mod, (f.conjugate() * df).real / mod if mod > 0 else 0.0


def intersection_times(
    chain1: ChainSpec, chain2: ChainSpec, t_max: float, step: float = INTERSECTION_GRID_STEP
):
    """Times t <= t_max where |f_N1| of the two rails coincide.

    Returns ``IDENTICAL`` for identical chains (every time qualifies).
    Crossings are bracketed on a grid of ``step`` and refined to 1e-8.
    """
    if chain1.n_sites != chain2.n_sites:
        raise ValueError("chains must have the same length")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if chain1 == chain2:
        return IDENTICAL
    N = chain1.n_sites
    sd1, sd2 = spectral_data(chain1, 1), spectral_data(chain2, 1)
    grid = step * np.arange(1, int(math.floor(t_max / step + 1e-9)) + 1)
    m1 = np.abs(amplitude(sd1, 1, N, grid))
    m2 = np.abs(amplitude(sd2, 1, N, grid))
    gap = m1 - m2
    live = np.maximum(m1, m2) > MODULUS_FLOOR

    def g(t):
        return abs(amplitude(sd1, 1, N, t)) - abs(amplitude(sd2, 1, N, t))

    def record(tau):
        mod, s1 = _modulus_and_slope(sd1, N, tau)
        _, s2 = _modulus_and_slope(sd2, N, tau)
        found.append(Intersection(float(tau), mod, abs(s1 - s2)))

    found = []
    for i in np.flatnonzero((gap[:-1] * gap[1:] <= 0) & live[:-1] & live[1:]):
        lo, hi = grid[i], grid[i + 1]
        g_lo, g_hi = g(lo), g(hi)
        if g_lo == 0.0:
            record(lo)
        elif g_hi == 0.0:
            continue  # picked up as the left end of the next bracket
        elif g_lo * g_hi < 0:
            record(brentq(g, lo, hi, xtol=1e-10))
        else:
            # vectorised and scalar sums disagree in the last bit: touch point
            record(lo if abs(g_lo) <= abs(g_hi) else hi)
    if gap[-1] == 0.0 and live[-1]:
        record(grid[-1])
    return found


def best_intersection_success(
    chain1: ChainSpec, chain2: ChainSpec, t_max: float, step: float = INTERSECTION_GRID_STEP
) -> BestIntersection | None:
    """Highest single-shot success among unbiased measurement times.

    ``None`` when the rails never cross before ``t_max``.
    """
    crossings = intersection_times(chain1, chain2, t_max, step)
    N = chain1.n_sites
    if crossings == IDENTICAL:
        sd = spectral_data(chain1, 1)
        grid = step * np.arange(1, int(math.floor(t_max / step + 1e-9)) + 1)
        p = np.abs(amplitude(sd, 1, N, grid)) ** 2
        i = int(np.argmax(p))
        return BestIntersection(float(grid[i]), float(p[i]), 1.0 + 0.0j)
    if not crossings:
        return None
    best = max(crossings, key=lambda c: c.modulus)
    f1 = amplitude(spectral_data(chain1, 1), 1, N, best.tau)
    f2 = amplitude(spectral_data(chain2, 1), 1, N, best.tau)
    return BestIntersection(best.tau, best.modulus**2, _unit_ratio(f1, f2))
