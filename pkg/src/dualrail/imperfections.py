"""Coupling disorder ensembles and imperfect-initialisation noise."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .chain_model import ChainSpec, Model, fixture_disorder
from .evolution import amplitude, propagator, spectral_data
from .protocol import best_intersection_success

SINGLE_NOISE_X_GUARD = 0.1
TRUNCATION_X_LIMIT = 0.1
EXACT_COLLECTIVE_MAX_SITES = 12
DEFAULT_NOISE_TIMES = np.arange(1.0, 1001.0)


class InitNoiseError(ValueError):
    pass


# --- coupling disorder -----------------------------------------------------

def sample_disorder(delta: float, n_bonds: int, seed=None, fixture: int | None = None) -> np.ndarray:
    """Uniform relative bond perturbations in [-delta, delta].

    ``fixture`` (1 or 2) returns the stored N=30 sample for that rail instead.
    """
    if fixture is not None:
        samples = fixture_disorder()
        if fixture not in (1, 2):
            raise ValueError("fixture must be 1 or 2")
        out = np.array(samples[fixture - 1])
        if len(out) != n_bonds:
            raise ValueError(f"fixture has {len(out)} bonds, {n_bonds} requested")
        return out
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return np.zeros(n_bonds)
    return np.random.default_rng(seed).uniform(-delta, delta, n_bonds)


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # one independent stream per sample index: prefixes are stable under n_samples
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


@dataclass(frozen=True)
class DisorderEnsemble:
    n_sites: int
    delta_bound: float
    n_samples: int
    seed: int
    samples: tuple = field(repr=False)

    @classmethod
    def generate(cls, n_sites: int, delta: float, n_samples: int, seed: int) -> DisorderEnsemble:
        if delta < 0:
            raise ValueError("delta must be non-negative")
        samples = []
        for i in range(n_samples):
            d = _sample_rng(seed, i).uniform(-delta, delta, (2, n_sites - 1))
            if delta == 0:
                d = np.zeros_like(d)
            samples.append((tuple(d[0]), tuple(d[1])))
        return cls(n_sites, delta, n_samples, seed, tuple(samples))

    @classmethod
    def fixture(cls) -> DisorderEnsemble:
        d1, d2 = fixture_disorder()
        return cls(len(d1) + 1, 0.01, 1, -1, ((d1, d2),))

    def chains(self, base: ChainSpec, index: int) -> tuple[ChainSpec, ChainSpec]:
        d1, d2 = self.samples[index]
        bound = max(self.delta_bound, base.delta_bound)
        return base.with_disorder(d1, bound), base.with_disorder(d2, bound)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "delta": self.delta_bound,
            "n_sites": self.n_sites,
            "n_samples": self.n_samples,
            "samples": [[list(d1), list(d2)] for d1, d2 in self.samples],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> DisorderEnsemble:
        d = json.loads(text)
        samples = tuple((tuple(s[0]), tuple(s[1])) for s in d["samples"])
        return cls(d["n_sites"], d["delta"], d["n_samples"], d["seed"], samples)


@dataclass
class DisorderCurve:
    a_values: np.ndarray
    per_sample: np.ndarray  # (len(a_values), n_samples)
    best_times: np.ndarray
    missing: np.ndarray  # True where a sample had no intersection

    @property
    def mean(self) -> np.ndarray:
        return self.per_sample.mean(axis=1)

    @property
    def stderr(self) -> np.ndarray:
        n = self.per_sample.shape[1]
        if n < 2:
            return np.zeros(len(self.a_values))
        err = self.per_sample.std(axis=1, ddof=1) / math.sqrt(n)
        # identical samples: report exactly zero rather than rounding residue
        return np.where(np.ptp(self.per_sample, axis=1) == 0, 0.0, err)


def ensemble_success(ensemble: DisorderEnsemble, a_values, t_max: float = 1000.0,
                     model: Model = Model.XY_END_MODULATED, threads: int | None = None,
                     step: float = 0.05) -> DisorderCurve:
    a_values = np.asarray(a_values, dtype=float)

    def one(job):
        a, i = job
        base = ChainSpec(ensemble.n_sites, model, a)
        best = best_intersection_success(*ensemble.chains(base, i), t_max, step)
        if best is None:
            return 0.0, math.nan, True
        return best.probability, best.tau, False

    jobs = [(a, i) for a in a_values for i in range(ensemble.n_samples)]
    out = np.array(pmap(one, jobs, threads), dtype=float).reshape(len(a_values), ensemble.n_samples, 3)
    return DisorderCurve(a_values, out[..., 0], out[..., 1], out[..., 2].astype(bool))


def disorder_average_success(n_sites: int, a_values, delta: float, n_samples: int,
                             t_max: float, seed: int, **kwargs) -> DisorderCurve:
    """Average best unbiased single-shot success over a seeded ensemble."""
    ensemble = DisorderEnsemble.generate(n_sites, delta, n_samples, seed)
    return ensemble_success(ensemble, a_values, t_max, **kwargs)


# --- imperfect initialisation ---------------------------------------------

@dataclass(frozen=True)
class SingleExcitationNoise:
    x: float
    m: int
    x_guard: float = SINGLE_NOISE_X_GUARD

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise InitNoiseError("x is a probability")
        if self.x > self.x_guard:
            raise InitNoiseError(f"x={self.x} above the guard {self.x_guard}; raise x_guard to allow")
        if self.m < 2:
            raise InitNoiseError("m must be >= 2: encoding overwrites site 1")


@dataclass(frozen=True)
class InitNoiseResult:
    p_success: float
    p0: float
    p1: float
    higher_terms: tuple[float, ...] | None = None


def _p1_table(spec: ChainSpec, times, coherent: bool = False, chunk: int = 32) -> np.ndarray:
    """P1(m, t) for m = 2..N, shape (len(times), N-1).

    Incoherent form  sum_{n<N} |f_{n,m}|^2 |f^{nN}_{1m}|^2.  ``coherent=True``
    instead returns |sum_{n<N} f_{n,m} f^{nN}_{1m}|^2.
    """
    N = spec.n_sites
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sd1, sd2 = spectral_data(spec, 1), spectral_data(spec, 2)
    V1, w1 = sd1.eigenvectors, sd1.eigenvalues
    V2, w2 = sd2.eigenvectors, sd2.eigenvalues
    rows = [sd2.position((n, N)) for n in range(1, N)]
    cols = [sd2.position((1, m)) for m in range(2, N + 1)]
    A1, B1 = V1[:N - 1], V1[1:]  # f_{n,m}: n = 1..N-1, m = 2..N
    A2, B2 = V2[rows], V2[cols]
    out = np.empty((len(times), N - 1))
    for start in range(0, len(times), chunk):
        t = times[start:start + chunk]
        E1 = np.exp(-1j * t[:, None] * w1)
        E2 = np.exp(-1j * t[:, None] * w2)
        f1 = (A1[None] * E1[:, None, :]) @ B1.T
        f2 = (A2[None] * E2[:, None, :]) @ B2.T
        if coherent:
            out[start:start + chunk] = np.abs(np.einsum("tnm,tnm->tm", f1, f2)) ** 2
        else:
            out[start:start + chunk] = np.einsum("tnm,tnm->tm", np.abs(f1) ** 2, np.abs(f2) ** 2)
    return out


def p1_profile(spec: ChainSpec, t: float, coherent: bool = False) -> np.ndarray:
    """Two-excitation success term for every noise site m = 2..N at time t."""
    return _p1_table(spec, [t], coherent)[0]


def single_excitation_success(spec: ChainSpec, noise: SingleExcitationNoise, t: float,
                              coherent: bool = False) -> InitNoiseResult:
    if noise.m > spec.n_sites:
        raise InitNoiseError(f"m={noise.m} beyond the chain (N={spec.n_sites})")
    p0 = abs(amplitude(spectral_data(spec, 1), 1, spec.n_sites, t)) ** 2
    p1 = float(p1_profile(spec, t, coherent)[noise.m - 2])
    x = noise.x
    return InitNoiseResult((1 - x) ** 2 * p0 + x * x * p1, p0, p1)


@dataclass(frozen=True)
class AveragedNoisePoint:
    a: float
    p_ave: float
    t_star: float
    p0: float
    p1_mean: float


def average_single_excitation_success(spec: ChainSpec, x: float, times=None,
                                      coherent: bool = False) -> AveragedNoisePoint:
    """Site-averaged success, maximised over ``times``.

    Every site m = 2..N is equally likely to carry the stray excitation.
    Pass a single time to evaluate without optimising.
    """
    if not 0.0 <= x <= SINGLE_NOISE_X_GUARD:
        raise InitNoiseError(f"x must lie in [0, {SINGLE_NOISE_X_GUARD}]")
    times = DEFAULT_NOISE_TIMES if times is None else np.atleast_1d(np.asarray(times, float))
    p0 = np.abs(amplitude(spectral_data(spec, 1), 1, spec.n_sites, times)) ** 2
    p1_mean = _p1_table(spec, times, coherent).mean(axis=1)
    p = (1 - x) ** 2 * p0 + x * x * p1_mean
    i = int(np.argmax(p))
    return AveragedNoisePoint(spec.end_coupling, float(p[i]), float(times[i]),
                              float(p0[i]), float(p1_mean[i]))


def average_single_excitation_curve(n_sites: int, x: float, a_values, times=None,
                                    model: Model = Model.XY_END_MODULATED,
                                    threads: int | None = None) -> list[AveragedNoisePoint]:
    def one(a):
        return average_single_excitation_success(ChainSpec(n_sites, model, a), x, times)
    return pmap(one, list(a_values), threads)


def collective_coefficients(spec: ChainSpec, t: float) -> np.ndarray:
    """Coefficient C_j of x^{2j} (1-x)^{2(N-1-j)} for j = 0..N-1.

    C_j sums, over stray-excitation sets S in {2..N} and receiver patterns R in
    {1..N-1} with |S| = |R| = j, the product |<R|U|S>|^2 |<R+N|U|S+1>|^2:
    the rail without the transferred excitation ends in R while the other
    rail ends in R plus the transferred excitation at site N.
    """
    N = spec.n_sites
    if N > EXACT_COLLECTIVE_MAX_SITES:
        raise InitNoiseError(
            f"exact collective sum limited to N <= {EXACT_COLLECTIVE_MAX_SITES}; "
            "use collective_success_truncated for longer chains"
        )
    prob = [np.abs(propagator(spectral_data(spec, k), t)) ** 2 for k in range(N + 1)]
    coeffs = np.zeros(N)
    for j in range(N):
        bj, bj1 = spectral_data(spec, j).basis, spectral_data(spec, j + 1).basis
        S = [s for s in bj.states if 1 not in s]
        R = [r for r in bj.states if N not in r]
        cols_j = [bj.position(s) for s in S]
        rows_j = [bj.position(r) for r in R]
        cols_j1 = [bj1.position((1,) + s) for s in S]
        rows_j1 = [bj1.position(r + (N,)) for r in R]
        coeffs[j] = np.sum(prob[j][np.ix_(rows_j, cols_j)] * prob[j + 1][np.ix_(rows_j1, cols_j1)])
    return coeffs


def collective_polynomial(coeffs, x):
    n_minus_1 = len(coeffs) - 1
    x = np.asarray(x, dtype=float)
    j = np.arange(len(coeffs))
    terms = x[..., None] ** (2 * j) * (1 - x[..., None]) ** (2 * (n_minus_1 - j))
    return terms @ coeffs


def collective_success_exact(spec: ChainSpec, x: float, t: float) -> InitNoiseResult:
    if not 0.0 <= x <= 1.0:
        raise InitNoiseError("x is a probability")
    c = collective_coefficients(spec, t)
    return InitNoiseResult(float(collective_polynomial(c, x)), float(c[0]), float(c[1]),
                           tuple(float(v) for v in c[2:]))


def collective_success_truncated(spec: ChainSpec, x: float, t: float) -> InitNoiseResult:
    """Keep the clean and single-stray-excitation terms only (valid for x < 0.1)."""
    if not 0.0 <= x < TRUNCATION_X_LIMIT:
        raise InitNoiseError(
            f"truncated collective form needs 0 <= x < {TRUNCATION_X_LIMIT}: higher "
            "orders in x are no longer negligible"
        )
    N = spec.n_sites
    p0 = abs(amplitude(spectral_data(spec, 1), 1, N, t)) ** 2
    c1 = float(p1_profile(spec, t).sum())
    p = (1 - x) ** (2 * (N - 1)) * p0 + x * x * (1 - x) ** (2 * (N - 2)) * c1
    return InitNoiseResult(float(p), float(p0), c1)
