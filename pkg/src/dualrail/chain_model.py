"""Spin-chain specifications and their fixed-excitation Hamiltonian blocks.

Sites are numbered 1..N in every public function; a basis state with ``k``
excitations is the sorted tuple of its excited sites.  Internally arrays are
0-based.  Energies are in units of the bulk coupling J and hbar = 1.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

DEFAULT_DELTA_BOUND = 0.01
DEFAULT_BLOCK_CAP = 100_000


class Model(str, enum.Enum):
    XY_END_MODULATED = "xy"
    HEISENBERG_UNIFORM = "heisenberg"


class ChainValidationError(ValueError):
    pass


class BlockCapExceeded(ValueError):
    pass


class RootFindingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainSpec:
    """One spin chain.

    ``end_coupling`` is the modulated coupling ``a`` on bonds 1 and N-1 (XY
    model only).  ``bond_disorder`` holds the relative perturbation of each of
    the N-1 bonds, bond i joining sites i and i+1.
    """

    n_sites: int
    model: Model = Model.XY_END_MODULATED
    end_coupling: float = 1.0
    bulk_coupling: float = 1.0
    larmor: float = 0.0
    bond_disorder: tuple[float, ...] | None = None
    delta_bound: float = DEFAULT_DELTA_BOUND

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.n_sites < 2:
            raise ChainValidationError(f"n_sites must be >= 2, got {self.n_sites}")
        if self.model is Model.XY_END_MODULATED and not 0.0 < self.end_coupling <= 1.0:
            raise ChainValidationError(
                f"end coupling a must satisfy 0 < a <= 1, got {self.end_coupling}"
            )
        if self.bond_disorder is None:
            disorder = (0.0,) * (self.n_sites - 1)
        else:
            disorder = tuple(float(d) for d in self.bond_disorder)
        if len(disorder) != self.n_sites - 1:
            raise ChainValidationError(
                f"bond_disorder needs {self.n_sites - 1} entries, got {len(disorder)}"
            )
        worst = max((abs(d) for d in disorder), default=0.0)
        if worst > self.delta_bound:
            raise ChainValidationError(
                f"disorder entry {worst} exceeds the bound {self.delta_bound}"
            )
        object.__setattr__(self, "bond_disorder", disorder)

    @property
    def a(self) -> float:
        return self.end_coupling

    def with_disorder(self, disorder, delta_bound: float | None = None) -> ChainSpec:
        bound = self.delta_bound if delta_bound is None else delta_bound
        return ChainSpec(
            self.n_sites, self.model, self.end_coupling, self.bulk_coupling,
            self.larmor, tuple(disorder), bound,
        )

    def with_end_coupling(self, a: float) -> ChainSpec:
        return ChainSpec(
            self.n_sites, self.model, a, self.bulk_coupling,
            self.larmor, self.bond_disorder, self.delta_bound,
        )

    def to_dict(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "model": self.model.value,
            "a": self.end_coupling,
            "j": self.bulk_coupling,
            "omega": self.larmor,
            "disorder": list(self.bond_disorder),
        }

    @classmethod
    def from_dict(cls, data: dict, delta_bound: float = DEFAULT_DELTA_BOUND) -> ChainSpec:
        allowed = {"n_sites", "model", "a", "j", "omega", "disorder"}
        unknown = set(data) - allowed
        if unknown:
            raise ChainValidationError(f"unknown chain config keys: {sorted(unknown)}")
        if "n_sites" not in data:
            raise ChainValidationError("chain config requires n_sites")
        return cls(
            n_sites=int(data["n_sites"]),
            model=Model(data.get("model", Model.XY_END_MODULATED.value)),
            end_coupling=float(data.get("a", 1.0)),
            bulk_coupling=float(data.get("j", 1.0)),
            larmor=float(data.get("omega", 0.0)),
            bond_disorder=data.get("disorder"),
            delta_bound=delta_bound,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str, delta_bound: float = DEFAULT_DELTA_BOUND) -> ChainSpec:
        return cls.from_dict(json.loads(text), delta_bound=delta_bound)

    @classmethod
    def load(cls, path, delta_bound: float = DEFAULT_DELTA_BOUND) -> ChainSpec:
        return cls.from_json(Path(path).read_text(), delta_bound=delta_bound)


@dataclass(frozen=True)
class CouplingProfile:
    bonds: np.ndarray

    def __post_init__(self):
        bonds = np.asarray(self.bonds, dtype=float)
        bonds.setflags(write=False)
        object.__setattr__(self, "bonds", bonds)


def build_couplings(spec: ChainSpec) -> CouplingProfile:
    """Bond strengths including end modulation and the (1 + delta) factors."""
    J = spec.bulk_coupling
    bonds = np.full(spec.n_sites - 1, J, dtype=float)
    if spec.model is Model.XY_END_MODULATED:
        bonds[0] = bonds[-1] = spec.end_coupling
    bonds = bonds * (1.0 + np.asarray(spec.bond_disorder))
    if np.any(bonds <= 0.0):
        raise ChainValidationError("every bond must be strictly positive")
    return CouplingProfile(bonds)


@dataclass(frozen=True)
class ExcitationBasis:
    """All k-subsets of sites 1..N in lexicographic order."""

    n_sites: int
    k: int
    states: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.k <= self.n_sites:
            raise ValueError(f"excitation number {self.k} out of range 0..{self.n_sites}")
        states = tuple(itertools.combinations(range(1, self.n_sites + 1), self.k))
        object.__setattr__(self, "states", states)

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {s: i for i, s in enumerate(self.states)}

    def __len__(self):
        return len(self.states)

    def position(self, state) -> int:
        """Index of a basis state given as a site number (k = 1) or a subset."""
        key = (int(state),) if np.isscalar(state) else tuple(sorted(int(s) for s in state))
        try:
            return self.index[key]
        except KeyError:
            raise KeyError(f"{key} is not a state of the {self.k}-excitation basis "
                           f"on {self.n_sites} sites") from None

    def complement(self, state) -> tuple[int, ...]:
        chosen = set(self.states[self.position(state)])
        return tuple(s for s in range(1, self.n_sites + 1) if s not in chosen)


@dataclass(frozen=True)
class HamiltonianBlock:
    basis: ExcitationBasis
    matrix: np.ndarray


def _check_cap(n: int, k: int, cap: int):
    if not 0 <= k <= n:
        raise ValueError(f"excitation number {k} out of range 0..{n}")
    size = math.comb(n, k)
    if size > cap:
        raise BlockCapExceeded(f"C({n},{k}) = {size} exceeds the block cap {cap}")


def k_excitation_block(spec: ChainSpec, k: int, cap: int = DEFAULT_BLOCK_CAP) -> HamiltonianBlock:
    """Hamiltonian restricted to states with exactly ``k`` excitations.

    XY: hopping ``bonds[i]`` between subsets that differ by one excitation
    moved across bond i.  Heisenberg: ``-b (2 hopping + sz sz)`` per bond.
    The Larmor term contributes ``omega (2k - N)`` on the diagonal.
    """
    N = spec.n_sites
    _check_cap(N, k, cap)
    basis = ExcitationBasis(N, k)
    bonds = build_couplings(spec).bonds
    heis = spec.model is Model.HEISENBERG_UNIFORM
    hop_scale = -2.0 if heis else 1.0
    dim = len(basis)
    H = np.zeros((dim, dim))
    index = basis.index
    for col, state in enumerate(basis.states):
        occupied = np.zeros(N + 2, dtype=bool)
        occupied[list(state)] = True
        diag = spec.larmor * (2 * k - N)
        for i in range(1, N):  # bond i joins sites i, i+1
            left, right = occupied[i], occupied[i + 1]
            if heis:
                diag -= bonds[i - 1] * (1.0 if left == right else -1.0)
            if left != right:
                moved = set(state)
                moved.symmetric_difference_update((i, i + 1))
                H[index[tuple(sorted(moved))], col] = hop_scale * bonds[i - 1]
        H[col, col] = diag
    return HamiltonianBlock(basis, H)


def _secular_functions(n_sites: int, a: float):
    r = a * a / (2.0 - a * a)
    half = (n_sites - 1) / 2.0

    # pole-free forms of  mu cot(k) cot^mu((N-1)k/2) = r
    def plus(k):
        return np.cos(k) * np.cos(half * k) - r * np.sin(k) * np.sin(half * k)

    def minus(k):
        return np.cos(k) * np.sin(half * k) + r * np.sin(k) * np.cos(half * k)

    return {1: plus, -1: minus}


def secular_residual(n_sites: int, a: float, k: float, mu: int) -> float:
    """Residual of the secular equation with denominators cleared.

    The cot form is 0 * inf at k = pi/2 roots, so the equivalent
    ``cos k cos t - r sin k sin t`` (mu = +1) or ``cos k sin t + r sin k cos t``
    (mu = -1), t = (N-1)k/2, is evaluated instead.
    """
    return float(_secular_functions(n_sites, a)[mu](k))


def secular_roots(n_sites: int, a: float, samples_per_site: int = 64) -> list[tuple[float, int]]:
    """All (k, mu) in (0, pi) solving the end-modulated XY secular equation.

    Eigenvalues of the single-excitation block are ``2 cos k`` (J = 1).
    Spurious zeros introduced by clearing denominators are removed by checking
    the analytic eigenvector against the chain Hamiltonian.
    """
    if n_sites < 3:
        raise ValueError("secular equation needs N >= 3")
    if not 0.0 < a <= 1.0:
        raise ValueError(f"end coupling must satisfy 0 < a <= 1, got {a}")
    spec = ChainSpec(n_sites, Model.XY_END_MODULATED, a)
    H = k_excitation_block(spec, 1).matrix
    eps = 1e-9
    grid = np.linspace(eps, math.pi - eps, samples_per_site * n_sites + 1)
    roots = []
    for mu, g in _secular_functions(n_sites, a).items():
        values = g(grid)
        for i in range(len(grid) - 1):
            lo, hi = grid[i], grid[i + 1]
            if values[i] == 0.0:
                candidates = [lo]
            elif values[i] * values[i + 1] < 0.0:
                try:
                    candidates = [brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)]
                except (RuntimeError, ValueError) as exc:
                    raise RootFindingError(
                        f"bracket [{lo}, {hi}] for mu={mu} failed to converge: {exc}"
                    ) from exc
            else:
                continue
            for k in candidates:
                v = _analytic_components(n_sites, a, k, mu)
                norm = np.linalg.norm(v)
                if norm < 1e-8:
                    continue
                v = v / norm
                if np.linalg.norm(H @ v - 2.0 * math.cos(k) * v) < 1e-7:
                    roots.append((float(k), mu))
    roots.sort()
    if len(roots) != n_sites:
        raise RootFindingError(f"found {len(roots)} secular roots, expected {n_sites}")
    return roots


def _analytic_components(n_sites: int, a: float, k: float, mu: int) -> np.ndarray:
    i = np.arange(2, n_sites)
    v = np.empty(n_sites)
    v[0] = a * math.sin(k)
    v[1:-1] = np.sin(i * k) + (1.0 - a * a) * np.sin((i - 2) * k)
    v[-1] = mu * a * math.sin(k)
    return v


def normalization_factor(n_sites: int, a: float, k: float) -> float:
    c2 = (n_sites - 1) * (2 * (1 - a * a) * math.cos(k) ** 2 + a**4 / 2) + 2 * a * a - a**4
    return math.sqrt(c2)


def analytic_eigenvector(n_sites: int, a: float, k: float, mu: int, tol: float = 1e-8) -> np.ndarray:
    """Closed-form single-excitation eigenvector for the secular root (k, mu).

    Components: ``a sin k`` at site 1, ``sin(ik) + (1 - a^2) sin((i-2)k)`` in
    the bulk and ``mu a sin k`` at site N, divided by the normalisation c.
    """
    if mu not in (1, -1):
        raise ValueError("mu must be +1 or -1")
    g = _secular_functions(n_sites, a)[mu]
    if abs(g(k)) > tol:
        raise ValueError(f"k={k} is not a secular root for mu={mu}")
    return _analytic_components(n_sites, a, k, mu) / normalization_factor(n_sites, a, k)


def fixture_disorder() -> tuple[tuple[float, ...], tuple[float, ...]]:
    """The two published N=30, Delta=0.01 bond-disorder samples."""
    text = resources.files("dualrail").joinpath("data/fixture_disorder.json").read_text()
    data = json.loads(text)
    return tuple(data["chain1"]), tuple(data["chain2"])
