"""Spectral propagation inside excitation sectors, plus a full-Hilbert oracle."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

from .chain_model import (
    ChainSpec,
    ExcitationBasis,
    HamiltonianBlock,
    Model,
    build_couplings,
    k_excitation_block,
)

ORACLE_MAX_SITES = 10


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    basis: ExcitationBasis

    def position(self, state) -> int:
        return self.basis.position(state)


def decompose(block: HamiltonianBlock) -> SpectralData:
    H = block.matrix
    if not np.allclose(H, H.T, rtol=0, atol=1e-14):
        raise ValueError("Hamiltonian block is not symmetric")
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(
            f"eigh failed on block N={block.basis.n_sites}, k={block.basis.k}: {exc}"
        ) from exc
    w.setflags(write=False)
    V.setflags(write=False)
    return SpectralData(w, V, block.basis)


@lru_cache(maxsize=256)
def spectral_data(spec: ChainSpec, k: int = 1) -> SpectralData:
    """Cached decomposition of the k-excitation block of ``spec``.

    ChainSpec is frozen and hashes its disorder tuple, so disordered
    realisations get distinct entries.
    """
    return decompose(k_excitation_block(spec, k))


def _phases(sd: SpectralData, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.exp(-1j * t[..., None] * sd.eigenvalues)


def amplitude(sd: SpectralData, source, target, t):
    """<target| exp(-iHt) |source>; ``t`` may be a scalar or an array."""
    i, j = sd.position(source), sd.position(target)
    weights = sd.eigenvectors[j] * sd.eigenvectors[i]
    out = _phases(sd, t) @ weights
    return complex(out) if np.ndim(out) == 0 else out


def amplitudes_from(sd: SpectralData, source, t) -> np.ndarray:
    """All amplitudes out of one basis state; shape ``t.shape + (dim,)``."""
    i = sd.position(source)
    V = sd.eigenvectors
    return (_phases(sd, t) * V[i]) @ V.T


def propagator(sd: SpectralData, t: float) -> np.ndarray:
    V = sd.eigenvectors
    return (V * np.exp(-1j * t * sd.eigenvalues)) @ V.T


def propagate(sd: SpectralData, state, t: float) -> np.ndarray:
    psi = np.asarray(state, dtype=complex)
    if psi.shape != (len(sd.basis),):
        raise ValueError(f"state has shape {psi.shape}, basis dimension is {len(sd.basis)}")
    V = sd.eigenvectors
    return V @ (np.exp(-1j * t * sd.eigenvalues) * (V.T @ psi))


def basis_vector(sd: SpectralData, state) -> np.ndarray:
    psi = np.zeros(len(sd.basis), dtype=complex)
    psi[sd.position(state)] = 1.0
    return psi


def amplitude_series_csv(sd: SpectralData, source, target, times) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "re", "im", "abs2"])
    for t, f in zip(times, amplitude(sd, source, target, np.asarray(times))):
        f = complex(f)
        writer.writerow([repr(float(t)), repr(f.real), repr(f.imag), repr(abs(f) ** 2)])
    return buf.getvalue()


# full Hilbert space, site 1 is the most significant qubit; |1> = excited
_I2 = np.eye(2)
_SP = np.array([[0.0, 0.0], [1.0, 0.0]])  # |1><0|
_SX = _SP + _SP.T
_SY = -1j * (_SP - _SP.T)
_SZ = np.diag([-1.0, 1.0])


def _site_op(op, site: int, n: int) -> np.ndarray:
    return reduce(np.kron, [op if s == site else _I2 for s in range(1, n + 1)])


def full_hamiltonian(spec: ChainSpec) -> np.ndarray:
    """Dense 2^N Hamiltonian assembled from Pauli matrices."""
    N = spec.n_sites
    if N > ORACLE_MAX_SITES:
        raise ValueError(f"full-Hilbert construction limited to N <= {ORACLE_MAX_SITES}")
    bonds = build_couplings(spec).bonds
    ops = {name: [_site_op(m, s, N) for s in range(1, N + 1)]
           for name, m in (("x", _SX), ("y", _SY), ("z", _SZ))}
    H = np.zeros((2**N, 2**N), dtype=complex)
    for i in range(N - 1):
        xy = ops["x"][i] @ ops["x"][i + 1] + ops["y"][i] @ ops["y"][i + 1]
        if spec.model is Model.XY_END_MODULATED:
            H += 0.5 * bonds[i] * xy
        else:
            H -= bonds[i] * (xy + ops["z"][i] @ ops["z"][i + 1])
    H += spec.larmor * sum(ops["z"])
    return H


def subset_to_index(subset, n_sites: int) -> int:
    return sum(1 << (n_sites - s) for s in subset)


def sector_indices(basis: ExcitationBasis) -> np.ndarray:
    return np.array([subset_to_index(s, basis.n_sites) for s in basis.states])


def full_hilbert_oracle(spec: ChainSpec, initial, t: float) -> np.ndarray:
    """Evolve a basis state exactly in the full 2^N space (N <= 10)."""
    N = spec.n_sites
    if N > ORACLE_MAX_SITES:
        raise ValueError(f"oracle limited to N <= {ORACLE_MAX_SITES}, got {N}")
    H = full_hamiltonian(spec)
    w, V = np.linalg.eigh(H)
    psi = np.zeros(2**N, dtype=complex)
    initial = (initial,) if np.isscalar(initial) else tuple(initial)
    psi[subset_to_index(initial, N)] = 1.0
    return V @ (np.exp(-1j * t * w) * (V.conj().T @ psi))
