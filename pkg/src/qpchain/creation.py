"""Unitary dressed creation operators from localized Wannier states.

The best unitary on a small support W that turns the vacuum into the MLWF
maximizes |<phi|U|Omega>| = |Tr[A^dag U]| with A the partial overlap
Tr_{not W}|phi><Omega|.  By the von Neumann trace inequality the maximum is
the trace norm of A, attained at the unitary polar factor of A; the achieved
fidelity is the squared trace norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mpo import dense_to_site_tensors, site_tensors_to_dense


@dataclass
class CreationOperator:
    support: tuple
    unitary: np.ndarray
    fidelity: float
    singular_values: np.ndarray
    null_dimension: int
    mpo_form: list | None = field(default=None, repr=False)

    @property
    def width(self) -> int:
        return len(self.support)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


def support_sites(length: int, width: int, center: int | None = None) -> tuple:
    """Contiguous odd-width window centered on the Wannier site."""
    if width % 2 == 0:
        raise ValueError("support width must be odd")
    if center is None:
        center = length // 2
    lo = center - (width - 1) // 2
    hi = center + (width - 1) // 2
    if lo < 0 or hi >= length:
        raise ValueError(
            f"support of width {width} at center {center} exceeds the lattice"
        )
    return tuple(range(lo, hi + 1))


def _support_front(state: np.ndarray, support: tuple, length: int) -> np.ndarray:
    """Reshape a chain state so the support sites form the leading axis."""
    arr = state.reshape((3,) * length)
    rest = [j for j in range(length) if j not in support]
    arr = arr.transpose(list(support) + rest)
    return arr.reshape(3 ** len(support), -1)


def partial_overlap_operator(
    mlwf: np.ndarray, vacuum: np.ndarray, support: tuple, length: int
) -> np.ndarray:
    """A = Tr_{not W} |phi><Omega| as a matrix on the support."""
    if any(j < 0 or j >= length for j in support):
        raise ValueError("support exceeds the lattice")
    if list(support) != list(range(support[0], support[-1] + 1)):
        raise ValueError("support must be a contiguous window")
    phi = _support_front(mlwf, support, length)
    omega = _support_front(vacuum, support, length)
    return phi @ omega.conj().T


def procrustes_unitary(a: np.ndarray, null_threshold: float = 1e-12) -> tuple:
    """(unitary, fidelity, singular values, null dimension) for max |Tr[A^dag U]|.

    The null dimension counts singular directions below null_threshold *
    sigma_max: on that block the optimal unitary is pure gauge.
    """
    u, s, vh = np.linalg.svd(a)
    if s[0] < 1e-14:
        raise ValueError("overlap operator is numerically zero: the band is "
                         "orthogonal to the vacuum on this support")
    unitary = u @ vh
    fidelity = float(s.sum() ** 2)
    null_dim = int(np.count_nonzero(s < null_threshold * s[0]))
    return unitary, fidelity, s, null_dim


def dressed_creation_operator(
    mlwf: np.ndarray,
    vacuum: np.ndarray,
    length: int,
    width: int,
    center: int | None = None,
    null_threshold: float = 1e-12,
) -> CreationOperator:
    support = support_sites(length, width, center)
    a = partial_overlap_operator(mlwf, vacuum, support, length)
    unitary, fidelity, s, null_dim = procrustes_unitary(a, null_threshold)
    return CreationOperator(
        support=support,
        unitary=unitary,
        fidelity=fidelity,
        singular_values=s,
        null_dimension=null_dim,
    )


def to_mpo(op: CreationOperator, cutoff: float = 1e-14) -> list:
    """Site-tensor chain of the support unitary; cached on the operator."""
    tensors = dense_to_site_tensors(op.unitary, op.width, cutoff=cutoff)
    op.mpo_form = tensors
    return tensors


def recontracted(op: CreationOperator) -> np.ndarray:
    tensors = op.mpo_form if op.mpo_form is not None else to_mpo(op)
    return site_tensors_to_dense(tensors)


def infidelity_scan(
    groups,
    lambdas,
    supports,
    length: int = 7,
    labels=("0_1++",),
    n_bands: int = 1,
) -> list:
    """1 - F per (group, band, lambda, support) on one intermediate chain."""
    from .models import build_hamiltonian
    from .spectroscopy import classify_bands, extract_bands
    from .wannier import kspace_local_matrix, minimize_spread

    rows = []
    for group in groups:
        for lam in lambdas:
            ham = build_hamiltonian(group, lam, length, boundary="PBC")
            result = extract_bands(ham.to_sparse(), length, n_bands=n_bands)
            bands = classify_bands(result)
            for label in labels:
                band = bands[label]
                m = kspace_local_matrix(band, ham)
                w = minimize_spread(band, m, band.vacuum_energy)
                for width in supports:
                    cop = dressed_creation_operator(
                        w.state, result.vacuum_state, length, width
                    )
                    rows.append(
                        {
                            "group": group,
                            "band": label,
                            "lambda": lam,
                            "support": width,
                            "infidelity": cop.infidelity,
                        }
                    )
    return rows
