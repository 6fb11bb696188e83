"""Session caches for the expensive diagonalization and DMRG artifacts.

Several test modules want the same localized creation operator or the same
converged chain vacuum; building each once per session keeps the suite
tolerable without hiding any state inside the modules themselves.
"""

import warnings

import pytest

from qpchain.creation import dressed_creation_operator
from qpchain.dmrg import dmrg_ground_state
from qpchain.models import build_hamiltonian
from qpchain.mpo import MatrixProductOperator
from qpchain.spectroscopy import (
    classify_bands,
    extract_bands,
    fourier_interpolate_dispersion,
)
from qpchain.wannier import kspace_local_matrix, minimize_spread


@pytest.fixture(scope="session")
def qp_pipeline():
    """(group, lam, length, width, label) -> (op, band, result, local_ham, mlwf)."""
    cache = {}

    def build(group, lam, length=7, width=3, label="0_1++", **extract_kw):
        key = (group, lam, length, width, label, tuple(sorted(extract_kw.items())))
        if key not in cache:
            lh = build_hamiltonian(group, lam, length, "PBC")
            result = extract_bands(lh.to_sparse(), length, **extract_kw)
            band = classify_bands(result)[label]
            m = kspace_local_matrix(band, lh)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                w = minimize_spread(band, m, band.vacuum_energy)
            op = dressed_creation_operator(
                w.state, result.vacuum_state, length, width
            )
            cache[key] = (op, band, result, lh, w)
        return cache[key]

    return build


@pytest.fixture(scope="session")
def band_dispersion():
    """(group, lam, length, label) -> (dispersion, v_max, k_at, band)."""
    cache = {}

    def build(group, lam, length=8, label="0_1++", **extract_kw):
        key = (group, lam, length, label, tuple(sorted(extract_kw.items())))
        if key not in cache:
            lh = build_hamiltonian(group, lam, length, "PBC")
            result = extract_bands(lh.to_sparse(), length, **extract_kw)
            band = classify_bands(result)[label]
            disp, v_max, k_at = fourier_interpolate_dispersion(
                band.momenta, band.energies
            )
            cache[key] = (disp, v_max, k_at, band)
        return cache[key]

    return build


@pytest.fixture(scope="session")
def obc_ground():
    """(group, lam, length, dmrg knobs) -> (local_ham, h_mpo, dmrg result)."""
    cache = {}

    def build(group, lam, length, max_chi=48, tol=1e-12, max_sweeps=40):
        key = (group, lam, length, max_chi, tol, max_sweeps)
        if key not in cache:
            lh = build_hamiltonian(group, lam, length, "OBC")
            h_mpo = MatrixProductOperator.from_local_hamiltonian(lh)
            ground = dmrg_ground_state(
                h_mpo, max_chi=max_chi, tol=tol, max_sweeps=max_sweeps
            )
            cache[key] = (lh, h_mpo, ground)
        return cache[key]

    return build
