"""Species-resolved detection and the resonance lower bound.

A detector is the reduced density matrix of a localized quasiparticle state
on a small window.  Scanned across a scattering state it acts as a
projector-like species filter; combined with the local energy terms it
yields a triangle-inequality certificate for energy density that cannot be
attributed to any of the known species.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .mps import MatrixProductState


@dataclass(frozen=True)
class Detector:
    species: str
    rho: np.ndarray
    width: int


def _centered_window(center: int, width: int, length: int):
    half = width // 2
    lo, hi = center - half, center + half
    if lo < 0 or hi >= length:
        return None
    return tuple(range(lo, hi + 1))


def _window_embed(mat: np.ndarray, offset: int, width: int, d: int = 3) -> np.ndarray:
    """mat acting on `mat`'s sites embedded at offset within a width-site frame."""
    n_sites = round(np.log(mat.shape[0]) / np.log(d))
    left = d**offset
    right = d ** (width - offset - n_sites)
    return np.kron(np.kron(np.eye(left), mat), np.eye(right))


def build_detector(
    mlwf: np.ndarray,
    length: int,
    width: int,
    center: int | None = None,
    species: str = "0_1++",
) -> Detector:
    """Reduced density matrix of the localized state on a centered window."""
    if center is None:
        center = length // 2
    window = _centered_window(center, width, length)
    if window is None:
        raise ValueError("detector window leaves the lattice")
    psi = np.asarray(mlwf).reshape([3] * length)
    front = np.moveaxis(psi, window, range(width)).reshape(3**width, -1)
    rho = front @ front.conj().T
    rho = (rho + rho.conj().T) / 2
    return Detector(species=species, rho=rho / np.trace(rho).real, width=width)


def hs_overlap(detector: Detector, state: MatrixProductState, j: int) -> float:
    """Tr[rho_phi rho_j] with the detector window centered at site j."""
    window = _centered_window(j, detector.width, state.length)
    if window is None:
        raise ValueError("detector window leaves the lattice")
    value = state.local_expectation(detector.rho, window).real
    return float(min(max(value, 0.0), 1.0))


def detection_signal(
    detector: Detector,
    state: MatrixProductState,
    vacuum: MatrixProductState | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Detector scan: (sites, raw, background-subtracted).

    The interacting vacuum gives a nonzero overlap floor; both the raw
    signal and the vacuum-subtracted one are returned.
    """
    half = detector.width // 2
    sites = np.arange(half, state.length - half)
    raw = np.array([hs_overlap(detector, state, int(j)) for j in sites])
    if vacuum is None:
        background = np.zeros_like(raw)
    else:
        background = np.array([hs_overlap(detector, vacuum, int(j)) for j in sites])
    return sites, raw, raw - background


def detection_observable(detector: Detector, vacuum: MatrixProductState | None = None):
    """Observer factory for run_scattering; emits the subtracted scan."""
    cache = {}

    def observe(t, state):
        if "background" not in cache and vacuum is not None:
            cache["background"] = detection_signal(detector, vacuum)[1]
        sites, raw, _ = detection_signal(detector, state)
        if vacuum is None:
            return raw
        return raw - cache["background"]

    return observe


def _assert_density_matrix(rho: np.ndarray, tol: float = 1e-10):
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix must be Hermitian")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -1e-8:
        raise ValueError("density matrix is not positive semidefinite")
    if abs(np.sum(evals) - 1.0) > 1e-8:
        raise ValueError("density matrix must have unit trace")


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    evals, vecs = np.linalg.eigh(rho)
    # zero out eigenvalue roundoff; the sqrt would amplify +1e-16 noise
    # into 1e-8 spurious singular directions of the root
    floor = max(evals.max(), 0.0) * 1e-12
    evals = np.where(evals < floor, 0.0, evals)
    return (vecs * np.sqrt(evals)) @ vecs.conj().T


def uhlmann_fidelity(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """(Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2 via the nuclear norm."""
    _assert_density_matrix(rho1)
    _assert_density_matrix(rho2)
    s = np.linalg.svd(_psd_sqrt(rho1) @ _psd_sqrt(rho2), compute_uv=False)
    return float(min(s.sum() ** 2, 1.0))


def fidelity_bounds(rho1: np.ndarray, rho2: np.ndarray) -> tuple[float, float]:
    """Measurable sandwich: Tr[r1 r2] <= F <= Tr[r1 r2] + purity defect term."""
    lower = float(np.trace(rho1 @ rho2).real)
    p1 = float(np.trace(rho1 @ rho1).real)
    p2 = float(np.trace(rho2 @ rho2).real)
    delta = np.sqrt(max(1 - p1, 0.0)) * np.sqrt(max(1 - p2, 0.0))
    return lower, lower + float(delta)


def epsilon_functional(
    state: MatrixProductState,
    local_ham,
    vacuum: MatrixProductState,
    operator: np.ndarray | None = None,
    width: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """eps_j[O] = |<psi|O h_j|psi> - <Omega|O h_j|Omega>| per term center j.

    operator of size 3^width acts on a window centered on the same site as
    h_j; both factors are embedded in that window and composed as written.
    With operator None the plain energy-excess magnitude comes back.
    """
    length = local_ham.length
    if operator is None:
        sites_out, vals = [], []
        for j, (sites, mat) in enumerate(local_ham.terms):
            diff = state.local_expectation(mat, sites) - vacuum.local_expectation(
                mat, sites
            )
            sites_out.append(j)
            vals.append(abs(diff))
        return np.array(sites_out), np.array(vals)
    if width is None or width % 2 == 0:
        raise ValueError("operator window width must be odd")
    if operator.shape != (3**width, 3**width):
        raise ValueError("operator does not match the window width")
    half = width // 2
    sites_out, vals = [], []
    for j, (sites, mat) in enumerate(local_ham.terms):
        window = _centered_window(j, width, length)
        if window is None or sites[0] < window[0] or sites[-1] > window[-1]:
            continue
        embedded = _window_embed(mat, sites[0] - window[0], width)
        composed = operator @ embedded
        diff = state.local_expectation(composed, window) - vacuum.local_expectation(
            composed, window
        )
        sites_out.append(j)
        vals.append(abs(diff))
    return np.array(sites_out), np.array(vals)


def calibrate_coefficients(
    eps0: np.ndarray, detector_profiles: list
) -> tuple[np.ndarray, float]:
    """Nonnegative least squares of the t=0 excess onto detector responses.

    Ill-conditioned normal equations fall back to independent per-detector
    ratio fits.
    """
    if not detector_profiles:
        return np.array([]), float(np.linalg.norm(eps0))
    a = np.column_stack(detector_profiles)
    if np.linalg.cond(a.conj().T @ a) > 1e12:
        c = np.array(
            [
                max(float(np.dot(eps0, col) / np.dot(col, col)), 0.0)
                for col in a.T
            ]
        )
    else:
        c, _ = scipy.optimize.nnls(a, eps0)
    residual = float(np.linalg.norm(eps0 - a @ c))
    return c, residual


def resonance_lower_bound(
    eps: np.ndarray, detector_eps: list, coefficients: np.ndarray
) -> np.ndarray:
    """eps_j - sum_a c_a eps_j[rho_a]; positive values certify unknown content."""
    out = np.array(eps, dtype=float)
    for c, profile in zip(coefficients, detector_eps):
        out = out - c * np.asarray(profile)
    return out
