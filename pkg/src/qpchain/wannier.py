"""Maximally localized Wannier functions from a Bloch band.

The Wannier state is a phase-weighted sum of one band's Bloch states; the
free gauge phases are chosen to minimize an energy-based spread: the second
moment of the (normalized) local energy excess above the vacuum.  Everything
needed during minimization is condensed beforehand into one l x l matrix of
local-term matrix elements between Bloch states.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize as sopt

from .models import LocalHamiltonian, embed_operator


@dataclass(frozen=True)
class WannierGauge:
    """One phase per momentum; parity-symmetric gauges have theta_k = theta_-k."""

    theta: np.ndarray

    @property
    def length(self) -> int:
        return self.theta.size


@dataclass
class WannierState:
    gauge: WannierGauge
    state: np.ndarray
    center: int
    excess_profile: np.ndarray
    distribution: np.ndarray
    spread: float
    converged: bool
    spread_history: np.ndarray

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.spread))


def kspace_local_matrix(band, local_ham: LocalHamiltonian) -> np.ndarray:
    """M[k', k] = <phi_k'| h_0 |phi_k> for the local term centered at site 0.

    Translation covariance of the terms turns every other <phi_k'|h_j|phi_k>
    into a phase twist of M, so this one matrix determines the full excess
    profile for any gauge.
    """
    sites, mat = local_ham.term_matrix(0)
    op = embed_operator(mat, sites, band.length)
    m = band.states.conj().T @ (op @ band.states)
    return (m + m.conj().T) * 0.5


def wannier_vector(band, theta: np.ndarray) -> np.ndarray:
    """|phi_theta> = l^{-1/2} sum_k e^{i theta_k} |phi_k>."""
    z = np.exp(1j * np.asarray(theta))
    return band.states @ z / np.sqrt(band.length)


def distance_grid(length: int, center: int) -> np.ndarray:
    """x_j = (l/pi) sin(pi (j - j0)/l): chord distance, ~j - j0 near center."""
    j = np.arange(length)
    return (length / np.pi) * np.sin(np.pi * (j - center) / length)


def excess_from_kspace(theta: np.ndarray, m: np.ndarray, vacuum_energy: float) -> np.ndarray:
    """Excess profile eps_j for the gauge theta, from the k-space matrix."""
    l = m.shape[0]
    z = np.exp(1j * np.asarray(theta))
    g = np.outer(z.conj(), z) * m
    v = np.exp(1j * np.outer(np.arange(l), _kgrid(l)))  # v[j, k] = e^{i j k}
    eps = np.einsum("jk,kq,jq->j", v, g, v.conj()).real / l
    return eps - vacuum_energy / l


def energy_excess(state: np.ndarray, local_ham: LocalHamiltonian, vacuum_energy: float) -> np.ndarray:
    """Direct eps_j = <phi|h_j|phi> - omega_Omega / l, one embedding per site."""
    l = local_ham.length
    out = np.empty(l)
    for j in range(l):
        sites, mat = local_ham.term_matrix(j)
        op = embed_operator(mat, sites, l)
        out[j] = np.real(state.conj() @ (op @ state)) - vacuum_energy / l
    return out


def spread_functional(
    theta: np.ndarray, m: np.ndarray, vacuum_energy: float, center: int
) -> float:
    eps = excess_from_kspace(theta, m, vacuum_energy)
    return profile_spread(eps, center)


def profile_spread(eps: np.ndarray, center: int) -> float:
    """Second moment of the normalized |eps| profile around `center`."""
    s = np.abs(eps).sum()
    if s < 1e-14:
        raise ValueError("energy excess vanishes everywhere; band is "
                         "indistinguishable from the vacuum")
    p = np.abs(eps) / s
    x = distance_grid(eps.size, center)
    return float(np.sum(x**2 * p))


def spread_and_gradient(
    theta: np.ndarray, m: np.ndarray, vacuum_energy: float, center: int
):
    """(sigma^2, d sigma^2 / d theta), both analytic.

    d eps_j / d theta_q = (2/l) Im[conj(z_q) (E_j z)_q] with
    E_j = e^{i j (k'-k)} M; the spread chain rule weights these by
    sign(eps_j)(x_j^2 - sigma^2)/S.
    """
    l = m.shape[0]
    z = np.exp(1j * np.asarray(theta))
    v = np.exp(1j * np.outer(np.arange(l), _kgrid(l)))
    mz = m * z[None, :]
    # (E_j z)_q = e^{i j q} sum_k e^{-i j k} M[q, k] z_k
    b = mz @ v.conj().T  # b[q, j] = sum_k e^{-i j k} M[q,k] z_k
    ejz = v.T * b  # ejz[q, j] = (E_j z)_q
    eps = (np.einsum("qj,q->j", ejz, z.conj()).real / l) - vacuum_energy / l
    deps = (2.0 / l) * np.imag(z.conj()[:, None] * ejz)  # deps[q, j]
    s = np.abs(eps).sum()
    if s < 1e-14:
        raise ValueError("energy excess vanishes everywhere; band is "
                         "indistinguishable from the vacuum")
    x = distance_grid(l, center)
    sigma2 = float(np.sum(x**2 * np.abs(eps)) / s)
    weight = np.sign(eps) * (x**2 - sigma2) / s
    grad = deps @ weight
    return sigma2, grad


def _kgrid(l: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(l) / l


def _parity_expand(length: int, free: np.ndarray) -> np.ndarray:
    """Free parameters -> full parity-symmetric gauge with theta_0 = 0."""
    theta = np.zeros(length)
    half = length // 2
    if length % 2 == 0:
        theta[1:half] = free[: half - 1]
        theta[half] = free[half - 1]
        theta[half + 1 :] = free[: half - 1][::-1]
    else:
        theta[1 : half + 1] = free
        theta[half + 1 :] = free[::-1]
    return theta


def _parity_reduce_gradient(length: int, grad_full: np.ndarray) -> np.ndarray:
    half = length // 2
    if length % 2 == 0:
        out = np.empty(half)
        out[: half - 1] = grad_full[1:half] + grad_full[half + 1 :][::-1]
        out[half - 1] = grad_full[half]
    else:
        out = grad_full[1 : half + 1] + grad_full[half + 1 :][::-1]
    return out


def free_parameter_count(length: int) -> int:
    return length // 2


def minimize_spread(
    band,
    m: np.ndarray,
    vacuum_energy: float,
    center: int | None = None,
    restarts: int = 32,
    seed: int = 7,
) -> WannierState:
    """MLWF gauge by quasi-Newton descent with analytic gradients.

    Starts from theta = 0 plus `restarts` random parity-symmetric gauges and
    keeps the best minimum.  theta_0 is pinned to zero: a uniform phase shift
    only changes the state's global phase.
    """
    l = band.length
    if center is None:
        center = l // 2
    nfree = free_parameter_count(l)

    def objective(x):
        theta = _parity_expand(l, x)
        val, grad = spread_and_gradient(theta, m, vacuum_energy, center)
        return val, _parity_reduce_gradient(l, grad)

    rng = np.random.default_rng(seed)
    starts = [np.zeros(nfree)]
    starts += [rng.uniform(-np.pi, np.pi, size=nfree) for _ in range(restarts)]
    opts = {"maxiter": 1000, "ftol": 0.0, "gtol": 1e-12}

    def descend(x0, history):
        return sopt.minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            callback=lambda xk: history.append(objective(xk)[0]),
            options=opts,
        )

    best = None
    for x0 in starts:
        history = []
        res = descend(x0, history)
        if best is None or res.fun < best[0].fun:
            best = (res, history)
    res, history = best
    # refresh the quasi-Newton memory a few times; near a perfectly
    # localized optimum the kink of |eps| stalls a single run early
    for _ in range(3):
        if np.linalg.norm(objective(res.x)[1]) <= 1e-8:
            break
        again = descend(res.x, history)
        if not again.fun < res.fun:
            break
        res = again
    history = np.array(history)
    grad_norm = float(np.linalg.norm(objective(res.x)[1]))
    # a spread at the rounding floor certifies the global minimum directly:
    # the functional is nonnegative, so the gradient test is moot there
    converged = grad_norm <= 1e-8 or res.fun <= 1e-12
    if not converged:
        warnings.warn(
            f"spread minimization stalled: |grad| = {grad_norm:.2e}",
            stacklevel=2,
        )
    theta = _parity_expand(l, res.x)
    eps = excess_from_kspace(theta, m, vacuum_energy)
    p = np.abs(eps) / np.abs(eps).sum()
    state = wannier_vector(band, theta)
    return WannierState(
        gauge=WannierGauge(theta=theta),
        state=state,
        center=center,
        excess_profile=eps,
        distribution=p,
        spread=float(res.fun),
        converged=converged,
        spread_history=history,
    )
