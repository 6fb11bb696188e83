"""Two-site DMRG ground-state search over an operator chain."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .mps import MatrixProductState, truncated_svd


def advance_left(env: np.ndarray, bra: np.ndarray, w: np.ndarray,
                 ket: np.ndarray) -> np.ndarray:
    """Grow a left environment (bra bond, mpo bond, ket bond) by one site."""
    tmp = np.tensordot(env, bra.conj(), axes=(0, 0))  # (w, k, dout, a')
    tmp = np.tensordot(tmp, w, axes=([0, 2], [0, 1]))  # (k, a', din, w')
    return np.tensordot(tmp, ket, axes=([0, 2], [0, 1]))  # (a', w', k')


def advance_right(env: np.ndarray, bra: np.ndarray, w: np.ndarray,
                  ket: np.ndarray) -> np.ndarray:
    """Grow a right environment by one site (towards the left)."""
    tmp = np.tensordot(bra.conj(), env, axes=(2, 0))  # (l', dout, w, k)
    tmp = np.tensordot(w, tmp, axes=([1, 3], [1, 2]))  # (wl, din, l', k)
    out = np.tensordot(tmp, ket, axes=([1, 3], [1, 2]))  # (wl, l', l)
    return out.transpose(1, 0, 2)


def _two_site_matvec(le, w1, w2, re):
    def mv(x):
        t = np.tensordot(le, x, axes=(2, 0))  # (a, w, i1, i2, c)
        t = np.tensordot(t, w1, axes=([1, 2], [0, 2]))  # (a, i2, c, o1, w')
        t = np.tensordot(t, w2, axes=([4, 1], [0, 2]))  # (a, c, o1, o2, w'')
        return np.tensordot(t, re, axes=([1, 4], [2, 1]))  # (a, o1, o2, a'')
    return mv


def _one_site_matvec(le, w, re):
    def mv(x):
        t = np.tensordot(le, x, axes=(2, 0))  # (a, w, i, c)
        t = np.tensordot(t, w, axes=([1, 2], [0, 2]))  # (a, c, o, w')
        return np.tensordot(t, re, axes=([1, 3], [2, 1]))  # (a, o, a')
    return mv


def _ground_block(matvec, x0: np.ndarray):
    """Lowest eigenpair of the Hermitian effective block."""
    shape = x0.shape
    n = x0.size
    if n <= 192:
        mat = np.empty((n, n), dtype=complex)
        basis = np.eye(n)
        for i in range(n):
            mat[:, i] = matvec(basis[:, i].reshape(shape)).reshape(-1)
        evals, evecs = np.linalg.eigh((mat + mat.conj().T) / 2)
        return float(evals[0]), evecs[:, 0].reshape(shape)
    op = spla.LinearOperator(
        (n, n),
        matvec=lambda v: matvec(v.reshape(shape)).reshape(-1),
        dtype=complex,
    )
    evals, evecs = spla.eigsh(op, k=1, which="SA", v0=x0.reshape(-1),
                              maxiter=4000)
    return float(evals[0]), evecs[:, 0].reshape(shape)


@dataclass
class DmrgResult:
    state: MatrixProductState
    energy: float
    sweep_energies: list
    converged: bool
    discarded: list = field(default_factory=list)


def dmrg_ground_state(
    h_mpo,
    max_chi: int = 64,
    tol: float = 1e-10,
    max_sweeps: int = 40,
    cutoff: float = 1e-12,
    initial: MatrixProductState | None = None,
    seed: int = 3,
) -> DmrgResult:
    """Variational ground state; converged when the sweep energy settles.

    Non-convergence within max_sweeps returns the best state with the flag
    down rather than raising.
    """
    length = h_mpo.length
    d = h_mpo.local_dim
    if initial is None:
        rng = np.random.default_rng(seed)
        locals_ = rng.normal(size=(length, d)) + 1j * rng.normal(size=(length, d))
        state = MatrixProductState.from_product(list(locals_))
        state.normalize()
    else:
        state = initial.copy()
    state.canonicalize(0)
    ws = h_mpo.tensors

    re = [None] * (length + 1)
    re[length - 1] = np.ones((1, 1, 1), dtype=complex)
    for j in range(length - 1, 0, -1):
        re[j - 1] = advance_right(re[j], state.tensors[j], ws[j], state.tensors[j])
    le = [None] * (length + 1)
    le[0] = np.ones((1, 1, 1), dtype=complex)

    sweep_energies: list = []
    discarded: list = []
    energy = np.inf
    converged = False

    def split(theta, direction):
        chi_l, d1, d2, chi_r = theta.shape
        u, s, vh, dw = truncated_svd(
            theta.reshape(chi_l * d1, d2 * chi_r), cutoff, max_chi
        )
        discarded.append(dw)
        left = u.reshape(chi_l, d1, -1)
        right = vh.reshape(-1, d2, chi_r)
        if direction == "right":
            right = np.tensordot(np.diag(s), right, axes=(1, 0))
        else:
            left = np.tensordot(left, np.diag(s), axes=(2, 0))
        return left, right

    for _ in range(max_sweeps):
        for j in range(length - 1):
            theta = np.tensordot(state.tensors[j], state.tensors[j + 1], axes=(2, 0))
            e, theta = _ground_block(
                _two_site_matvec(le[j], ws[j], ws[j + 1], re[j + 1]), theta
            )
            state.tensors[j], state.tensors[j + 1] = split(theta, "right")
            state.center = j + 1
            le[j + 1] = advance_left(le[j], state.tensors[j], ws[j], state.tensors[j])
        for j in range(length - 2, -1, -1):
            theta = np.tensordot(state.tensors[j], state.tensors[j + 1], axes=(2, 0))
            e, theta = _ground_block(
                _two_site_matvec(le[j], ws[j], ws[j + 1], re[j + 1]), theta
            )
            state.tensors[j], state.tensors[j + 1] = split(theta, "left")
            state.center = j
            re[j] = advance_right(
                re[j + 1], state.tensors[j + 1], ws[j + 1], state.tensors[j + 1]
            )
        sweep_energies.append(e)
        if abs(energy - e) < tol:
            energy = e
            converged = True
            break
        energy = e
    state.normalize()
    return DmrgResult(
        state=state,
        energy=energy,
        sweep_energies=sweep_energies,
        converged=converged,
        discarded=discarded,
    )
