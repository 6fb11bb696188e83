"""Matrix product states on open chains.

Site tensors are complex with index order (left bond, physical, right bond);
boundary bonds have dimension one.  A state may carry an orthogonality
center: tensors left of it are left-isometries, tensors right of it are
right-isometries, and the center tensor carries the norm.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

CHECKPOINT_VERSION = 1


def truncated_svd(m: np.ndarray, cutoff: float = 0.0, max_chi: int | None = None):
    """SVD with cumulative-weight truncation.

    Keeps the smallest leading block whose discarded tail satisfies
    sum(s_dropped^2) <= cutoff * sum(s^2), then caps at max_chi.  Returns
    (u, s, vh, discarded_fraction).
    """
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    total = float(np.sum(s**2))
    if total == 0.0:
        return u[:, :1], s[:1], vh[:1], 0.0
    keep = s.size
    if cutoff > 0.0:
        tail = np.cumsum(s[::-1] ** 2)[::-1]  # tail[i] = sum_{j>=i} s_j^2
        allowed = np.nonzero(tail <= cutoff * total)[0]
        if allowed.size:
            keep = max(1, int(allowed[0]))
    if max_chi is not None:
        keep = min(keep, max_chi)
    discarded = float(np.sum(s[keep:] ** 2) / total)
    return u[:, :keep], s[:keep], vh[:keep], discarded


class MatrixProductState:
    def __init__(self, tensors, center: int | None = None):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        self.center = center
        self.truncation_log: list = []

    # -- structure ---------------------------------------------------------

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def local_dims(self) -> list:
        return [t.shape[1] for t in self.tensors]

    def copy(self) -> "MatrixProductState":
        out = MatrixProductState([t.copy() for t in self.tensors], self.center)
        out.truncation_log = list(self.truncation_log)
        return out

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_product(cls, local_states) -> "MatrixProductState":
        tensors = [np.asarray(v, dtype=complex).reshape(1, -1, 1) for v in local_states]
        return cls(tensors, center=0)

    @classmethod
    def from_dense(
        cls,
        vec: np.ndarray,
        length: int,
        d: int = 3,
        cutoff: float = 0.0,
        max_chi: int | None = None,
    ) -> "MatrixProductState":
        cur = np.asarray(vec, dtype=complex).reshape(1, -1)
        tensors = []
        chi = 1
        for _ in range(length - 1):
            cur = cur.reshape(chi * d, -1)
            u, s, vh, _ = truncated_svd(cur, cutoff, max_chi)
            tensors.append(u.reshape(chi, d, -1))
            cur = s[:, None] * vh
            chi = s.size
        tensors.append(cur.reshape(chi, d, 1))
        return cls(tensors, center=length - 1)

    def to_dense(self) -> np.ndarray:
        cur = self.tensors[0]
        for t in self.tensors[1:]:
            cur = np.tensordot(cur, t, axes=(cur.ndim - 1, 0))
        return cur.reshape(-1)

    # -- canonical form ----------------------------------------------------

    def _left_step(self, j: int) -> None:
        t = self.tensors[j]
        chi_l, d, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l * d, chi_r))
        self.tensors[j] = q.reshape(chi_l, d, -1)
        self.tensors[j + 1] = np.tensordot(r, self.tensors[j + 1], axes=(1, 0))

    def _right_step(self, j: int) -> None:
        t = self.tensors[j]
        chi_l, d, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l, d * chi_r).T)
        self.tensors[j] = q.T.reshape(-1, d, chi_r)
        self.tensors[j - 1] = np.tensordot(self.tensors[j - 1], r.T, axes=(2, 0))

    def canonicalize(self, center: int = 0) -> None:
        for j in range(center):
            self._left_step(j)
        for j in range(self.length - 1, center, -1):
            self._right_step(j)
        self.center = center

    def move_center(self, j: int) -> None:
        if self.center is None:
            self.canonicalize(j)
            return
        while self.center < j:
            self._left_step(self.center)
            self.center += 1
        while self.center > j:
            self._right_step(self.center)
            self.center -= 1

    # -- norm and overlaps -------------------------------------------------

    def norm(self) -> float:
        if self.center is not None:
            return float(np.linalg.norm(self.tensors[self.center]))
        return float(np.sqrt(np.real(self.overlap(self))))

    def normalize(self) -> None:
        if self.center is None:
            self.canonicalize(0)
        self.tensors[self.center] /= np.linalg.norm(self.tensors[self.center])

    def overlap(self, other: "MatrixProductState") -> complex:
        """<self|other> over matching chains."""
        env = np.ones((1, 1), dtype=complex)
        for a, b in zip(self.tensors, other.tensors):
            tmp = np.tensordot(env, a.conj(), axes=(0, 0))  # (bk, d, a')
            env = np.tensordot(tmp, b, axes=([0, 1], [0, 1]))
        return complex(env[0, 0])

    def scale(self, c: complex) -> None:
        j = self.center if self.center is not None else 0
        self.tensors[j] = self.tensors[j] * c

    def add(self, other: "MatrixProductState", c: complex = 1.0) -> "MatrixProductState":
        """self + c * other by bond-wise direct sum."""
        if self.length != other.length:
            raise ValueError("length mismatch")
        if self.length == 1:
            return MatrixProductState(
                [self.tensors[0] + c * other.tensors[0]], center=0
            )
        out = []
        for j, (a, b) in enumerate(zip(self.tensors, other.tensors)):
            b = b * c if j == 0 else b
            al, d, ar = a.shape
            bl, _, br = b.shape
            if j == 0:
                t = np.concatenate([a, b], axis=2)
            elif j == self.length - 1:
                t = np.concatenate([a, b], axis=0)
            else:
                t = np.zeros((al + bl, d, ar + br), dtype=complex)
                t[:al, :, :ar] = a
                t[al:, :, ar:] = b
            out.append(t)
        return MatrixProductState(out, center=None)

    # -- compression -------------------------------------------------------

    def compress(self, cutoff: float = 1e-10, max_chi: int | None = None) -> float:
        """Sweep truncation; returns the total discarded weight fraction."""
        self.canonicalize(self.length - 1)
        total = 0.0
        for j in range(self.length - 1, 0, -1):
            t = self.tensors[j]
            chi_l, d, chi_r = t.shape
            u, s, vh, dw = truncated_svd(t.reshape(chi_l, d * chi_r), cutoff, max_chi)
            total += dw
            self.tensors[j] = vh.reshape(-1, d, chi_r)
            carry = u * s[None, :]
            self.tensors[j - 1] = np.tensordot(self.tensors[j - 1], carry, axes=(2, 0))
        self.center = 0
        self.truncation_log.append(total)
        return total

    # -- observables -------------------------------------------------------

    def expectation(self, op) -> complex:
        """<self| op |self> for an operator chain with tensors (wl, out, in, wr)."""
        env = np.ones((1, 1, 1), dtype=complex)
        for a, w in zip(self.tensors, op.tensors):
            tmp = np.tensordot(env, a.conj(), axes=(0, 0))  # (w, bk, dout, a')
            tmp = np.tensordot(tmp, w, axes=([0, 2], [0, 1]))  # (bk, a', din, w')
            env = np.tensordot(tmp, a, axes=([0, 2], [0, 1]))  # (a', w', b')
        return complex(env[0, 0, 0])

    def _window_theta(self, window) -> np.ndarray:
        lo, hi = window[0], window[-1]
        if list(window) != list(range(lo, hi + 1)):
            raise ValueError("window must be contiguous")
        if self.center is None or not lo <= self.center <= hi:
            self.move_center(lo)
        theta = self.tensors[lo]
        for j in range(lo + 1, hi + 1):
            theta = np.tensordot(theta, self.tensors[j], axes=(theta.ndim - 1, 0))
        chi_l = theta.shape[0]
        chi_r = theta.shape[-1]
        return theta.reshape(chi_l, -1, chi_r)

    def local_expectation(self, mat: np.ndarray, window) -> complex:
        theta = self._window_theta(window)
        return complex(np.einsum("aib,ij,ajb->", theta.conj(), mat, theta))

    def reduced_density_matrix(self, window) -> np.ndarray:
        theta = self._window_theta(window)
        rho = np.tensordot(theta, theta.conj(), axes=([0, 2], [0, 2]))
        return rho / np.trace(rho).real

    def schmidt_values(self, cut: int) -> np.ndarray:
        """Schmidt spectrum of the bipartition [0, cut) | [cut, L)."""
        if not 1 <= cut <= self.length - 1:
            raise ValueError("cut must be an interior bond")
        self.move_center(cut)
        t = self.tensors[cut]
        return np.linalg.svd(t.reshape(t.shape[0], -1), compute_uv=False)

    def entanglement_entropy(self, cut: int) -> float:
        s = self.schmidt_values(cut)
        p = s**2
        p = p[p > 1e-30]
        p = p / p.sum()
        return float(-np.sum(p * np.log(p)))


def savez_deterministic(path: str, **arrays):
    """npz with pinned zip timestamps so equal arrays give equal bytes."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arrays[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def save_state(path: str, state: MatrixProductState, metadata: dict | None = None):
    """Versioned checkpoint: site tensors plus a JSON metadata blob."""
    payload = {
        f"tensor_{j}": t for j, t in enumerate(state.tensors)
    }
    header = {
        "version": CHECKPOINT_VERSION,
        "length": state.length,
        "center": state.center,
        "metadata": metadata or {},
    }
    payload["header"] = np.frombuffer(
        json.dumps(header).encode("utf-8"), dtype=np.uint8
    )
    savez_deterministic(path, **payload)


def load_state(path: str):
    """Inverse of save_state; returns (state, metadata)."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        tensors = [data[f"tensor_{j}"] for j in range(header["length"])]
    state = MatrixProductState(tensors, center=header["center"])
    return state, header["metadata"]
