"""Tensor-train form of operators on qutrit chains.

Site tensors follow the index order (left bond, out, in, right bond); the
boundary bonds of an open chain have dimension one.  Hamiltonians built from
translated local terms become finite-state automata: a walker is either
waiting to start a term, inside one (tracking the term's own tensor-train
rank), or finished; the assembled operator is exact, no fitting involved.
"""

from __future__ import annotations

import numpy as np


def dense_to_site_tensors(
    op: np.ndarray, width: int, d: int = 3, cutoff: float = 1e-14
) -> list:
    """Factorize a dense operator on `width` sites into a site-tensor chain.

    Sequential bipartite SVDs left to right; singular values below
    cutoff * sigma_max are dropped, so the recontraction is exact to machine
    precision for the sizes used here.
    """
    if op.shape != (d**width, d**width):
        raise ValueError(f"operator shape {op.shape} does not match width {width}")
    m = op.reshape((d,) * (2 * width))
    # group (out_j, in_j) per site: (o1, i1, o2, i2, ...)
    perm = [ax for j in range(width) for ax in (j, width + j)]
    cur = m.transpose(perm).reshape(1, -1)
    tensors = []
    chi = 1
    for _ in range(width - 1):
        cur = cur.reshape(chi * d * d, -1)
        u, s, vh = np.linalg.svd(cur, full_matrices=False)
        keep = s > cutoff * s[0] if s[0] > 0 else np.arange(s.size) < 1
        u, s, vh = u[:, keep], s[keep], vh[keep]
        tensors.append(u.reshape(chi, d, d, -1))
        cur = s[:, None] * vh
        chi = s.size
    tensors.append(cur.reshape(chi, d, d, 1))
    return tensors


def site_tensors_to_dense(tensors: list) -> np.ndarray:
    """Recontract a site-tensor chain back into its dense matrix."""
    res = tensors[0]
    for t in tensors[1:]:
        res = np.tensordot(res, t, axes=(res.ndim - 1, 0))
    res = res[0, ..., 0]
    width = res.ndim // 2
    outs = list(range(0, 2 * width, 2))
    ins = list(range(1, 2 * width, 2))
    d = res.shape[0]
    return res.transpose(outs + ins).reshape(d**width, d**width)


class MatrixProductOperator:
    def __init__(self, tensors):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list:
        return [t.shape[3] for t in self.tensors[:-1]]

    @property
    def local_dim(self) -> int:
        return self.tensors[0].shape[1]

    def copy(self) -> "MatrixProductOperator":
        return MatrixProductOperator([t.copy() for t in self.tensors])

    @classmethod
    def identity(cls, length: int, d: int = 3) -> "MatrixProductOperator":
        eye = np.eye(d, dtype=complex).reshape(1, d, d, 1)
        return cls([eye.copy() for _ in range(length)])

    @classmethod
    def from_dense(
        cls, op: np.ndarray, length: int, d: int = 3, cutoff: float = 1e-14
    ) -> "MatrixProductOperator":
        return cls(dense_to_site_tensors(op, length, d, cutoff))

    @classmethod
    def from_dense_term(
        cls, mat: np.ndarray, sites, length: int, d: int = 3, cutoff: float = 1e-14
    ) -> "MatrixProductOperator":
        """One local term embedded in an identity chain."""
        sites = list(sites)
        if sites != list(range(sites[0], sites[-1] + 1)):
            raise ValueError("term support must be contiguous")
        if sites[0] < 0 or sites[-1] >= length:
            raise ValueError("term support exceeds the lattice")
        inner = dense_to_site_tensors(mat, len(sites), d, cutoff)
        eye = np.eye(d, dtype=complex).reshape(1, d, d, 1)
        tensors = [eye.copy() for _ in range(length)]
        for j, t in zip(sites, inner):
            tensors[j] = t
        return cls(tensors)

    @classmethod
    def from_local_hamiltonian(cls, local_ham, cutoff: float = 1e-12):
        """Exact automaton MPO for a sum of contiguous local terms (open chains)."""
        if local_ham.boundary != "OBC":
            raise ValueError("automaton construction requires an open chain")
        length = local_ham.length
        d = 3
        terms = []
        fac_cache: dict = {}
        for sites, mat in local_ham.terms:
            sites = list(sites)
            if sites != list(range(sites[0], sites[-1] + 1)):
                raise ValueError("wrapped terms cannot appear on an open chain")
            key = (len(sites), mat.tobytes())
            if key not in fac_cache:
                fac_cache[key] = (
                    dense_to_site_tensors(np.asarray(mat, dtype=complex),
                                          len(sites), d, cutoff)
                    if len(sites) > 1
                    else None
                )
            terms.append((sites[0], sites[-1], np.asarray(mat, dtype=complex),
                          fac_cache[key]))

        # bond registries: state "R" (no term yet), "F" (term completed), and
        # (term id, p) while inside term t between its sites p and p+1
        registries = []
        for b in range(length - 1):
            reg = {"R": 0}
            pos = 1
            for t, (s, e, _, fac) in enumerate(terms):
                if s <= b < e:
                    p = b - s
                    reg[(t, p)] = pos
                    pos += fac[p].shape[3]
            reg["F"] = pos
            registries.append(reg)
        left = [{"R": 0}] + registries
        right = registries + [{"F": 0}]

        tensors = []
        for j in range(length):
            lreg, rreg = left[j], right[j]
            dl = 1 if j == 0 else lreg["F"] + 1
            dr = rreg["F"] + 1
            w = np.zeros((dl, d, d, dr), dtype=complex)
            eye = np.eye(d)
            if "R" in rreg:
                w[lreg["R"], :, :, rreg["R"]] = eye
            if "F" in lreg:
                w[lreg["F"], :, :, rreg["F"]] = eye
            for t, (s, e, mat, fac) in enumerate(terms):
                if s == e == j:
                    w[lreg["R"], :, :, rreg["F"]] += mat
                    continue
                if s == j:
                    g = fac[0]  # (1, d, d, r)
                    sl = rreg[(t, 0)]
                    w[lreg["R"], :, :, sl : sl + g.shape[3]] += g[0]
                elif s < j < e:
                    g = fac[j - s]
                    si = lreg[(t, j - s - 1)]
                    so = rreg[(t, j - s)]
                    w[si : si + g.shape[0], :, :, so : so + g.shape[3]] += g
                elif e == j:
                    g = fac[-1]  # (r, d, d, 1)
                    si = lreg[(t, j - s - 1)]
                    w[si : si + g.shape[0], :, :, rreg["F"]] += g[..., 0]
            tensors.append(w)
        return cls(tensors)

    def to_dense(self) -> np.ndarray:
        return site_tensors_to_dense(self.tensors)

    def scaled(self, c: complex) -> "MatrixProductOperator":
        out = self.copy()
        out.tensors[0] = out.tensors[0] * c
        return out

    def add(self, other: "MatrixProductOperator") -> "MatrixProductOperator":
        if self.length != other.length:
            raise ValueError("length mismatch")
        if self.length == 1:
            return MatrixProductOperator([self.tensors[0] + other.tensors[0]])
        out = []
        for j, (a, b) in enumerate(zip(self.tensors, other.tensors)):
            al, do, di, ar = a.shape
            bl, _, _, br = b.shape
            if j == 0:
                t = np.concatenate([a, b], axis=3)
            elif j == self.length - 1:
                t = np.concatenate([a, b], axis=0)
            else:
                t = np.zeros((al + bl, do, di, ar + br), dtype=complex)
                t[:al, :, :, :ar] = a
                t[al:, :, :, ar:] = b
            out.append(t)
        return MatrixProductOperator(out)

    def compress(self, cutoff: float = 1e-14, max_chi: int | None = None) -> float:
        """Truncate bonds, treating the operator as a state of doubled sites."""
        from .mps import MatrixProductState

        d = self.local_dim
        flat = [t.reshape(t.shape[0], d * d, t.shape[3]) for t in self.tensors]
        carrier = MatrixProductState(flat)
        dw = carrier.compress(cutoff=cutoff, max_chi=max_chi)
        self.tensors = [
            t.reshape(t.shape[0], d, d, t.shape[2]) for t in carrier.tensors
        ]
        return dw


def apply_mpo(op: MatrixProductOperator, state, cutoff: float = 1e-10,
              max_chi: int | None = None):
    """op|state> as a new compressed state; returns (state, discarded weight)."""
    from .mps import MatrixProductState

    if op.length != state.length:
        raise ValueError("length mismatch")
    tensors = []
    for w, t in zip(op.tensors, state.tensors):
        # (wl, o, i, wr) x (l, i, r) -> (wl*l, o, wr*r)
        tmp = np.tensordot(w, t, axes=(2, 1))  # (wl, o, wr, l, r)
        tmp = tmp.transpose(0, 3, 1, 2, 4)
        tensors.append(
            tmp.reshape(
                w.shape[0] * t.shape[0], w.shape[1], w.shape[3] * t.shape[2]
            )
        )
    out = MatrixProductState(tensors)
    dw = out.compress(cutoff=cutoff, max_chi=max_chi)
    return out, dw


def mpo_sum_compress(ops, coefficients, cutoff: float = 1e-14,
                     max_chi: int | None = None) -> MatrixProductOperator:
    """sum_n c_n op_n with a compression after every pairwise addition."""
    ops = list(ops)
    coefficients = list(coefficients)
    if len(ops) != len(coefficients) or not ops:
        raise ValueError("need one coefficient per operator")
    acc = ops[0].scaled(coefficients[0])
    for op, c in zip(ops[1:], coefficients[1:]):
        acc = acc.add(op.scaled(c))
        acc.compress(cutoff=cutoff, max_chi=max_chi)
    return acc
