"""Compiled Lindblad right-hand side exploiting the ladder-operator sparsity.

The master-equation generator is evaluated as ``X + X^dag`` with
``X = -i H_eff rho + 1/2 sum_mu gamma_mu O rho O^dag``, which is exact for
Hermitian rho and keeps the result Hermitian to the last bit.  Every jump
operator here has at most one nonzero per row, so ``O rho O^dag`` reduces to
a weighted gather.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit


@njit(cache=True)
def _lindblad_apply(rho, s, hp, hi, hv, ap, ai, av, perm, w, work, out):
    dim = rho.shape[0]
    for i in range(dim):
        for j in range(dim):
            work[i, j] = 0j
        for q in range(hp[i], hp[i + 1]):
            c = -1j * hv[q]
            k = hi[q]
            for j in range(dim):
                work[i, j] += c * rho[k, j]
        if s != 0.0:
            for q in range(ap[i], ap[i + 1]):
                c = -1j * s * av[q]
                k = ai[q]
                for j in range(dim):
                    work[i, j] += c * rho[k, j]
        for m in range(perm.shape[0]):
            pi = perm[m, i]
            if pi < 0:
                continue
            wi = 0.5 * w[m, i]
            for j in range(dim):
                pj = perm[m, j]
                if pj >= 0:
                    work[i, j] += wi * w[m, j] * rho[pi, pj]
    for i in range(dim):
        for j in range(i, dim):
            v = work[i, j] + np.conj(work[j, i])
            out[i, j] = v
            out[j, i] = np.conj(v)
    return out


@njit(cache=True)
def _rk4_stage(rhos, k, h, out):
    """out = h k + rhos, elementwise."""
    for b in range(rhos.shape[0]):
        for i in range(rhos.shape[1]):
            for j in range(rhos.shape[2]):
                out[b, i, j] = k[b, i, j] * h + rhos[b, i, j]


@njit(cache=True)
def _rk4_combine(rhos, k1, k2, k3, k4, dt, out):
    """out = rhos + dt/6 (k1 + 2 k2 + 2 k3 + k4), summed in a fixed order."""
    h = dt / 6.0
    for b in range(rhos.shape[0]):
        for i in range(rhos.shape[1]):
            for j in range(rhos.shape[2]):
                v = (k2[b, i, j] + k3[b, i, j]) * 2.0
                v = (v + k1[b, i, j]) + k4[b, i, j]
                out[b, i, j] = rhos[b, i, j] + v * h


@njit(cache=True)
def _expect_sparse(rho, rows, cols, vals):
    acc = 0j
    for q in range(rows.shape[0]):
        acc += vals[q] * rho[cols[q], rows[q]]
    return acc


@njit(cache=True)
def _heff_apply(v, s, hp, hi, hv, ap, ai, av, out):
    """out = -i (H_eff0 + s h_ac) v."""
    for i in range(v.shape[0]):
        acc = 0j
        for q in range(hp[i], hp[i + 1]):
            acc += hv[q] * v[hi[q]]
        if s != 0.0:
            for q in range(ap[i], ap[i + 1]):
                acc += s * av[q] * v[ai[q]]
        out[i] = -1j * acc


@njit(cache=True)
def _qt_step(psis, s, dt, hp, hi, hv, ap, ai, av, perm, w, decay_diag, r, use_rk4, max_dp,
             k1, k2, k3, k4, tmp, out):
    """Advance every row of ``psis`` by one first-order jump step.

    ``decay_diag[m]`` is gamma_m times the diagonal of O_m^dag O_m.  Returns -1 on
    success, otherwise the index of a trajectory whose jump probability
    exceeded ``max_dp`` (``psis`` is then left untouched).
    """
    n, dim = psis.shape
    n_ch = perm.shape[0]
    dps = np.zeros((n, n_ch))
    for j in range(n):
        total = 0.0
        for m in range(n_ch):
            acc = 0.0
            for i in range(dim):
                z = psis[j, i]
                acc += decay_diag[m, i] * (z.real * z.real + z.imag * z.imag)
            dps[j, m] = dt * acc
            total += dps[j, m]
        if total > max_dp:
            return j
    for j in range(n):
        psi = psis[j]
        total = 0.0
        for m in range(n_ch):
            total += dps[j, m]
        if r[j] < total:
            cum = 0.0
            mu = n_ch - 1
            for m in range(n_ch):
                cum += dps[j, m]
                if r[j] < cum:
                    mu = m
                    break
            for i in range(dim):
                pi = perm[mu, i]
                out[i] = w[mu, i] * psi[pi] if pi >= 0 else 0j
        elif use_rk4:
            _heff_apply(psi, s, hp, hi, hv, ap, ai, av, k1)
            for i in range(dim):
                tmp[i] = psi[i] + 0.5 * dt * k1[i]
            _heff_apply(tmp, s, hp, hi, hv, ap, ai, av, k2)
            for i in range(dim):
                tmp[i] = psi[i] + 0.5 * dt * k2[i]
            _heff_apply(tmp, s, hp, hi, hv, ap, ai, av, k3)
            for i in range(dim):
                tmp[i] = psi[i] + dt * k3[i]
            _heff_apply(tmp, s, hp, hi, hv, ap, ai, av, k4)
            for i in range(dim):
                out[i] = psi[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            _heff_apply(psi, s, hp, hi, hv, ap, ai, av, k1)
            for i in range(dim):
                out[i] = psi[i] + dt * k1[i]
        norm = 0.0
        for i in range(dim):
            norm += out[i].real * out[i].real + out[i].imag * out[i].imag
        inv = 1.0 / np.sqrt(norm)
        for i in range(dim):
            psis[j, i] = out[i] * inv
    return -1


@njit(cache=True)
def _ket_expect_mean(psis, rows, cols, vals):
    """Mean over rows of Re <psi|O|psi> for O given in COO form."""
    n = psis.shape[0]
    total = 0.0
    for j in range(n):
        acc = 0j
        for q in range(rows.shape[0]):
            acc += np.conj(psis[j, rows[q]]) * vals[q] * psis[j, cols[q]]
        total += acc.real
    return total / n


def _csr(op) -> sp.csr_matrix:
    m = sp.csr_matrix(op)
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(frozen=True, eq=False)
class LiouvillianStructure:
    """Sparse pieces of the generator: fixed H_eff, the coupling term, jumps."""

    heff_ptr: np.ndarray
    heff_idx: np.ndarray
    heff_val: np.ndarray
    hac_ptr: np.ndarray
    hac_idx: np.ndarray
    hac_val: np.ndarray
    jump_perm: np.ndarray
    jump_weight: np.ndarray
    corr_rows: np.ndarray
    corr_cols: np.ndarray
    corr_vals: np.ndarray

    @classmethod
    def from_dense(cls, h_fixed, h_ac, jumps, rates, corr_op) -> "LiouvillianStructure":
        dim = h_fixed.shape[0]
        decay = sum(g * (o.conj().T @ o) for g, o in zip(rates, jumps))
        heff = _csr(h_fixed - 0.5j * decay)
        hac = _csr(h_ac)
        perm = -np.ones((len(jumps), dim), dtype=np.int64)
        weight = np.zeros((len(jumps), dim))
        for m, (g, o) in enumerate(zip(rates, jumps)):
            oc = _csr(o)
            counts = np.diff(oc.indptr)
            if counts.max() > 1 or np.any(oc.data.imag != 0):
                raise ValueError("jump operators must be real with at most one nonzero per row")
            rows = np.nonzero(counts)[0]
            perm[m, rows] = oc.indices
            weight[m, rows] = np.sqrt(g) * oc.data.real
        corr = _csr(corr_op).tocoo()
        return cls(
            heff_ptr=heff.indptr.astype(np.int64),
            heff_idx=heff.indices.astype(np.int64),
            heff_val=heff.data.astype(complex),
            hac_ptr=hac.indptr.astype(np.int64),
            hac_idx=hac.indices.astype(np.int64),
            hac_val=hac.data.astype(complex),
            jump_perm=perm,
            jump_weight=weight,
            corr_rows=corr.row.astype(np.int64),
            corr_cols=corr.col.astype(np.int64),
            corr_vals=corr.data.astype(complex),
        )

    def apply(self, rho: np.ndarray, s: float, out=None, work=None) -> np.ndarray:
        """Lindblad generator at coupling scale ``s = g_ac sin(2x)``."""
        if out is None:
            out = np.empty_like(rho)
        if work is None:
            work = np.empty_like(rho)
        return _lindblad_apply(
            rho, float(s),
            self.heff_ptr, self.heff_idx, self.heff_val,
            self.hac_ptr, self.hac_idx, self.hac_val,
            self.jump_perm, self.jump_weight, work, out,
        )

    def corr(self, rho: np.ndarray) -> float:
        """Re Tr(a^dag sigma^- rho)."""
        return _expect_sparse(rho, self.corr_rows, self.corr_cols, self.corr_vals).real
