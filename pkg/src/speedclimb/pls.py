"""Penalized weighted least squares for crossed random-effects designs.

Solves, for a relative covariance factor Lambda(theta),

    [ L'Z'WZL + I   L'Z'WX ] [u]   [ L'Z'Wz ]
    [ X'WZL         X'WX   ] [b] = [ X'Wz   ]

The random-effects block A = L'Z'WZL + I is factored by block elimination.
Every observation touches exactly one level of each grouping factor, so the
rows/columns of the largest term form a block-diagonal matrix of k x k
blocks.  That term is eliminated first with batched k x k Cholesky factors;
the remaining terms form a small dense Schur complement.  For crossed
climber/event designs this keeps the dense part at the size of the event
block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .design import RandomBlock
from .errors import SingularSystem


class ThetaLayout:
    """Maps the flat theta vector to per-term lower-triangular factors.

    Each term contributes its lower triangle in column-major order, so a
    2 x 2 factor is stored as (T00, T10, T11).
    """

    def __init__(self, ks):
        self.ks = list(ks)
        self.slices = []
        start = 0
        for k in self.ks:
            m = k * (k + 1) // 2
            self.slices.append(slice(start, start + m))
            start += m
        self.size = start
        # lower triangle, column-major: (row, col) pairs per term
        self._tri = [tuple(reversed(np.triu_indices(k))) for k in self.ks]

    def factors(self, theta) -> list[np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        out = []
        for k, sl, (rows, cols) in zip(self.ks, self.slices, self._tri):
            T = np.zeros((k, k))
            T[rows, cols] = theta[sl]
            out.append(T)
        return out

    def from_factors(self, factors) -> np.ndarray:
        parts = []
        for T in factors:
            cols, rows = np.triu_indices(T.shape[0])
            parts.append(T[rows, cols])
        return np.concatenate(parts) if parts else np.zeros(0)

    def lower_bounds(self) -> np.ndarray:
        lb = []
        for k in self.ks:
            cols, rows = np.triu_indices(k)
            lb.extend(0.0 if r == c else -np.inf for r, c in zip(rows, cols))
        return np.array(lb)

    def start(self) -> np.ndarray:
        return self.from_factors([np.eye(k) for k in self.ks])

    def diagonal_mask(self) -> np.ndarray:
        return np.isfinite(self.lower_bounds())


def _left_T(M, T, n_levels):
    """Apply (I kron T)' from the left to the rows of M."""
    k = T.shape[0]
    shaped = M.reshape(n_levels, k, -1)
    return np.tensordot(T, shaped, axes=([0], [1])).transpose(1, 0, 2).reshape(M.shape)


def _right_T(M, T, n_levels):
    """Apply (I kron T) from the right to the columns of M."""
    k = T.shape[0]
    shaped = M.reshape(M.shape[0], n_levels, k)
    return np.tensordot(shaped, T, axes=([2], [0])).reshape(M.shape)


def _block_apply(F, B):
    """Multiply each k x k block F[l] into the matching k rows of B."""
    L, k, _ = F.shape
    shaped = B.reshape(L, k, -1)
    out = F[:, :, 0, None] * shaped[:, None, 0, :]
    for j in range(1, k):
        out += F[:, :, j, None] * shaped[:, None, j, :]
    return out.reshape(B.shape)


def _cross(bi: RandomBlock, bj: RandomBlock, w) -> np.ndarray:
    """Dense Zi' W Zj, accumulated from level codes (each row hits one level per term)."""
    out = np.zeros(bi.q * bj.q)
    for c in range(bi.n_coef):
        rows = (bi.codes * bi.n_coef + c) * bj.q
        for d in range(bj.n_coef):
            out += np.bincount(rows + bj.codes * bj.n_coef + d, weights=w * bi.values[:, c] * bj.values[:, d],
                               minlength=out.size)
    return out.reshape(bi.q, bj.q)


def _zt_times(b: RandomBlock, M) -> np.ndarray:
    """Zb' M for a dense n x m matrix M."""
    out = np.empty((b.q, M.shape[1]))
    for c in range(b.n_coef):
        idx = b.codes * b.n_coef + c
        for j in range(M.shape[1]):
            out[c::b.n_coef, j] = np.bincount(idx, weights=b.values[:, c] * M[:, j], minlength=b.q)[c::b.n_coef]
    return out


@dataclass
class Solution:
    beta: np.ndarray
    u: np.ndarray  # spherical random effects, spec column order
    b: np.ndarray  # Lambda u, spec column order
    logdet_A: float
    logdet_RX: float  # log |X'V^{-1}X|-type term (log of the squared RX diagonal)
    pwrss: float  # penalized weighted residual sum of squares
    wrss: float
    RXtRX: np.ndarray  # Schur complement for the fixed effects
    fitted: np.ndarray  # X beta + Z b


class PenalizedSystem:
    """Cross-products of one (Z, X, z, w) problem, solvable at any theta."""

    def __init__(self, blocks: list[RandomBlock], Z, X, z, weights=None):
        self.blocks = blocks
        self.Z = sps.csc_matrix(Z)
        self.X = np.asarray(X, dtype=float)
        self.z = np.asarray(z, dtype=float)
        n = self.X.shape[0]
        self.n = n
        self.p = self.X.shape[1]
        self.w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        self.layout = ThetaLayout(b.n_coef for b in blocks)

        Xz = np.column_stack([self.X, self.z])
        wXz = Xz * self.w[:, None]
        self.XzWXz = Xz.T @ wXz

        if not blocks:
            self.lead = None
            return
        self.lead = int(np.argmax([b.q for b in blocks]))
        self.rest = [i for i in range(len(blocks)) if i != self.lead]
        lead = blocks[self.lead]
        rest = [blocks[i] for i in self.rest]
        self.q_rest = sum(b.q for b in rest)

        k = lead.n_coef
        Gaa = np.empty((lead.n_levels, k, k))
        for c in range(k):
            for d in range(c, k):
                s = np.bincount(lead.codes, weights=self.w * lead.values[:, c] * lead.values[:, d], minlength=lead.n_levels)
                Gaa[:, c, d] = s
                Gaa[:, d, c] = s
        self.Gaa = Gaa
        self.Gar = np.hstack([_cross(lead, b, self.w) for b in rest]) if rest else np.zeros((lead.q, 0))
        self.Grr = np.block([[_cross(bi, bj, self.w) for bj in rest] for bi in rest]) if rest else np.zeros((0, 0))
        self.ZaWXz = _zt_times(lead, wXz)
        self.ZrWXz = np.vstack([_zt_times(b, wXz) for b in rest]) if rest else np.zeros((0, self.p + 1))

    def _rest_lambda_right(self, M, factors):
        out = np.empty_like(M)
        start = 0
        for i in self.rest:
            b = self.blocks[i]
            sl = slice(start, start + b.q)
            out[:, sl] = _right_T(M[:, sl], factors[i], b.n_levels)
            start += b.q
        return out

    def _rest_lambda_left(self, M, factors):
        return self._rest_lambda_right(np.ascontiguousarray(M.T), factors).T

    def lambda_times(self, u, factors) -> np.ndarray:
        b = np.empty_like(u)
        for blk, T in zip(self.blocks, factors):
            sl = slice(blk.offset, blk.offset + blk.q)
            b[sl] = (u[sl].reshape(blk.n_levels, blk.n_coef) @ T.T).ravel()
        return b

    def solve(self, theta) -> Solution:
        p = self.p
        factors = self.layout.factors(theta)
        if self.lead is None:
            M = self.XzWXz.copy()
            logdet_A = 0.0
            V = None
        else:
            lead = self.blocks[self.lead]
            Ta = factors[self.lead]
            L = lead.n_levels
            k = lead.n_coef
            Aaa = np.matmul(np.matmul(Ta.T, self.Gaa), Ta) + np.eye(k)
            try:
                Ca = np.linalg.cholesky(Aaa)
            except np.linalg.LinAlgError as exc:
                raise SingularSystem(str(exc)) from None
            logdet_A = 2.0 * np.log(np.diagonal(Ca, axis1=1, axis2=2)).sum()
            Ci = np.linalg.inv(Ca)
            CiT = np.swapaxes(Ci, 1, 2)

            Ba = _left_T(self.ZaWXz, Ta, L)
            ga = _block_apply(Ci, Ba)
            if self.q_rest:
                Aar = self._rest_lambda_right(_left_T(self.Gar, Ta, L), factors)
                Arr = self._rest_lambda_right(self._rest_lambda_left(self.Grr, factors), factors)
                Arr[np.diag_indices_from(Arr)] += 1.0
                Ga = _block_apply(Ci, Aar)
                S = Arr - Ga.T @ Ga
                try:
                    cS = sla.cho_factor(S, lower=True, check_finite=False)
                except np.linalg.LinAlgError as exc:
                    raise SingularSystem(str(exc)) from None
                logdet_A += 2.0 * np.log(np.diag(cS[0])).sum()
                Br = self._rest_lambda_left(self.ZrWXz, factors)
                Vr = sla.cho_solve(cS, Br - Ga.T @ ga, check_finite=False)
                Va = _block_apply(CiT, ga - Ga @ Vr)
                M = self.XzWXz - Ba.T @ Va - Br.T @ Vr
                V = (Va, Vr)
            else:
                M = self.XzWXz - ga.T @ ga
                V = (_block_apply(CiT, ga), np.zeros((0, p + 1)))

        RXtRX = M[:p, :p]
        if p:
            try:
                cX = sla.cho_factor(RXtRX, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise SingularSystem(f"fixed-effect system is singular: {exc}") from None
            diag = np.diag(cX[0])
            if np.any(diag <= 1e-10 * max(1.0, np.sqrt(np.max(np.diag(RXtRX))))):
                raise SingularSystem("fixed-effect system is rank deficient")
            beta = sla.cho_solve(cX, M[:p, p], check_finite=False)
            logdet_RX = 2.0 * np.log(diag).sum()
        else:
            beta = np.zeros(0)
            logdet_RX = 0.0

        q = self.Z.shape[1]
        u = np.zeros(q)
        if V is not None:
            Va, Vr = V
            ua = Va[:, p] - Va[:, :p] @ beta
            ur = Vr[:, p] - Vr[:, :p] @ beta
            lead = self.blocks[self.lead]
            u[lead.offset:lead.offset + lead.q] = ua
            start = 0
            for i in self.rest:
                blk = self.blocks[i]
                u[blk.offset:blk.offset + blk.q] = ur[start:start + blk.q]
                start += blk.q
        b = self.lambda_times(u, factors)
        fitted = self.X @ beta + (self.Z @ b if q else 0.0)
        resid = self.z - fitted
        wrss = float(np.dot(self.w * resid, resid))
        pwrss = wrss + float(u @ u)
        return Solution(beta, u, b, float(logdet_A), float(logdet_RX), pwrss, wrss, RXtRX, fitted)
