"""Quasi-static relaxation of the spring-grid membrane.

The membrane is a height field: nodes keep their in-plane (pre-stretched)
positions and move along Z only. Each edge spring stores energy
``Y * A * psi(s)`` with ``s`` the edge slope and

    psi(s) = eps**(1+m) / (1+m) + t0 * eps,    eps = sqrt(1 + s**2) - 1,

which is convex in ``s``, so the total energy is convex in the nodal
displacements. Unilateral contact with an obstacle height field uses a
stiff per-node penalty whose force may be capped (plastic yield of dough).
Minimisation is a damped Newton iteration with Armijo backtracking.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConvergenceError
from .sheet import MembraneSheet

RESIDUAL_TOL = 1e-6  # N, max residual force per node
CONTACT_TOL = 0.01  # mm, max admissible penetration
MAX_ITER = 200
PENALTY_RATIO = 2.0e3  # penalty stiffness in units of the sheet stiffness Y
YIELD_RATIO = 2.0  # tanh(2) = 0.964 of the cap


def _psi(s, m, t0):
    q = np.sqrt(1.0 + s * s)
    eps = s * s / (q + 1.0)
    em = eps**m
    e = eps * em / (1.0 + m) + t0 * eps
    d1 = (em + t0) * (s / q)
    d2 = m * em * (q + 1.0) / (q * q) + (em + t0) / (q * q * q)
    return e, d1, d2


class MembraneOperator:
    """Discrete energy of one sheet, optionally reduced by mirror symmetry.

    With ``symmetric=True`` the unknowns are one quadrant of the free nodes
    and every full-grid node maps to its mirror representative; energies
    are still summed over the full grid so results are exact for loads
    that are mirror symmetric about both sheet axes.
    """

    def __init__(self, sheet: MembraneSheet, symmetric=False):
        self.sheet = sheet
        self.symmetric = symmetric
        sp_ = sheet.springs
        ni, nj = sheet.shape
        h_i, h_j = sheet.spacing
        n = ni * nj
        idx = np.arange(n).reshape(ni, nj)

        heads, tails, lengths, areas, pre = [], [], [], [], []

        def add(a, b, h, area, t0):
            heads.append(b.ravel())
            tails.append(a.ravel())
            lengths.append(np.full(a.size, h))
            areas.append(np.broadcast_to(area, a.shape).ravel())
            pre.append(np.full(a.size, t0))

        wj = np.full(nj, h_j)
        wj[[0, -1]] *= 0.5
        wi = np.full(ni, h_i)
        wi[[0, -1]] *= 0.5
        add(idx[:-1, :], idx[1:, :], h_i, wj[None, :] * h_i, 0.0)
        add(idx[:, :-1], idx[:, 1:], h_j, wi[:, None] * h_j, sp_.pretension)
        if sp_.shear_weight > 0:
            h_d = np.hypot(h_i, h_j)
            area = 0.5 * sp_.shear_weight * h_i * h_j
            add(idx[:-1, :-1], idx[1:, 1:], h_d, area, 0.0)
            add(idx[:-1, 1:], idx[1:, :-1], h_d, area, 0.0)
        a = np.concatenate(tails)
        b = np.concatenate(heads)
        h = np.concatenate(lengths)
        ne = a.size
        rows = np.r_[np.arange(ne), np.arange(ne)]
        D = sp.csr_matrix((np.r_[1.0 / h, -1.0 / h], (rows, np.r_[b, a])), shape=(ne, n))

        # second differences for the flexural term
        lines = []
        for (p, q, r), hh, area in (
            ((idx[:-2, :], idx[1:-1, :], idx[2:, :]), h_i, h_i * wj[None, :]),
            ((idx[:, :-2], idx[:, 1:-1], idx[:, 2:]), h_j, wi[:, None] * h_j),
        ):
            m_ = p.size
            rr = np.repeat(np.arange(m_), 3)
            cc = np.stack([p.ravel(), q.ravel(), r.ravel()], axis=1).ravel()
            scale = np.sqrt(np.broadcast_to(area, p.shape).ravel()) / hh
            vv = (np.array([1.0, -2.0, 1.0])[None, :] * scale[:, None]).ravel()
            lines.append(sp.csr_matrix((vv, (rr, cc)), shape=(m_, n)))
        B = sp.vstack(lines).tocsr()

        free = np.ones((ni, nj), bool)
        free[:, 0] = free[:, -1] = False
        if symmetric:
            ii, jj = np.meshgrid(np.arange(ni), np.arange(nj), indexing="ij")
            rep = idx[np.minimum(ii, ni - 1 - ii), np.minimum(jj, nj - 1 - jj)].ravel()
        else:
            rep = np.arange(n)
        rep_free = np.unique(rep[free.ravel()[rep] & free.ravel()])
        col = -np.ones(n, dtype=int)
        col[rep_free] = np.arange(rep_free.size)
        node_col = col[rep]
        keep = (node_col >= 0) & free.ravel()
        P = sp.csr_matrix((np.ones(keep.sum()), (np.flatnonzero(keep), node_col[keep])), shape=(n, rep_free.size))

        self.n_full = n
        self.n_red = rep_free.size
        self.free = free.ravel()
        self.P = P
        self.PT = P.T.tocsr()
        self.D = (D @ P).tocsr()
        self.DT = self.D.T.tocsr()
        self.edge_area = np.concatenate(areas)
        self.edge_pre = np.concatenate(pre)
        Bp = (B @ P).tocsr()
        self.K_bend = (Bp.T @ Bp).tocsr()
        node_area = np.outer(wi, wj).ravel()
        self.node_area = node_area
        self.Y = sheet.stiffness
        self.k_pen = PENALTY_RATIO * self.Y

    def expand(self, u):
        return self.P @ u

    def reduce(self, w_full):
        """Least-squares projection of a full-grid field onto the unknowns."""
        counts = np.asarray(self.P.sum(axis=0)).ravel()
        return (self.PT @ w_full) / counts

    def membrane_energy(self, u, order=0):
        sl = self.D @ u
        e, d1, d2 = _psi(sl, self.sheet.springs.exponent, self.edge_pre)
        Y = self.Y
        kb = Y * self.sheet.springs.bending_weight
        Kbu = self.K_bend @ u
        E = Y * np.dot(self.edge_area, e) + 0.5 * kb * np.dot(u, Kbu)
        if order == 0:
            return E
        g = self.DT @ (Y * self.edge_area * d1) + kb * Kbu
        if order == 1:
            return E, g
        H = self.DT @ sp.diags(Y * self.edge_area * d2) @ self.D + kb * self.K_bend
        return E, g, H


@lru_cache(maxsize=64)
def operator_for(sheet: MembraneSheet, symmetric=False):
    return MembraneOperator(sheet, symmetric)


@dataclass
class Relaxed:
    w: np.ndarray  # full-grid transverse displacement (mm), shape (ni*nj,)
    u: np.ndarray  # reduced unknowns
    node_force: np.ndarray  # contact force on each full-grid node (N, >= 0)
    penetration: np.ndarray  # obstacle height minus membrane height per node (mm)
    yielded: np.ndarray  # nodes whose contact force hit the cap
    iterations: int
    residual: float
    sink: float = 0.0  # mm, obstacle displacement on its spring mount

    @property
    def reaction_force(self):
        return float(self.node_force.sum())


def _logcosh(t):
    return t + np.log1p(np.exp(-2.0 * t)) - np.log(2.0)


def _contact_terms(gap, k, cap, kc=None):
    """Penalty energy, force and stiffness per node.

    Uncapped nodes use a quadratic penalty of stiffness ``k``. Capped nodes
    model an elastic-plastic surface with the smooth saturating law
    ``f = cap * tanh(kc gap / cap)``; a node counts as yielded once its
    force passes 96% of the cap.
    """
    pos = gap > 0
    capped = pos & np.isfinite(cap)
    rigid = pos & ~capped
    E = np.zeros_like(gap)
    f = np.zeros_like(gap)
    kk = np.zeros_like(gap)
    g = gap[rigid]
    E[rigid] = 0.5 * k * g**2
    f[rigid] = k * g
    kk[rigid] = k
    yielded = np.zeros(gap.shape, bool)
    if capped.any():
        kc = k if kc is None else np.broadcast_to(np.asarray(kc, float), gap.shape)[capped]
        c = cap[capped]
        t = kc * gap[capped] / c
        E[capped] = c * c / kc * _logcosh(t)
        f[capped] = c * np.tanh(t)
        kk[capped] = kc / np.cosh(np.minimum(t, 300.0)) ** 2
        yielded[capped] = t > YIELD_RATIO
    return E, f, kk, yielded


def relax(
    op: MembraneOperator,
    obstacle,
    force_cap=None,
    u0=None,
    tol=RESIDUAL_TOL,
    max_iter=MAX_ITER,
    body_k=None,
    sink0=0.0,
    cap_stiffness=None,
):
    """Minimise membrane energy against an obstacle height field.

    Parameters
    ----------
    op : MembraneOperator
    obstacle : ndarray
        Obstacle surface height per full-grid node (mm); ``-inf`` where
        there is no object.
    force_cap : ndarray or None
        Maximum contact force per node (N); ``None`` for rigid contact.
    u0 : ndarray, optional
        Warm start for the reduced unknowns.
    body_k : float or None
        When given, the obstacle rides on a spring of this rate (N/mm) and
        its sink becomes one more unknown, solved jointly with the membrane.
    sink0 : float
        Warm start for the sink.
    cap_stiffness : float or None
        Contact stiffness (N/mm per node) of capped nodes, which are then
        elastic-plastic and exempt from the penetration tolerance. ``None``
        treats them as rigid up to the cap.
    """
    # clamped nodes cannot move; an object reaching under the clamps meets the
    # rigid frame, which is outside the model, so it is ignored there
    s = np.where(np.isfinite(obstacle) & op.free, obstacle, -1e9)
    k = op.k_pen
    cap = np.full(op.n_full, np.inf) if force_cap is None else np.broadcast_to(np.asarray(force_cap, float), (op.n_full,))
    mobile = body_k is not None
    u = np.zeros(op.n_red) if u0 is None else np.array(u0, dtype=float)
    x = np.r_[u, max(sink0, 0.0)] if mobile else u

    def split(x):
        return (x[:-1], x[-1]) if mobile else (x, 0.0)

    def total(x, order):
        u, ub = split(x)
        w = op.P @ u
        gap = s - ub - w
        Ec, f, kq, _ = _contact_terms(gap, k, cap, cap_stiffness)
        Eb = 0.5 * body_k * ub * ub if mobile else 0.0
        if order == 0:
            return op.membrane_energy(u) + Ec.sum() + Eb
        E, g, H = op.membrane_energy(u, 2)
        g = g - op.PT @ f
        H = H + op.PT @ sp.diags(kq) @ op.P
        if mobile:
            col = op.PT @ kq
            g = np.r_[g, body_k * ub - f.sum()]
            H = sp.bmat([[H, sp.csr_matrix(col[:, None])], [sp.csr_matrix(col[None, :]), sp.csr_matrix([[body_k + kq.sum()]])]])
        return E + Ec.sum() + Eb, g, H

    residual = np.inf
    it = 0
    while True:
        for it in range(it, max_iter):
            E, g, H = total(x, 2)
            residual = float(np.max(np.abs(g))) if g.size else 0.0
            if residual < tol:
                break
            d = spla.spsolve(H.tocsc(), -g, permc_spec="MMD_AT_PLUS_A")
            slope = float(g @ d)
            if not np.isfinite(slope) or slope >= 0:
                d = -g
                slope = float(g @ d)
            step = 1.0
            if abs(slope) < 1e-11 * max(1.0, abs(E)):
                # energy decrease below round-off: judge steps by the residual instead
                while step > 1e-6:
                    if np.max(np.abs(total(x + step * d, 2)[1])) < residual:
                        break
                    step *= 0.5
            else:
                while step > 1e-12:
                    if total(x + step * d, 0) <= E + 1e-4 * step * slope:
                        break
                    step *= 0.5
            x = x + step * d
        else:
            raise ConvergenceError(f"membrane relaxation did not converge in {max_iter} iterations", residual)
        u, ub = split(x)
        w = op.P @ u
        gap = s - ub - w
        _, _, _, yielded = _contact_terms(gap, k, cap, cap_stiffness)
        held = ~yielded if cap_stiffness is None else ~np.isfinite(cap)
        if np.max(gap[held], initial=0.0) <= CONTACT_TOL or it >= max_iter - 1:
            break
        # penetration too deep for the contact tolerance: stiffen and continue
        k *= 10.0
        it += 1
    _, f, _, yielded = _contact_terms(gap, k, cap, cap_stiffness)
    return Relaxed(w=w, u=u, node_force=f, penetration=gap, yielded=yielded, iterations=it, residual=residual, sink=float(ub))
