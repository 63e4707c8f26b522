"""Dense interior-point solver for the max-min semidefinite relaxation.

Solves

    maximize    t
    subject to  tr(H_k V) >= t,   k = 1..T
                V_ii <= 1,        i = 1..N
                V >= 0 (Hermitian PSD)

plus Gaussian randomization to round the relaxed ``V`` back to a
unit-modulus vector. The complex problem is solved through its real
symmetric embedding ``[[Re V, -Im V], [Im V, Re V]]`` with a primal-dual
path-following method (HKM direction, Mehrotra predictor-corrector).
Each ``H_k`` is handled through a low-rank factor ``H_k = F_k F_k^H``, which
keeps the Schur complement cheap for the rank-one Gram matrices that arise
from a rank-one AP-RIS link.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidInputError, SolverError

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
DEFAULT_MAX_CONSTRAINTS = 200
DEFAULT_SAMPLES = 500


class MaxMinSdpProblem:
    """Constraint matrices ``H_k`` of the max-min problem, stored as factors.

    Parameters
    ----------
    matrices : array_like, shape (T, N, N)
        Hermitian PSD matrices. Use :meth:`from_factors` when factors
        ``F_k`` with ``H_k = F_k F_k^H`` are already known.
    """

    def __init__(self, matrices=None, *, factors=None, herm_tol=1e-12):
        if (matrices is None) == (factors is None):
            raise InvalidInputError("give exactly one of matrices or factors")
        if matrices is not None:
            H = np.asarray(matrices, dtype=complex)
            if H.ndim == 2:
                H = H[None]
            if H.ndim != 3 or H.shape[1] != H.shape[2]:
                raise InvalidInputError(f"expected (T, N, N) matrices, got shape {H.shape}")
            scale = np.max(np.abs(H), axis=(1, 2), keepdims=True)
            scale[scale == 0] = 1.0
            if np.max(np.abs(H - H.conj().transpose(0, 2, 1)) / scale) > herm_tol:
                raise InvalidInputError("constraint matrices must be Hermitian")
            factors = _factorize(H)
        F = np.asarray(factors, dtype=complex)
        if F.ndim == 2:
            F = F[:, :, None]
        if F.ndim != 3 or F.shape[0] < 1:
            raise InvalidInputError("need at least one constraint")
        self.factors = F

    @classmethod
    def from_factors(cls, factors) -> "MaxMinSdpProblem":
        return cls(factors=factors)

    @property
    def T(self) -> int:
        return self.factors.shape[0]

    @property
    def N(self) -> int:
        return self.factors.shape[1]

    @property
    def matrices(self) -> np.ndarray:
        F = self.factors
        return F @ F.conj().transpose(0, 2, 1)

    def subset(self, idx) -> "MaxMinSdpProblem":
        return MaxMinSdpProblem(factors=self.factors[np.asarray(idx)])

    def scaled(self, c: float) -> "MaxMinSdpProblem":
        return MaxMinSdpProblem(factors=self.factors * np.sqrt(c))

    def traces(self, V) -> np.ndarray:
        """``tr(H_k V)`` for every k."""
        V = np.asarray(V, dtype=complex)
        FV = np.einsum("ij,kjr->kir", V, self.factors)
        return np.einsum("kir,kir->k", self.factors.conj(), FV).real

    def quad_values(self, vs) -> np.ndarray:
        """``v^H H_k v`` for each column of ``vs``; shape (T, K)."""
        vs = np.asarray(vs, dtype=complex)
        if vs.ndim == 1:
            vs = vs[:, None]
        proj = np.einsum("kir,ic->krc", self.factors.conj(), vs)
        return np.sum(np.abs(proj) ** 2, axis=1)

    def min_quad(self, v) -> float:
        return float(np.min(self.quad_values(v)))


def _factorize(H: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(H)
    top = np.max(np.abs(w), axis=1, keepdims=True)
    if np.any(w < -1e-9 * np.maximum(top, 1e-300)):
        raise InvalidInputError("constraint matrices must be positive semidefinite")
    w = np.clip(w, 0.0, None)
    keep = np.max(w > 1e-12 * np.maximum(top, 1e-300), axis=0)
    return (U * np.sqrt(w)[:, None, :])[:, :, keep]


@dataclass
class SdpSolution:
    """Relaxed optimum.

    ``objective`` is ``min_k tr(H_k V)`` over the constraints that were
    solved (``active``); ``dual_bound`` upper-bounds the relaxed optimum.
    ``history`` holds the (primal, dual) objective pair of every iteration.
    """

    V: np.ndarray
    objective: float
    dual_bound: float
    gap: float
    iterations: int
    active: np.ndarray
    history: list = field(default_factory=list)


def thin_indices(T: int, max_constraints: int | None) -> np.ndarray:
    """Evenly spaced subset of ``range(T)`` with at most ``max_constraints`` entries."""
    if max_constraints is None or T <= max_constraints:
        return np.arange(T)
    return np.unique(np.round(np.linspace(0, T - 1, max_constraints)).astype(int))


def _embed_factors(F: np.ndarray):
    """Real-embedding factor columns, weights and owners for all constraints."""
    T, N, r = F.shape
    cols = F.transpose(0, 2, 1).reshape(T * r, N)
    p = np.hstack([cols.real, cols.imag])
    q = np.hstack([-cols.imag, cols.real])
    owner = np.repeat(np.arange(T), r)
    vecs = np.vstack([p, q])
    weights = np.full(2 * T * r, 0.5)
    owners = np.concatenate([owner, owner])
    # diag(V)_i = (X_ii + X_{N+i,N+i}) / 2
    eye = np.eye(2 * N)
    vecs = np.vstack([vecs, eye])
    weights = np.concatenate([weights, np.full(2 * N, 0.5)])
    owners = np.concatenate([owners, T + np.tile(np.arange(N), 2)])
    return vecs.T, weights, owners


class _Embedded:
    """Standard-form data: min <C,X> s.t. A(X) = b over PSD x nonnegative-orthant blocks."""

    def __init__(self, F: np.ndarray):
        T, N, _ = F.shape
        self.T, self.N = T, N
        self.n = 2 * N
        self.m = T + N
        self.F, self.c, owners = _embed_factors(F)
        self.E = np.zeros((self.F.shape[1], self.m))
        self.E[np.arange(len(owners)), owners] = 1.0
        # LP block: [t, s_1..s_T, r_1..r_N]
        self.nl = 1 + T + N
        Al = np.zeros((self.m, self.nl))
        Al[:T, 0] = -1.0
        Al[np.arange(T), 1 + np.arange(T)] = -1.0
        Al[T + np.arange(N), 1 + T + np.arange(N)] = 1.0
        self.Al = Al
        self.b = np.concatenate([np.zeros(T), np.ones(N)])
        self.Cl = np.zeros(self.nl)
        self.Cl[0] = -1.0

    def A(self, X, xl):
        quad = np.einsum("ik,ik->k", self.F, X @ self.F)
        return self.E.T @ (self.c * quad) + self.Al @ xl

    def A_s(self, Y):
        quad = np.einsum("ik,ik->k", self.F, Y @ self.F)
        return self.E.T @ (self.c * quad)

    def AT(self, y):
        w = self.c * (self.E @ y)
        return (self.F * w) @ self.F.T, self.Al.T @ y


def _max_step(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = linalg.solve_triangular(L, dX, lower=True)
    S = linalg.solve_triangular(L, Li.T, lower=True)
    lam = np.linalg.eigvalsh((S + S.T) / 2)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    return np.inf if not np.any(neg) else float(np.min(-x[neg] / dx[neg]))


def _sym(A):
    return (A + A.T) / 2


def solve_maxmin_sdp(prob: MaxMinSdpProblem, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER,
                     max_constraints: int | None = DEFAULT_MAX_CONSTRAINTS) -> SdpSolution:
    """Solve the relaxed max-min problem to relative duality gap ``tol``.

    When the problem has more than ``max_constraints`` matrices an evenly
    spaced subset is solved (``None`` disables thinning). Raises
    :class:`SolverError` if ``max_iter`` iterations do not reach ``tol``.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be > 0")
    active = thin_indices(prob.T, max_constraints)
    F = prob.factors[active]
    tr = np.sum(np.abs(F) ** 2, axis=(1, 2))
    if np.any(tr <= 0):
        raise InvalidInputError("zero constraint matrix")
    N = prob.N
    # normalize so the average tr(H_k) equals N; undone on output
    scale = float(np.mean(tr)) / N
    Fn = F / np.sqrt(scale)
    trn = tr / scale
    emb = _Embedded(Fn)
    T, n, nl = emb.T, emb.n, emb.nl

    # strictly feasible primal start: V = rho I
    rho = 0.5
    X = rho * np.eye(n)
    t0 = 0.5 * rho * np.min(trn)
    xl = np.concatenate([[t0], rho * trn - t0, np.full(N, 1.0 - rho)])
    # strictly feasible dual start: lambda_k = 2/T, mu_i above lambda_max(sum lambda_k H_k)
    lam = np.full(T, 2.0 / T)
    Hsum = np.einsum("k,kir,kjr->ij", lam, Fn, Fn.conj())
    mu0 = 1.5 * np.linalg.eigvalsh(Hsum)[-1] + 1.0
    y = np.concatenate([lam, np.full(N, -mu0)])
    ATs, ATl = emb.AT(y)
    Z = -ATs
    zl = emb.Cl - ATl

    history = []
    gap = np.inf
    nrm_b = 1.0 + np.linalg.norm(emb.b)
    it = 0
    for it in range(1, max_iter + 1):
        rp = emb.b - emb.A(X, xl)
        ATs, ATl = emb.AT(y)
        Rd = -Z - ATs
        rdl = emb.Cl - zl - ATl
        primal, dual = xl[0], -float(emb.b @ y)
        history.append((primal * scale, dual * scale))
        gap = (dual - primal) / max(1.0, abs(dual))
        pinf = np.linalg.norm(rp) / nrm_b
        dinf = (np.linalg.norm(Rd) + np.linalg.norm(rdl)) / (1.0 + np.sqrt(n))
        if gap <= tol and pinf <= 1e-8 and dinf <= 1e-8:
            break
        mu = (np.sum(X * Z) + xl @ zl) / (n + nl)
        try:
            cz = linalg.cho_factor(Z)
            Zi = linalg.cho_solve(cz, np.eye(n))
            FXF = emb.F.T @ X @ emb.F
            FZF = emb.F.T @ Zi @ emb.F
            P = FXF * FZF * np.outer(emb.c, emb.c)
            M = emb.E.T @ P @ emb.E + (emb.Al * (xl / zl)) @ emb.Al.T
            cm = linalg.cho_factor(_sym(M))
        except linalg.LinAlgError:
            break

        def direction(Ks, kl):
            rhs = rp - emb.A_s((Ks - X @ Rd) @ Zi) - emb.Al @ ((kl - xl * rdl) / zl)
            dy = linalg.cho_solve(cm, rhs)
            dATs, dATl = emb.AT(dy)
            dZ = Rd - dATs
            dzl = rdl - dATl
            dX = _sym((Ks - X @ dZ) @ Zi)
            dxl = (kl - xl * dzl) / zl
            return dX, dxl, dy, dZ, dzl

        XZ = X @ Z
        dXa, dxla, _, dZa, dzla = direction(-XZ, -xl * zl)
        ap = min(1.0, _max_step(X, dXa), _max_step_lp(xl, dxla))
        ad = min(1.0, _max_step(Z, dZa), _max_step_lp(zl, dzla))
        mu_aff = (np.sum((X + ap * dXa) * (Z + ad * dZa))
                  + (xl + ap * dxla) @ (zl + ad * dzla)) / (n + nl)
        sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0))
        Ks = sigma * mu * np.eye(n) - XZ - dXa @ dZa
        kl = sigma * mu - xl * zl - dxla * dzla
        dX, dxl, dy, dZ, dzl = direction(Ks, kl)
        step = 0.98
        ap = min(1.0, step * _max_step(X, dX), step * _max_step_lp(xl, dxl))
        ad = min(1.0, step * _max_step(Z, dZ), step * _max_step_lp(zl, dzl))
        if ap <= 1e-12 and ad <= 1e-12:
            break
        X = _sym(X + ap * dX)
        xl = xl + ap * dxl
        y = y + ad * dy
        Z = _sym(Z + ad * dZ)
        zl = zl + ad * dzl

    V = _recover(X, N)
    objective = float(np.min(MaxMinSdpProblem(factors=F).traces(V)))
    sol = SdpSolution(V=V, objective=objective, dual_bound=-float(emb.b @ y) * scale,
                      gap=float(gap), iterations=it, active=active, history=history)
    if not gap <= tol:
        raise SolverError(f"no convergence after {it} iterations (gap {gap:.3e})",
                          best=sol, gap=float(gap))
    return sol


def _recover(X: np.ndarray, N: int) -> np.ndarray:
    Vr = (X[:N, :N] + X[N:, N:]) / 2
    Vi = (X[N:, :N] - X[:N, N:]) / 2
    V = Vr + 1j * Vi
    return (V + V.conj().T) / 2


def gaussian_randomization(sol: SdpSolution, prob: MaxMinSdpProblem,
                           K: int = DEFAULT_SAMPLES, seed=None) -> np.ndarray:
    """Round the relaxed ``V`` to a unit-modulus vector.

    Draws ``K`` samples from ``CN(0, V)``, projects each entry onto the
    unit circle and keeps the sample with the largest ``min_k v^H H_k v``
    over all constraints of ``prob``. Samples are drawn row by row, so a
    larger ``K`` under the same seed extends the smaller candidate set.
    """
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    V = np.asarray(sol.V, dtype=complex)
    w, U = np.linalg.eigh((V + V.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    if not np.any(w > 0):
        raise InvalidInputError("relaxed solution is zero")
    L = U * np.sqrt(w)
    rng = np.random.default_rng(seed)
    N = V.shape[0]

    def draw(k):
        z = (rng.standard_normal((k, N)) + 1j * rng.standard_normal((k, N))) / np.sqrt(2)
        return (L @ z.T)

    xi = draw(K)
    bad = np.any(np.abs(xi) < 1e-300, axis=0)
    while np.any(bad):
        xi[:, bad] = draw(int(bad.sum()))
        bad = np.any(np.abs(xi) < 1e-300, axis=0)
    cand = xi / np.abs(xi)
    scores = np.min(prob.quad_values(cand), axis=0)
    return cand[:, int(np.argmax(scores))]
