"""Classical bilinear reconstructions: factor-form low-rank and a calibrated SToRM."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .mri_ops import KSpaceDataset, dc_gradient

__all__ = [
    "FactorPair",
    "GraphLaplacian",
    "DivergenceError",
    "navigator_features",
    "navigator_distances",
    "storm_laplacian",
    "storm_recon",
    "lowrank_recon",
    "conjugate_residual",
]

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class FactorPair:
    """Bilinear factors of a Casorati matrix ``X = U @ V.T``."""

    U: np.ndarray
    V: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.complex128)
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise ValueError(f"incompatible factors U{self.U.shape}, V{self.V.shape}")

    @property
    def r(self) -> int:
        return self.U.shape[1]

    def frame(self, i: int, shape) -> np.ndarray:
        return (self.U @ self.V[i]).reshape(shape)

    def series(self, shape) -> np.ndarray:
        """Materialise all frames, ``(n_frames, H, W)``."""
        return (self.V @ self.U.T).reshape((self.V.shape[0],) + tuple(shape))


@dataclass
class GraphLaplacian:
    W: np.ndarray
    sigma_kernel: float = float("nan")
    k_nn: int | None = None
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def L(self) -> np.ndarray:
        return np.diag(self.W.sum(axis=1)) - self.W

    def eig(self):
        """Eigenvalues (ascending, clipped at 0) and sign-normalised eigenvectors."""
        if self._eig is None:
            vals, vecs = np.linalg.eigh(self.L)
            vals = np.clip(vals, 0.0, None)
            idx = np.argmax(np.abs(vecs), axis=0)
            signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
            self._eig = (vals, vecs * signs)
        return self._eig


def navigator_features(dataset: KSpaceDataset) -> np.ndarray:
    """Real/imaginary concatenation of all navigator samples, one row per frame."""
    nav = dataset.navigators().reshape(dataset.n_frames, -1)
    return np.concatenate([nav.real, nav.imag], axis=1)


def navigator_distances(dataset: KSpaceDataset) -> np.ndarray:
    return cdist(navigator_features(dataset), navigator_features(dataset))


def storm_laplacian(dataset: KSpaceDataset, sigma_kernel: float | None = None, k_nn: int | None = 20) -> GraphLaplacian:
    """Gaussian k-nearest-neighbour graph on navigator distances.

    ``sigma_kernel`` defaults to the median off-diagonal distance.  With
    ``k_nn=None`` the graph is complete.  Truncated rows are symmetrised by
    taking the elementwise maximum.
    """
    if dataset.n_frames < 2:
        raise ValueError("need at least two frames")
    d = navigator_distances(dataset)
    n = d.shape[0]
    if sigma_kernel is None:
        off = d[~np.eye(n, dtype=bool)]
        sigma_kernel = float(np.median(off))
        if sigma_kernel <= 0:
            sigma_kernel = 1.0
    W = np.exp(-(d / sigma_kernel) ** 2)
    np.fill_diagonal(W, 0.0)
    if k_nn is not None and k_nn < n - 1:
        d_off = d + np.diag(np.full(n, np.inf))
        # stable ordering so ties resolve by frame index
        nearest = np.argsort(d_off, axis=1, kind="stable")[:, :k_nn]
        keep = np.zeros_like(W, dtype=bool)
        keep[np.arange(n)[:, None], nearest] = True
        keep |= keep.T
        W = np.where(keep, W, 0.0)
    return GraphLaplacian(W, sigma_kernel, k_nn)


def _inner(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def conjugate_residual(apply, rhs, x0, max_iter: int = 50, tol: float = 1e-8):
    """Conjugate residual iterations for a Hermitian operator.

    Residual norms are nonincreasing.  Returns ``(x, residual_norms, converged)``.
    """
    x = x0.copy()
    r = rhs - apply(x)
    p = r.copy()
    Ar = apply(r)
    Ap = Ar.copy()
    rAr = _inner(r, Ar)
    b_norm = np.linalg.norm(rhs) or 1.0
    history = [float(np.linalg.norm(r))]
    converged = history[-1] <= tol * b_norm
    for _ in range(max_iter):
        if converged:
            break
        ApAp = _inner(Ap, Ap)
        if ApAp <= 0:
            break
        alpha = rAr / ApAp
        x += alpha * p
        r -= alpha * Ap
        history.append(float(np.linalg.norm(r)))
        if history[-1] <= tol * b_norm:
            converged = True
            break
        Ar = apply(r)
        rAr_new = _inner(r, Ar)
        beta = rAr_new / rAr
        rAr = rAr_new
        p = r + beta * p
        Ap = Ar + beta * Ap
    return x, history, converged


def storm_recon(dataset: KSpaceDataset, laplacian: GraphLaplacian, r: int = 30, lam: float = 1e2,
                iters: int = 60, tol: float = 1e-8) -> FactorPair:
    """Temporal factors from the Laplacian, spatial factors by weighted Tikhonov.

    ``V`` holds the ``r`` eigenvectors with smallest eigenvalues ``s_j`` and
    ``U`` minimises ``||A(U V^T) - B||^2 + lam * sum_j s_j ||u_j||^2``.
    """
    n_f = dataset.n_frames
    if r > n_f:
        raise ValueError(f"r={r} exceeds the number of frames {n_f}")
    vals, vecs = laplacian.eig()
    V = vecs[:, :r].copy()
    sig = vals[:r].copy()
    gram = dataset.gram
    rhs = gram.AHb @ V

    def normal(U):
        T, _ = gram.normal_terms(U, V)
        return T + lam * U * sig[None, :]

    U0 = np.zeros_like(rhs)
    U, history, converged = conjugate_residual(normal, rhs, U0, max_iter=iters, tol=tol)
    if not converged:
        log.warning("storm_recon: U solve stopped after %d iterations (residual %.3e)", iters, history[-1])
    return FactorPair(U, V, {"residuals": history, "converged": converged, "eigenvalues": sig})


def _objective(dataset, U, V, lam):
    loss, gU, gV = dc_gradient(U, V, dataset)
    reg = lam * (np.sum(np.abs(U) ** 2) + np.sum(V ** 2))
    return loss + reg, gU + 2 * lam * U, gV + 2 * lam * V


def lowrank_recon(dataset: KSpaceDataset, r: int = 30, lam: float = 1e2, iters: int = 100,
                  seed: int = 0, step: float = 1.0, patience: int = 10) -> FactorPair:
    """Alternating gradient descent on ``||A(U V^T) - B||^2 + lam (||U||^2 + ||V||^2)``.

    Factors start from the rank-``r`` SVD of the coil-combined adjoint with a
    tiny seeded perturbation and a least-squares scale.  Each block step uses
    ``step`` over the block Lipschitz constant, so ``step <= 1`` makes every
    sweep nonincreasing.
    """
    n_f = dataset.n_frames
    if r > n_f:
        raise ValueError(f"r={r} exceeds the number of frames {n_f}")
    gram = dataset.gram
    lip = gram.lipschitz()
    Us, s, Vt = np.linalg.svd(gram.AHb, full_matrices=False)
    rng = np.random.default_rng(seed)
    V = Vt[:r].T.real + 1e-6 * rng.standard_normal((n_f, r))
    U = Us[:, :r] * s[:r]
    # least-squares scale for the initial product
    T, Q = gram.normal_terms(U, V)
    m = float(np.sum(V * (U.conj().T @ gram.AHb).real.T))
    q = float(np.sum(V * Q))
    if q > 0 and m > 0:
        c = np.sqrt(m / q)
        U, V = U * c, V * c
    history = []
    worse = 0
    for it in range(iters):
        obj, gU, _ = _objective(dataset, U, V, lam)
        history.append(obj)
        if not np.isfinite(obj):
            raise DivergenceError(f"lowrank_recon: non-finite objective at sweep {it}")
        if len(history) > 1 and history[-1] > history[-2]:
            worse += 1
            if worse >= patience:
                raise DivergenceError(f"lowrank_recon: objective increased {patience} sweeps in a row")
        else:
            worse = 0
        lip_u = 2 * (lip * np.linalg.norm(V, 2) ** 2 + lam)
        U = U - (step / lip_u) * gU
        _, _, gV = _objective(dataset, U, V, lam)
        lip_v = 2 * (lip * np.linalg.norm(U, 2) ** 2 + lam)
        V = V - (step / lip_v) * gV
    obj, _, _ = _objective(dataset, U, V, lam)
    history.append(obj)
    return FactorPair(U, V, {"objective": history})
