"""Generator pretraining and the regularised joint reconstruction.

The objective minimised by :func:`reconstruct` is::

    data_scale * ||A(U V^T) - B||^2 + lam1 ||theta||_1 + lam2 ||phi||_1 + lam3 ||D_t Z||_1

with ``U = G_theta(U0)`` and ``V = G_phi(Z)``.  Each epoch is one
full-batch step: a gradient step on the smooth part, soft-thresholding of
the generator weights and a subgradient step of the latent total variation.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import difftensor as dt
from .baselines import FactorPair, navigator_features
from .generators import (
    GeneratorNet,
    factors_from_channels,
    l1_weight_norm,
    seed_from_factors,
    soft_threshold,
    identity_spatial_net,
    spatial_net,
    temporal_net,
)
from .metrics import series_ser
from .mri_ops import KSpaceDataset, dc_gradient

__all__ = [
    "ReconConfig",
    "TrainTrace",
    "InitState",
    "ReconResult",
    "NumericalError",
    "temporal_tv",
    "tv_subgradient",
    "normalize_factors",
    "navigator_latents",
    "pretrain_spatial",
    "pretrain_temporal",
    "initialize",
    "smooth_objective",
    "reconstruct",
    "frame_synthesis",
    "synthesize_with_latent",
]

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Raised on a non-finite loss; ``state`` holds the last finite iterate."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class ReconConfig:
    r: int = 30
    d: int = 2
    lam1: float = 1e-3
    lam2: float = 1e-4
    lam3: float = 1e2
    step_theta: float = 3e-6
    step_phi: float = 1e-3
    step_z: float = 1e-2
    epochs: int = 300
    pretrain_epochs: int = 5000
    pretrain_step: float = 1e-2
    pretrain_optimizer: str = "adam"
    init: str = "storm"
    latent_init: str = "navigator"
    operator: str = "radial"
    optimizer: str = "adam"
    seed: int = 0
    data_scale: float | None = None
    l1_bias: bool = True
    kernel: int = 3
    temporal_hidden: int = 16
    checkpoint_every: int = 0
    z_snapshot_every: int = 0
    early_stopping: bool = False
    patience: int = 50

    def validate(self):
        for name in ("lam1", "lam2", "lam3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        for name in ("step_theta", "step_phi", "step_z", "pretrain_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.init not in ("storm", "lowrank", "random"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.operator not in ("radial", "cartesian"):
            raise ValueError(f"unknown operator {self.operator!r}")
        for name in ("optimizer", "pretrain_optimizer"):
            if getattr(self, name) not in ("gd", "adam"):
                raise ValueError(f"unknown {name} {getattr(self, name)!r}")
        if self.latent_init not in ("navigator", "random"):
            raise ValueError(f"unknown latent_init {self.latent_init!r}")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.r < 1 or self.d < 1:
            raise ValueError("r and d must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReconConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown recon config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


TRACE_COLUMNS = ("epoch", "data_loss", "l1_theta", "l1_phi", "tv_z", "ser_db")


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)
    z_snapshots: dict = field(default_factory=dict)

    def append(self, **row):
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    @property
    def ser(self) -> np.ndarray:
        return self.column("ser_db")

    def to_csv(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(str(row["epoch"]) if c == "epoch" else repr(float(row[c])) for c in TRACE_COLUMNS))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrainTrace":
        lines = text.strip().splitlines()
        head = lines[0].split(",")
        trace = cls()
        for line in lines[1:]:
            vals = line.split(",")
            trace.append(**{k: (int(v) if k == "epoch" else float(v)) for k, v in zip(head, vals)})
        return trace


@dataclass
class InitState:
    theta: GeneratorNet
    phi: GeneratorNet
    Z: np.ndarray
    U0: np.ndarray  # (2r, H, W) seed channels


@dataclass
class ReconResult:
    factors: FactorPair
    theta: GeneratorNet
    phi: GeneratorNet
    Z: np.ndarray
    trace: TrainTrace
    data_scale: float


def temporal_tv(Z) -> float:
    """``sum_i sum_k |Z[k, i] - Z[k, i-1]|``."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[1] < 2:
        raise ValueError("temporal_tv needs at least two frames")
    return float(np.sum(np.abs(np.diff(Z, axis=1))))


def tv_subgradient(Z) -> np.ndarray:
    """Subgradient of :func:`temporal_tv` with ``sign(0) = 0``."""
    s = np.sign(np.diff(Z, axis=1))
    g = np.zeros_like(Z)
    g[:, 1:] += s
    g[:, :-1] -= s
    return g


def normalize_factors(U, V):
    """Rescale a factor pair so every ``U`` column has unit RMS.

    ``V`` absorbs the scale, so each temporal column carries the energy its
    spatial partner contributes to the images and the product ``U V^T`` is
    unchanged.  All-zero columns are left alone.
    """
    U = np.asarray(U, dtype=np.complex128)
    V = np.asarray(V, dtype=np.float64)
    c = np.linalg.norm(U, axis=0) / np.sqrt(U.shape[0])
    c[c == 0] = 1.0
    return U / c, V * c


def navigator_latents(dataset: KSpaceDataset, d: int) -> np.ndarray:
    """Leading ``d`` principal components of the navigator signals, unit variance.

    Returns a ``(d, n_frames)`` array with component signs fixed so the
    largest-magnitude entry is positive.
    """
    F = navigator_features(dataset)
    F = F - F.mean(axis=0)
    if d > min(F.shape):
        raise ValueError(f"cannot draw {d} latent coordinates from navigators of shape {F.shape}")
    comps, _, _ = np.linalg.svd(F, full_matrices=False)
    Z = comps[:, :d].T.copy()
    idx = np.argmax(np.abs(Z), axis=1)
    Z *= np.sign(Z[np.arange(d), idx])[:, None]
    std = Z.std(axis=1, keepdims=True)
    std[std == 0] = 1.0
    return Z / std


class _Stepper:
    """Per-group gradient step, plain or with adaptive moments.

    ``prox`` thresholds are scaled by the effective per-entry step, which is
    the proximal map under the optimizer's diagonal metric.
    """

    def __init__(self, mode, lr, shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.mode, self.lr = mode, lr
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads, l1: float = 0.0, l1_mask=None):
        self.t += 1
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            if self.mode == "gd":
                eff = self.lr
                p = p - eff * g
            else:
                self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
                self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
                mhat = self.m[k] / (1 - self.b1 ** self.t)
                vhat = self.v[k] / (1 - self.b2 ** self.t)
                eff = self.lr / (np.sqrt(vhat) + self.eps)
                p = p - eff * mhat
            if l1 > 0 and (l1_mask is None or l1_mask[k]):
                p = soft_threshold(p, eff * l1)
            out.append(p)
        return out


def _fit_loop(build, params_groups, target, epochs, steppers, tol=0.0):
    """Least-squares fit of a generator output to ``target``."""
    history = []
    # absolute error for an all-zero target
    t_norm = np.linalg.norm(target) or 1.0
    for _ in range(epochs):
        out, leaf_groups = build(params_groups)
        res = out.data - target
        loss = float(np.sum(res * res))
        if not np.isfinite(loss):
            raise NumericalError("pretraining loss is not finite")
        history.append(np.sqrt(loss) / t_norm)
        if history[-1] <= tol:
            break
        dt.backward(out, 2 * res)
        params_groups = [st.step(params, [n.grad for n in leaves])
                         for st, params, leaves in zip(steppers, params_groups, leaf_groups)]
    out, _ = build(params_groups)
    history.append(float(np.linalg.norm(out.data - target) / t_norm))
    return params_groups, history


def pretrain_spatial(net: GeneratorNet, seed, target_U, epochs: int = 500, step: float = 1e-3,
                     optimizer: str = "adam", tol: float = 0.0):
    """Fit ``G_theta(seed)`` to the complex target factors.

    Returns ``(net, relative_fit_error, history)``.
    """
    seed = np.asarray(seed, dtype=np.float64)
    target = seed_from_factors(target_U, seed.shape[1:])
    if target.shape[0] != net.widths[-1] or seed.shape[0] != net.widths[0]:
        raise ValueError("seed, target and network disagree on the number of factors")

    def build(groups):
        out, leaves = net.with_params(groups[0]).build(seed)
        return out, [leaves]

    stepper = _Stepper(optimizer, step, [p.shape for p in net.params])
    (params,), history = _fit_loop(build, [net.params], target, epochs, [stepper], tol)
    return net.with_params(params), history[-1], history


def pretrain_temporal(net: GeneratorNet, target_V, Z0, epochs: int = 500, step: float = 1e-3,
                      optimizer: str = "adam", tol: float = 0.0):
    """Jointly fit network weights and latent inputs so ``G_phi(Z) ~ target_V``.

    Returns ``(net, Z, relative_fit_error, history)``.
    """
    target = np.asarray(target_V, dtype=np.float64).T
    Z0 = np.asarray(Z0, dtype=np.float64)
    if target.shape[0] != net.widths[-1]:
        raise ValueError(f"target has {target.shape[0]} columns, net outputs {net.widths[-1]}")

    def build(groups):
        z = dt.tensor(groups[1][0])
        out, leaves = net.with_params(groups[0]).build(z)
        return out, [leaves, [z]]

    steppers = [_Stepper(optimizer, step, [p.shape for p in net.params]), _Stepper(optimizer, step, [Z0.shape])]
    (params, (Z,)), history = _fit_loop(build, [net.params, [Z0]], target, epochs, steppers, tol)
    return net.with_params(params), Z, history[-1], history


def initialize(cfg: ReconConfig, dataset: KSpaceDataset, init_factors: FactorPair,
               pretrain: bool = True) -> tuple[InitState, dict]:
    """Starting point of the joint optimisation.

    The spatial seed is always the normalised initial ``U``.  With
    ``init="random"`` both generators take fan-in uniform weights and ``Z``
    is standard normal.  Otherwise the spatial generator starts at the
    identity map, which already solves its fitting problem exactly, and the
    temporal generator is fitted jointly with ``Z`` to the initial ``V``
    starting from navigator principal components (or standard-normal
    latents when ``latent_init="random"``).
    """
    cfg.validate()
    U, V = normalize_factors(init_factors.U, init_factors.V)
    if U.shape[1] != cfg.r:
        raise ValueError(f"initial factors have rank {U.shape[1]}, config asks for r={cfg.r}")
    if V.shape[0] != dataset.n_frames:
        raise ValueError(f"initial factors cover {V.shape[0]} frames, dataset has {dataset.n_frames}")
    U0 = seed_from_factors(U, dataset.shape)
    rng = np.random.default_rng(cfg.seed)
    phi = temporal_net(cfg.d, cfg.r, cfg.kernel, seed=cfg.seed + 1, hidden=cfg.temporal_hidden)
    if cfg.init == "random":
        theta = spatial_net(cfg.r, cfg.kernel, seed=cfg.seed)
        return InitState(theta, phi, rng.standard_normal((cfg.d, dataset.n_frames)), U0), {}
    if cfg.latent_init == "navigator":
        Z0 = navigator_latents(dataset, cfg.d)
    else:
        Z0 = rng.standard_normal((cfg.d, dataset.n_frames))
    theta = identity_spatial_net(2 * cfg.r, cfg.kernel, offset=max(0.0, -float(U0.min())) + 1.0)
    info: dict = {}
    if pretrain:
        theta, err_u, hist_u = pretrain_spatial(theta, U0, U, cfg.pretrain_epochs, cfg.pretrain_step,
                                                cfg.pretrain_optimizer, tol=1e-10)
        phi, Z0, err_v, hist_v = pretrain_temporal(phi, V, Z0, cfg.pretrain_epochs, cfg.pretrain_step,
                                                   cfg.pretrain_optimizer)
        info = {"spatial_fit": err_u, "temporal_fit": err_v, "spatial_history": hist_u, "temporal_history": hist_v}
    return InitState(theta, phi, Z0, U0), info


def _auto_data_scale(dataset: KSpaceDataset) -> float:
    # Gaussian negative log-likelihood when the noise level is known,
    # otherwise unit data energy per frame
    if dataset.noise_sigma > 0:
        return 1.0 / dataset.noise_sigma ** 2
    return dataset.n_frames / dataset.gram.b_norm2


def smooth_objective(theta: GeneratorNet, phi: GeneratorNet, Z, seed, dataset: KSpaceDataset,
                     scale: float = 1.0):
    """Scaled data term through both generators and its gradients.

    Returns ``(loss, U, V, (grads_theta, grads_phi, grad_Z))`` where the
    parameter gradients follow :attr:`GeneratorNet.params` order.  The
    complex gradient of ``U`` enters the spatial net as (Re, Im) channel
    pairs, matching the real-valued derivative of the squared norm.
    """
    h, w = dataset.shape
    u_node, th_leaves = theta.build(seed)
    z_node = dt.tensor(np.asarray(Z, dtype=np.float64))
    v_node, ph_leaves = phi.build(z_node)
    U = factors_from_channels(u_node.data)
    V = v_node.data.T
    loss, gU, gV = dc_gradient(U, V, dataset)
    dt.backward(u_node, scale * seed_from_factors(gU, (h, w)))
    dt.backward(v_node, scale * gV.T)
    grads = ([n.grad for n in th_leaves], [n.grad for n in ph_leaves], z_node.grad)
    return scale * loss, U, V, grads


def reconstruct(dataset: KSpaceDataset, cfg: ReconConfig, init: InitState, reference=None,
                checkpoint=None) -> ReconResult:
    """Regularised joint optimisation of both generators and the latents.

    ``reference`` is an ``(n_frames, H, W)`` series used only to record SER.
    ``checkpoint(epoch, state_dict)`` is called every ``cfg.checkpoint_every``
    epochs when given.  Trace row ``e`` is evaluated before update ``e``, so
    row 0 describes the initialisation and the last row the returned factors.
    """
    cfg.validate()
    if init.U0.shape[0] != 2 * cfg.r or init.Z.shape != (cfg.d, dataset.n_frames):
        raise ValueError("initial state does not match the configuration")
    scale = cfg.data_scale if cfg.data_scale is not None else _auto_data_scale(dataset)
    h, w = dataset.shape
    theta, phi = init.theta.copy(), init.phi.copy()
    Z = np.array(init.Z, dtype=np.float64)
    seed = init.U0
    ref = None if reference is None else np.abs(np.asarray(reference))
    st_theta = _Stepper(cfg.optimizer, cfg.step_theta, [p.shape for p in theta.params])
    st_phi = _Stepper(cfg.optimizer, cfg.step_phi, [p.shape for p in phi.params])
    st_z = _Stepper(cfg.optimizer, cfg.step_z, [Z.shape])
    mask = None if cfg.l1_bias else [k % 2 == 0 for k in range(8)]
    trace = TrainTrace()
    best = (-np.inf, None)
    last_good = None
    stale = 0
    for epoch in range(cfg.epochs + 1):
        loss, U, V, (g_theta, g_phi, g_z) = smooth_objective(theta, phi, Z, seed, dataset, scale)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite data loss at epoch {epoch}", last_good)
        last_good = {"theta": theta, "phi": phi, "Z": Z.copy(), "epoch": epoch}
        row = {
            "epoch": epoch,
            "data_loss": loss,
            "l1_theta": l1_weight_norm(theta, cfg.l1_bias),
            "l1_phi": l1_weight_norm(phi, cfg.l1_bias),
            "tv_z": temporal_tv(Z) if Z.shape[1] > 1 else 0.0,
            "ser_db": float("nan"),
        }
        if ref is not None:
            row["ser_db"] = series_ser((V @ U.T).reshape(-1, h, w), ref)
        trace.append(**row)
        if cfg.z_snapshot_every and epoch % cfg.z_snapshot_every == 0:
            trace.z_snapshots[epoch] = Z.copy()
        if checkpoint is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            checkpoint(epoch, {"theta": theta, "phi": phi, "Z": Z, "U0": seed, "row": row})
        if cfg.early_stopping and ref is not None:
            if row["ser_db"] > best[0]:
                best, stale = (row["ser_db"], (theta, phi, Z.copy())), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    theta, phi, Z = best[1]
                    break
        if epoch == cfg.epochs:
            break
        theta = theta.with_params(st_theta.step(theta.params, g_theta, cfg.lam1, mask))
        phi = phi.with_params(st_phi.step(phi.params, g_phi, cfg.lam2, mask))
        gz = g_z + cfg.lam3 * tv_subgradient(Z) if Z.shape[1] > 1 else g_z
        (Z,) = st_z.step([Z], [gz])
    U = factors_from_channels(theta(seed))
    V = phi(Z).T
    return ReconResult(FactorPair(U, V), theta, phi, Z, trace, scale)


def frame_synthesis(U, phi: GeneratorNet, Z, i: int) -> np.ndarray:
    """Frame ``i`` as ``U @ G_phi(Z)[:, i]`` (flattened)."""
    return np.asarray(U) @ phi(np.asarray(Z))[:, i]


def synthesize_with_latent(U, phi: GeneratorNet, Z, i: int, z) -> np.ndarray:
    """Frame ``i`` after replacing latent column ``i`` by ``z``.

    The temporal convolutions see neighbouring latents, so a latent vector
    is rendered in the context of its trajectory.
    """
    Z = np.array(Z, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (Z.shape[0],):
        raise ValueError(f"latent vector must have length {Z.shape[0]}")
    Z[:, i] = z
    return frame_synthesis(U, phi, Z, i)
