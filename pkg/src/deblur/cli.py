"""Command-line pipeline: phantom -> acquire -> baseline -> pretrain -> reconstruct -> evaluate/export.

Every stage reads one JSON config (sections ``phantom``, ``acquisition``,
``baseline``, ``recon``) and writes into ``<out>/<stage dir>/`` a set of
tensor containers plus ``manifest.json``.  A stage records the hash of the
config sections it depends on; a downstream stage recomputes that hash
from its own config and refuses to run on artifacts from a different
experiment.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import container as ct
from .baselines import DivergenceError, FactorPair, lowrank_recon, storm_laplacian, storm_recon
from .generators import factors_from_channels
from .metrics import frame_report
from .mri_ops import CoilMaps, KSpaceDataset, TrajectorySchedule
from .phantom import (
    ImageSeries,
    PhantomConfig,
    acquire,
    cartesian_masks,
    golden_angle_schedule,
    make_coilmaps,
    make_phantom,
)
from .training import NumericalError, ReconConfig, initialize, reconstruct

log = logging.getLogger("deblur")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
DURATIONS = (14, 28, 42)


class ConfigError(ValueError):
    pass


@dataclass
class AcquisitionConfig:
    n_coils: int = 5
    operator: str = "radial"
    spokes_per_frame: int = 10
    lines_per_frame: int = 8
    noise_sigma: float = 3.0
    coil_seed: int = 0
    noise_seed: int = 1

    def validate(self):
        if self.n_coils < 1:
            raise ValueError("n_coils must be at least 1")
        if self.operator not in ("radial", "cartesian"):
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass
class BaselineConfig:
    method: str = "storm"
    r: int = 30
    lam: float = 1e2
    k_nn: int | None = 20
    sigma_kernel: float | None = None
    iters: int = 60
    seed: int = 0

    def validate(self):
        if self.method not in ("storm", "lowrank"):
            raise ValueError(f"unknown baseline method {self.method!r}")
        if self.r < 1 or self.iters < 1:
            raise ValueError("r and iters must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


def _section(cls, raw: dict, name: str):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
    try:
        obj = cls(**raw)
        obj.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc
    return obj


@dataclass
class PipelineConfig:
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - {"phantom", "acquisition", "baseline", "recon"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = cls(
            _section(PhantomConfig, d.get("phantom"), "phantom"),
            _section(AcquisitionConfig, d.get("acquisition"), "acquisition"),
            _section(BaselineConfig, d.get("baseline"), "baseline"),
            _section(ReconConfig, d.get("recon"), "recon"),
        )
        if cfg.recon.operator != cfg.acquisition.operator:
            raise ConfigError("recon.operator must match acquisition.operator")
        if cfg.recon.r != cfg.baseline.r:
            raise ConfigError("recon.r must match baseline.r")
        return cfg

    def to_dict(self) -> dict:
        return {"phantom": asdict(self.phantom), "acquisition": asdict(self.acquisition),
                "baseline": asdict(self.baseline), "recon": asdict(self.recon)}

    # lineage: each stage depends on a prefix of the sections
    def lineage(self, stage: str) -> dict:
        d = self.to_dict()
        keys = {"phantom": ["phantom"], "acquire": ["phantom", "acquisition"],
                "baseline": ["phantom", "acquisition", "baseline"]}.get(stage)
        if keys is not None:
            return {k: d[k] for k in keys}
        out = {k: d[k] for k in ("phantom", "acquisition", "baseline")}
        recon = dict(d["recon"])
        if stage == "pretrain":
            recon = {k: recon[k] for k in PRETRAIN_KEYS}
        out["recon"] = recon
        return out

    def stage_hash(self, stage: str) -> str:
        return ct.config_hash(self.lineage(stage))


PRETRAIN_KEYS = ("r", "d", "kernel", "temporal_hidden", "init", "latent_init", "pretrain_epochs",
                 "pretrain_step", "pretrain_optimizer", "seed")


def load_config(path: str | None, seed: int | None = None, duration: int | None = None) -> PipelineConfig:
    raw: dict = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = {k: dict(v) if isinstance(v, dict) else v for k, v in raw.items()}
    if seed is not None:
        raw.setdefault("phantom", {})["seed"] = seed
        raw.setdefault("acquisition", {})["coil_seed"] = seed
        raw["acquisition"]["noise_seed"] = seed + 1
        raw.setdefault("baseline", {})["seed"] = seed
        raw.setdefault("recon", {})["seed"] = seed
    if duration is not None:
        if duration not in DURATIONS:
            raise ConfigError(f"--duration must be one of {DURATIONS}")
        raw.setdefault("phantom", {})["duration"] = float(duration)
    raw.setdefault("recon", {}).setdefault("operator", raw.get("acquisition", {}).get("operator", "radial"))
    raw["recon"].setdefault("r", raw.get("baseline", {}).get("r", 30))
    return PipelineConfig.from_dict(raw)


# ---------------------------------------------------------------- stage I/O

STAGE_DIRS = {"phantom": "phantom", "acquire": "acquire"}


def stage_dir(out: Path, stage: str, cfg: PipelineConfig) -> Path:
    if stage in STAGE_DIRS:
        return out / STAGE_DIRS[stage]
    if stage == "baseline":
        return out / f"baseline-{cfg.baseline.method}"
    return out / f"{stage}-{cfg.stage_hash(stage)}"


def _write_stage(directory: Path, stage: str, cfg: PipelineConfig, tensors: dict, inputs: dict,
                 extra: dict | None = None, texts: dict | None = None, timing: dict | None = None):
    directory.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, arr in tensors.items():
        ct.write_tensor(directory / f"{name}.dtn", arr)
        outputs.append(f"{name}.dtn")
    for name, text in (texts or {}).items():
        (directory / name).write_text(text)
        outputs.append(name)
    manifest = ct.RunManifest(stage, cfg.lineage(stage), seeds=_seeds(cfg), inputs=inputs,
                              outputs=outputs, extra=extra or {}, timing=timing or {},
                              record_timing=timing is not None)
    manifest.write(directory / "manifest.json")
    return manifest


def _seeds(cfg: PipelineConfig) -> dict:
    return {"phantom": cfg.phantom.seed, "coil": cfg.acquisition.coil_seed, "noise": cfg.acquisition.noise_seed,
            "baseline": cfg.baseline.seed, "recon": cfg.recon.seed}


def _require(directory: Path, stage: str, cfg: PipelineConfig) -> ct.RunManifest:
    path = directory / "manifest.json"
    if not path.exists():
        raise ConfigError(f"missing upstream stage '{stage}' at {directory}; run it first")
    manifest = ct.RunManifest.read(path)
    expected = cfg.stage_hash(stage)
    if manifest.config_hash != expected:
        raise ConfigError(f"stage '{stage}' at {directory} was produced by a different config "
                          f"(hash {manifest.config_hash}, expected {expected})")
    return manifest


def _digests(directory: Path, names) -> dict:
    return {f"{directory.name}/{n}": ct.file_digest(directory / n) for n in names}


def load_series(directory: Path) -> ImageSeries:
    return ImageSeries(ct.read_tensor(directory / "series.dtn"),
                       json.loads((directory / "manifest.json").read_text())["config"]["phantom"]["frame_dt"])


def load_dataset(out: Path, cfg: PipelineConfig) -> KSpaceDataset:
    ph, aq = out / "phantom", out / "acquire"
    _require(ph, "phantom", cfg)
    _require(aq, "acquire", cfg)
    coil = CoilMaps(ct.read_tensor(aq / "coilmaps.dtn"))
    samples = ct.read_tensor(aq / "samples.dtn")
    if cfg.acquisition.operator == "radial":
        angles = ct.read_tensor(aq / "angles.dtn")
        nav = ct.read_tensor(aq / "navigator.dtn").astype(bool)
        sched = TrajectorySchedule(angles, nav, cfg.phantom.H)
        return KSpaceDataset(samples, coil, cfg.acquisition.noise_sigma, schedule=sched)
    masks = ct.read_tensor(aq / "masks.dtn").astype(bool)
    nav = ct.read_tensor(aq / "navigator.dtn").astype(bool)
    return KSpaceDataset(samples, coil, cfg.acquisition.noise_sigma, masks=masks, nav_mask=nav)


def load_factors(directory: Path) -> FactorPair:
    return FactorPair(ct.read_tensor(directory / "U.dtn"), ct.read_tensor(directory / "V.dtn"))


# ------------------------------------------------------------------ commands

def cmd_phantom(cfg: PipelineConfig, out: Path, timing: bool = False) -> Path:
    t0 = time.perf_counter()
    series = make_phantom(cfg.phantom)
    d = out / "phantom"
    _write_stage(d, "phantom", cfg, {"series": series.frames}, {},
                 extra={"n_frames": series.n_frames, "shape": list(series.shape)},
                 timing={"seconds": time.perf_counter() - t0} if timing else None)
    return d


def cmd_acquire(cfg: PipelineConfig, out: Path, timing: bool = False) -> Path:
    t0 = time.perf_counter()
    ph = out / "phantom"
    _require(ph, "phantom", cfg)
    series = load_series(ph)
    p, a = cfg.phantom, cfg.acquisition
    coil = make_coilmaps(a.n_coils, p.H, p.W, seed=a.coil_seed)
    tensors = {"coilmaps": coil.maps}
    if a.operator == "radial":
        sched = golden_angle_schedule(series.n_frames, a.spokes_per_frame, p.H)
        ds = acquire(series, coil, sched, a.noise_sigma, a.noise_seed)
        tensors.update(angles=sched.angles, navigator=sched.navigator.astype(np.float64))
    else:
        masks, nav = cartesian_masks(series.n_frames, p.H, p.W, a.lines_per_frame)
        ds = acquire(series, coil, noise_sigma=a.noise_sigma, seed=a.noise_seed, masks=masks, nav_mask=nav)
        tensors.update(masks=masks.astype(np.float64), navigator=nav.astype(np.float64))
    tensors["samples"] = ds.samples
    d = out / "acquire"
    _write_stage(d, "acquire", cfg, tensors, _digests(ph, ["series.dtn"]),
                 timing={"seconds": time.perf_counter() - t0} if timing else None)
    return d


def cmd_baseline(cfg: PipelineConfig, out: Path, timing: bool = False) -> Path:
    t0 = time.perf_counter()
    ds = load_dataset(out, cfg)
    b = cfg.baseline
    if b.method == "storm":
        lap = storm_laplacian(ds, b.sigma_kernel, b.k_nn)
        fp = storm_recon(ds, lap, b.r, b.lam, b.iters)
        extra = {"converged": bool(fp.info["converged"]), "sigma_kernel": lap.sigma_kernel,
                 "final_residual": fp.info["residuals"][-1]}
    else:
        fp = lowrank_recon(ds, b.r, b.lam, b.iters, seed=b.seed)
        extra = {"final_objective": fp.info["objective"][-1]}
    d = stage_dir(out, "baseline", cfg)
    _write_stage(d, "baseline", cfg, {"U": fp.U, "V": fp.V}, _digests(out / "acquire", ["samples.dtn"]),
                 extra=extra, timing={"seconds": time.perf_counter() - t0} if timing else None)
    return d


def _baseline_for_init(out: Path, cfg: PipelineConfig) -> Path:
    d = stage_dir(out, "baseline", cfg)
    _require(d, "baseline", cfg)
    return d


def cmd_pretrain(cfg: PipelineConfig, out: Path, timing: bool = False) -> Path:
    t0 = time.perf_counter()
    ds = load_dataset(out, cfg)
    bd = _baseline_for_init(out, cfg)
    fp = load_factors(bd)
    state, info = initialize(cfg.recon, ds, fp, pretrain=True)
    d = stage_dir(out, "pretrain", cfg)
    d.mkdir(parents=True, exist_ok=True)
    names = ct.save_net(state.theta, d, "theta") + ct.save_net(state.phi, d, "phi")
    extra = {k: v for k, v in info.items() if not k.endswith("history")}
    extra["files"] = names
    _write_stage(d, "pretrain", cfg, {"Z": state.Z, "U0": state.U0}, _digests(bd, ["U.dtn", "V.dtn"]),
                 extra=extra, timing={"seconds": time.perf_counter() - t0} if timing else None)
    return d


def _load_init(d: Path):
    from .training import InitState

    return InitState(ct.load_net(d, "theta"), ct.load_net(d, "phi"), ct.read_tensor(d / "Z.dtn"),
                     ct.read_tensor(d / "U0.dtn"))


def cmd_reconstruct(cfg: PipelineConfig, out: Path, timing: bool = False) -> Path:
    t0 = time.perf_counter()
    ds = load_dataset(out, cfg)
    pd = stage_dir(out, "pretrain", cfg)
    _require(pd, "pretrain", cfg)
    init = _load_init(pd)
    ref = load_series(out / "phantom").frames
    d = stage_dir(out, "reconstruct", cfg)
    d.mkdir(parents=True, exist_ok=True)

    def checkpoint(epoch, state):
        cdir = d / f"checkpoint-{epoch:05d}"
        cdir.mkdir(exist_ok=True)
        ct.save_net(state["theta"], cdir, "theta")
        ct.save_net(state["phi"], cdir, "phi")
        ct.write_tensor(cdir / "Z.dtn", state["Z"])
        ct.write_tensor(cdir / "U0.dtn", state["U0"])
        row = {k: (v if k == "epoch" else float(v)) for k, v in state["row"].items()}
        (cdir / "manifest.json").write_text(json.dumps({"epoch": epoch, "config_hash": cfg.stage_hash("reconstruct"),
                                                        "penalties": row}, sort_keys=True, indent=2) + "\n")

    res = reconstruct(ds, cfg.recon, init, reference=ref, checkpoint=checkpoint)
    names = ct.save_net(res.theta, d, "theta") + ct.save_net(res.phi, d, "phi")
    texts = {"trace.csv": res.trace.to_csv()}
    _write_stage(d, "reconstruct", cfg, {"U": res.factors.U, "V": res.factors.V, "Z": res.Z, "U0": init.U0},
                 _digests(pd, ["Z.dtn", "U0.dtn"]),
                 extra={"files": names, "data_scale": res.data_scale, "final_ser_db": float(res.trace.ser[-1])},
                 texts=texts, timing={"seconds": time.perf_counter() - t0} if timing else None)
    return d


METRICS = ("ser", "psnr", "hfen", "ssim")


def _series_from_stage(d: Path, shape) -> np.ndarray:
    if (d / "series.dtn").exists():
        return ct.read_tensor(d / "series.dtn")
    return load_factors(d).series(shape)


def cmd_evaluate(cfg: PipelineConfig, out: Path, recs: list[str], ref: str | None, name: str) -> Path:
    ph = out / "phantom"
    _require(ph, "phantom", cfg)
    truth = load_series(ph)
    shape = truth.shape
    ref_frames = truth.frames if ref is None else _series_from_stage(Path(ref), shape)
    ref_id = "truth" if ref is None else Path(ref).name
    d = out / f"evaluate-{name}"
    d.mkdir(parents=True, exist_ok=True)
    table = io.StringIO()
    w = csv.writer(table, lineterminator="\n")
    w.writerow(["method", "reference"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")])
    summary = []
    outputs = []
    for rec in recs:
        rd = Path(rec)
        series = _series_from_stage(rd, shape)
        row = [rd.name, ref_id]
        for m in METRICS:
            rep = frame_report(series, ref_frames, m, ref_id)
            fname = f"{rd.name}_{m}.csv"
            (d / fname).write_text(rep.to_csv())
            outputs.append(fname)
            row += [repr(rep.mean), repr(rep.std)]
            summary.append({"method": rd.name, **rep.summary()})
        w.writerow(row)
    (d / "table.csv").write_text(table.getvalue())
    (d / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest = ct.RunManifest("evaluate", cfg.lineage("phantom"), inputs={r: Path(r).name for r in recs},
                              outputs=outputs + ["table.csv", "report.json"], extra={"reference": ref_id})
    manifest.write(d / "manifest.json")
    return d


def format_table(table_csv: str) -> str:
    """Mean +/- std rows for printing."""
    rows = list(csv.reader(io.StringIO(table_csv)))
    lines = [f"{'method':<28}" + "".join(f"{m.upper():>20}" for m in METRICS)]
    for r in rows[1:]:
        vals = [float(x) for x in r[2:]]
        cells = [f"{vals[2 * i]:.3f} +/- {vals[2 * i + 1]:.3f}" for i in range(len(METRICS))]
        lines.append(f"{r[0]:<28}" + "".join(f"{c:>20}" for c in cells))
    return "\n".join(lines)


def write_pgm(path: Path, image: np.ndarray, bits: int = 8, vmax: float | None = None) -> np.ndarray:
    """Binary PGM of a magnitude image; returns the stored integer array."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    mag = np.abs(np.asarray(image))
    top = (2 ** bits) - 1
    vmax = float(mag.max()) if vmax is None else float(vmax)
    q = np.zeros(mag.shape, dtype=np.int64) if vmax <= 0 else np.rint(np.clip(mag / vmax, 0, 1) * top).astype(np.int64)
    h, w = mag.shape
    head = f"P5\n{w} {h}\n{top}\n".encode()
    body = q.astype(">u1" if bits == 8 else ">u2").tobytes()
    Path(path).write_bytes(head + body)
    return q


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, parts[1].split())
    top = int(parts[2])
    dtype = ">u1" if top < 256 else ">u2"
    return np.frombuffer(parts[3], dtype=dtype).reshape(h, w).astype(np.int64)


def cmd_export(run: Path, what: str, dest: Path, bits: int = 8, row: int | None = None,
               frames: list[int] | None = None) -> list[Path]:
    run = Path(run)
    if not (run / "manifest.json").exists():
        raise ConfigError(f"unknown run: {run}")
    manifest = json.loads((run / "manifest.json").read_text())
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    if what == "latents":
        if not (run / "Z.dtn").exists():
            raise ConfigError(f"{run} holds no latent trajectory")
        Z = ct.read_tensor(run / "Z.dtn")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame"] + [f"z{k + 1}" for k in range(Z.shape[0])])
        for i in range(Z.shape[1]):
            w.writerow([i] + [repr(float(v)) for v in Z[:, i]])
        path = dest / "latents.csv"
        path.write_text(buf.getvalue())
        written.append(path)
    elif what == "curves":
        if not (run / "trace.csv").exists():
            raise ConfigError(f"{run} holds no training trace")
        path = dest / "curves.csv"
        path.write_text((run / "trace.csv").read_text())
        written.append(path)
    elif what in ("frames", "profile"):
        shape = tuple(manifest["config"]["phantom"][k] for k in ("H", "W"))
        series = _series_from_stage(run, shape)
        if what == "frames":
            vmax = float(np.abs(series).max())
            for i in (range(len(series)) if frames is None else frames):
                path = dest / f"frame_{i:04d}.pgm"
                write_pgm(path, series[i], bits, vmax)
                written.append(path)
        else:
            row = shape[0] // 2 if row is None else row
            if not 0 <= row < shape[0]:
                raise ConfigError(f"row {row} outside the image")
            prof = np.abs(series[:, row, :])
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["frame"] + [f"x{j}" for j in range(prof.shape[1])])
            for i, line in enumerate(prof):
                w.writerow([i] + [repr(float(v)) for v in line])
            path = dest / f"profile_row{row}.csv"
            path.write_text(buf.getvalue())
            written.append(path)
    else:
        raise ConfigError(f"unknown export target {what!r}")
    return written


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deblur", description="Generator-based dynamic MRI reconstruction pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="pipeline JSON config")
        sp.add_argument("--out", required=True, help="run directory")
        sp.add_argument("--seed", type=int, help="override every seed")
        sp.add_argument("--duration", type=int, choices=DURATIONS, help="acquisition length preset in seconds")
        sp.add_argument("--timing", action="store_true", help="record wall time in manifests")

    for name in ("phantom", "acquire", "baseline", "pretrain", "reconstruct"):
        sp = sub.add_parser(name)
        common(sp)
        if name == "baseline":
            sp.add_argument("--method", choices=("storm", "lowrank"), help="override baseline.method")
        if name in ("pretrain", "reconstruct"):
            sp.add_argument("--init", choices=("storm", "lowrank", "random"), help="override recon.init")
    ev = sub.add_parser("evaluate")
    common(ev)
    ev.add_argument("--rec", action="append", required=True, help="stage directory holding factors (repeatable)")
    ev.add_argument("--ref", help="reference stage directory (default: phantom ground truth)")
    ev.add_argument("--name", default="report")
    ex = sub.add_parser("export")
    ex.add_argument("--run", required=True, help="stage directory to export from")
    ex.add_argument("--what", required=True, choices=("latents", "frames", "curves", "profile"))
    ex.add_argument("--dest", required=True)
    ex.add_argument("--bits", type=int, default=8, choices=(8, 16))
    ex.add_argument("--row", type=int)
    ex.add_argument("--frames", type=int, nargs="*")
    return p


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config, args.seed, args.duration)
    if getattr(args, "method", None):
        cfg.baseline.method = args.method
    if getattr(args, "init", None):
        cfg.recon.init = args.init
        if args.init in ("storm", "lowrank"):
            cfg.baseline.method = args.init
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            paths = cmd_export(Path(args.run), args.what, Path(args.dest), args.bits, args.row, args.frames)
            print(f"wrote {len(paths)} file(s) to {args.dest}")
            return EXIT_OK
        cfg = _config_from_args(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "evaluate":
            d = cmd_evaluate(cfg, out, args.rec, args.ref, args.name)
            print(format_table((d / "table.csv").read_text()))
            return EXIT_OK
        fn = {"phantom": cmd_phantom, "acquire": cmd_acquire, "baseline": cmd_baseline,
              "pretrain": cmd_pretrain, "reconstruct": cmd_reconstruct}[args.command]
        d = fn(cfg, out, args.timing)
        print(d)
        return EXIT_OK
    except (ConfigError, ct.ContainerError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DivergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
