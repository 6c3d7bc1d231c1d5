"""Binary tensor container, canonical JSON and run manifests.

A container file is ``b"DTN1"``, a dtype byte (1 = float64, 2 = complex128
stored as interleaved real/imaginary float64), an ``ndim`` byte, ``ndim``
little-endian u64 extents and the row-major little-endian payload.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MAGIC",
    "ContainerError",
    "encode_tensor",
    "decode_tensor",
    "write_tensor",
    "read_tensor",
    "canonical_json",
    "config_hash",
    "file_digest",
    "RunManifest",
    "save_net",
    "load_net",
]

MAGIC = b"DTN1"
_CODES = {1: np.dtype("<f8"), 2: np.dtype("<c16")}


class ContainerError(ValueError):
    pass


def encode_tensor(a) -> bytes:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        code = 2
    elif np.issubdtype(a.dtype, np.number) or a.dtype == bool:
        code = 1
    else:
        raise ContainerError(f"cannot store dtype {a.dtype}")
    if a.ndim > 255:
        raise ContainerError("too many dimensions")
    payload = np.ascontiguousarray(a, dtype=_CODES[code]).tobytes(order="C")
    head = MAGIC + struct.pack("<BB", code, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + payload


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise ContainerError("not a DTN1 container")
    code, ndim = struct.unpack_from("<BB", blob, 4)
    if code not in _CODES:
        raise ContainerError(f"unknown dtype code {code}")
    off = 6 + 8 * ndim
    if len(blob) < off:
        raise ContainerError("truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", blob, 6)
    dtype = _CODES[code]
    expected = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
    if len(blob) - off != expected:
        raise ContainerError(f"payload has {len(blob) - off} bytes, header implies {expected}")
    return np.frombuffer(blob, dtype=dtype, offset=off).reshape(shape).astype(dtype.newbyteorder("="))


def write_tensor(path, a) -> Path:
    path = Path(path)
    path.write_bytes(encode_tensor(a))
    return path


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats by ``repr``; stable under key reordering."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Stage record: the config that produced the outputs and where they came from.

    Timing is kept out of the serialised form unless ``record_timing`` is set,
    so reruns stay byte-identical.
    """

    stage: str
    config: dict
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    record_timing: bool = False

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def to_dict(self) -> dict:
        d = {
            "stage": self.stage,
            "config": self.config,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "extra": self.extra,
        }
        if self.record_timing:
            d["timing"] = self.timing
        return d

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        m = cls(d["stage"], d["config"], d.get("seeds", {}), d.get("inputs", {}), d.get("outputs", []),
                d.get("extra", {}), d.get("timing", {}), "timing" in d)
        if d.get("config_hash") not in (None, m.config_hash):
            raise ContainerError(f"{path}: stored config hash does not match its config")
        return m


def save_net(net, directory, prefix: str) -> list[str]:
    """One container per parameter plus ``<prefix>.json`` listing kind and shapes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        for tag, arr in (("w", w), ("b", b)):
            name = f"{prefix}_{tag}{l}.dtn"
            write_tensor(directory / name, arr)
            names.append(name)
    meta = {"kind": net.kind, "files": names, "shapes": [list(p.shape) for p in net.params]}
    (directory / f"{prefix}.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return names + [f"{prefix}.json"]


def load_net(directory, prefix: str):
    from .generators import GeneratorNet

    directory = Path(directory)
    meta = json.loads((directory / f"{prefix}.json").read_text())
    params = [read_tensor(directory / name) for name in meta["files"]]
    for p, shape in zip(params, meta["shapes"]):
        if list(p.shape) != shape:
            raise ContainerError(f"{prefix}: stored shape {p.shape} disagrees with manifest {shape}")
    return GeneratorNet(meta["kind"], params[0::2], params[1::2])
