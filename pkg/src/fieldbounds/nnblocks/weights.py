"""Named parameter bundles with a manifest, plus their on-disk format.

File layout: one UTF-8 JSON line holding the manifest (name, shape,
init_rule, seed and element offset per tensor), a newline, then every tensor
as row-major little-endian float64, concatenated in manifest order.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.stats import truncnorm

from ..errors import FormatError, WeightError
from ..fsutil import atomic_write, read_bytes

MAGIC = "fieldbounds-weights/1"
INIT_RULES = ("trunc_normal_fan_in", "zeros", "ones")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple
    init_rule: str = "trunc_normal_fan_in"
    fan_in: int = 1


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    shape: tuple
    init_rule: str
    seed: int


def tensor_seed(seed: int, name: str) -> int:
    """Per-tensor seed, stable under reordering or insertion of other tensors."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def init_tensor(spec: ParamSpec, seed: int) -> np.ndarray:
    if spec.init_rule == "zeros":
        return np.zeros(spec.shape)
    if spec.init_rule == "ones":
        return np.ones(spec.shape)
    if spec.init_rule != "trunc_normal_fan_in":
        raise FormatError(f"unknown init rule {spec.init_rule!r}")
    rng = np.random.default_rng(seed)
    std = 1.0 / np.sqrt(spec.fan_in)
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=spec.shape, random_state=rng).reshape(spec.shape)


class ModelWeights:
    def __init__(self, tensors: dict, manifest: Iterable[ManifestEntry]):
        self.manifest = list(manifest)
        self.tensors = {}
        for e in self.manifest:
            if e.name not in tensors:
                raise WeightError(f"manifest names {e.name!r} but no tensor is present")
            t = np.ascontiguousarray(tensors[e.name], dtype=np.float64)
            if t.shape != tuple(e.shape):
                raise WeightError(f"{e.name}: tensor shape {t.shape} != manifest shape {tuple(e.shape)}")
            self.tensors[e.name] = t
        if len(self.tensors) != len(self.manifest):
            raise WeightError("duplicate names in manifest")

    @classmethod
    def initialise(cls, specs: Iterable[ParamSpec], seed: int) -> "ModelWeights":
        tensors, manifest = {}, []
        for s in specs:
            ts = tensor_seed(seed, s.name)
            tensors[s.name] = init_tensor(s, ts)
            manifest.append(ManifestEntry(s.name, tuple(s.shape), s.init_rule, ts))
        return cls(tensors, manifest)

    def __getitem__(self, name):
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightError(f"missing weight {name!r}") from None

    def __contains__(self, name):
        return name in self.tensors

    def __len__(self):
        return len(self.manifest)

    def names(self):
        return [e.name for e in self.manifest]

    def check(self, specs: Iterable[ParamSpec]) -> None:
        """Every parameter a model needs must exist with the expected shape."""
        for s in specs:
            if s.name not in self.tensors:
                raise WeightError(f"missing weight {s.name!r}")
            got = self.tensors[s.name].shape
            if got != tuple(s.shape):
                raise WeightError(f"{s.name}: shape {got} does not match expected {tuple(s.shape)}")

    def replace(self, tensors: dict) -> "ModelWeights":
        new = dict(self.tensors)
        new.update(tensors)
        return ModelWeights(new, self.manifest)

    def count(self, names=None) -> int:
        names = self.names() if names is None else names
        return int(sum(self.tensors[n].size for n in names))

    def manifest_doc(self) -> list:
        out, offset = [], 0
        for e in self.manifest:
            out.append({"name": e.name, "shape": list(e.shape), "init_rule": e.init_rule,
                        "seed": e.seed, "offset": offset})
            offset += int(np.prod(e.shape, dtype=np.int64))
        return out

    def to_bytes(self) -> bytes:
        header = json.dumps({"format": MAGIC, "dtype": "<f8", "tensors": self.manifest_doc()},
                            separators=(",", ":"), sort_keys=False)
        blob = b"".join(self.tensors[e.name].astype("<f8").tobytes(order="C") for e in self.manifest)
        return header.encode("utf-8") + b"\n" + blob

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelWeights":
        nl = data.find(b"\n")
        if nl < 0:
            raise FormatError("weights file has no manifest line")
        try:
            doc = json.loads(data[:nl].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"unreadable weights manifest: {exc}") from None
        if not isinstance(doc, dict) or doc.get("format") != MAGIC or doc.get("dtype") != "<f8":
            raise FormatError("not a fieldbounds weights file")
        blob = data[nl + 1:]
        entries, tensors, offset = [], {}, 0
        try:
            for item in doc["tensors"]:
                shape = tuple(int(d) for d in item["shape"])
                n = int(np.prod(shape, dtype=np.int64))
                if int(item["offset"]) != offset:
                    raise FormatError(f"{item['name']}: offset {item['offset']} != expected {offset}")
                chunk = blob[8 * offset: 8 * (offset + n)]
                if len(chunk) != 8 * n:
                    raise FormatError("weights payload is truncated")
                tensors[item["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
                entries.append(ManifestEntry(item["name"], shape, item["init_rule"], int(item["seed"])))
                offset += n
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"malformed weights manifest: {exc}") from None
        if len(blob) != 8 * offset:
            raise FormatError(f"weights payload has {len(blob)} bytes, manifest expects {8 * offset}")
        return cls(tensors, entries)

    def save(self, path) -> None:
        atomic_write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelWeights":
        return cls.from_bytes(read_bytes(path))
