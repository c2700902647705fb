"""Raster container: one JSON header line followed by a raw sample blob.

The header holds ``dims`` ([C, T, H, W] or [C, H, W]), ``dtype`` ("f32" or
"f64"), ``band_names``, a GDAL-style ``geotransform``, ``crs`` and the
``transformed`` flag, in that key order. The payload is little-endian,
row-major. The header is parsed and checked before the payload is touched.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .fsutil import atomic_write, read_bytes
from .postprocess.polygons import RasterMeta

MAGIC = b"FBRASTER1 "
DTYPES = {"f32": "<f4", "f64": "<f8"}
DEFAULT_GEOTRANSFORM = (0.0, 10.0, 0.0, 0.0, 0.0, -10.0)


@dataclass
class RasterContainer:
    data: np.ndarray
    band_names: list = field(default_factory=list)
    geotransform: tuple = DEFAULT_GEOTRANSFORM
    crs: str = ""
    transformed: bool = False
    dtype: str = "f64"

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise FormatError(f"dtype must be one of {sorted(DTYPES)}")
        self.data = np.ascontiguousarray(self.data, dtype=DTYPES[self.dtype]).astype(
            np.float64 if self.dtype == "f64" else np.float32)
        if self.data.ndim not in (3, 4):
            raise FormatError(f"raster must be C x H x W or C x T x H x W, got shape {self.data.shape}")
        if not self.band_names:
            self.band_names = [f"band{i}" for i in range(self.data.shape[0])]
        self.band_names = [str(b) for b in self.band_names]
        if len(self.band_names) != self.data.shape[0]:
            raise FormatError(f"{len(self.band_names)} band names for {self.data.shape[0]} bands")
        self.geotransform = tuple(float(v) for v in self.geotransform)
        if len(self.geotransform) != 6:
            raise FormatError("geotransform needs 6 values")

    @property
    def meta(self) -> RasterMeta:
        H, W = self.data.shape[-2:]
        return RasterMeta(W, H, self.geotransform, self.crs)

    def band(self, name: str, fallback: int | None = None) -> np.ndarray:
        if name in self.band_names:
            return self.data[self.band_names.index(name)]
        if fallback is not None and fallback < self.data.shape[0]:
            return self.data[fallback]
        raise FormatError(f"raster has no band {name!r} (bands: {self.band_names})")

    def header(self) -> dict:
        return {"dims": list(self.data.shape), "dtype": self.dtype, "band_names": list(self.band_names),
                "geotransform": list(self.geotransform), "crs": self.crs,
                "transformed": bool(self.transformed)}

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), separators=(",", ":")).encode("utf-8")
        return MAGIC + head + b"\n" + self.data.astype(DTYPES[self.dtype]).tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "RasterContainer":
        if not data.startswith(MAGIC):
            raise FormatError("not a raster container")
        nl = data.find(b"\n")
        if nl < 0:
            raise FormatError("raster header is not terminated")
        try:
            h = json.loads(data[len(MAGIC):nl].decode("utf-8"))
            dims = [int(d) for d in h["dims"]]
            dtype = h["dtype"]
            if dtype not in DTYPES:
                raise FormatError(f"unsupported dtype {dtype!r}")
            if len(dims) not in (3, 4) or min(dims) < 1:
                raise FormatError(f"bad dims {dims}")
            names, gt, crs, tr = h["band_names"], h["geotransform"], h["crs"], h["transformed"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"malformed raster header: {exc}") from None
        itemsize = np.dtype(DTYPES[dtype]).itemsize
        expected = int(np.prod(dims, dtype=np.int64)) * itemsize
        payload = data[nl + 1:]
        if len(payload) != expected:
            raise FormatError(f"payload has {len(payload)} bytes, header implies {expected}")
        arr = np.frombuffer(payload, dtype=DTYPES[dtype]).reshape(dims)
        return cls(arr, names, tuple(gt), str(crs), bool(tr), dtype)

    def write(self, path) -> None:
        atomic_write(path, self.to_bytes())

    @classmethod
    def read(cls, path) -> "RasterContainer":
        return cls.from_bytes(read_bytes(path))
