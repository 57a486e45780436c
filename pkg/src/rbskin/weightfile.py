"""Binary weight-field files (``RBSW``): sites, features, kernel radii, handles."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .field import KernelField
from .geometry import BoundaryShape, Normalization
from .skeleton import BONE, POINT, Handle, HandleSet

MAGIC = b"RBSW"
VERSION = 1
_KINDS = {POINT: 0, BONE: 1}


class WeightFileError(ValueError):
    pass


class HashMismatch(WeightFileError):
    pass


@dataclass
class WeightFile:
    sites: np.ndarray
    features: np.ndarray
    sigma: float
    eps_lagrange: float
    eps_neumann: float
    normalization: Normalization
    handles: HandleSet
    mesh_hash: int
    radius_factor: float = 3.0
    visibility: bool = True
    w_low: float = 0.1
    w_high: float = 0.4

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @classmethod
    def from_field(cls, fld: KernelField, w_low=0.1, w_high=0.4) -> "WeightFile":
        return cls(fld.sites, fld.features, fld.sigma, fld.handles.eps, fld.eps_neumann,
                   fld.shape.normalization, fld.handles, fld.shape.content_hash,
                   fld.radius_factor, fld.visibility, w_low, w_high)

    def to_field(self, shape: BoundaryShape, check_hash=True) -> KernelField:
        """Rebuild the field on ``shape``, refusing a different mesh unless told not to."""
        if check_hash and shape.content_hash != self.mesh_hash:
            raise HashMismatch(
                f"mesh hash {shape.content_hash:016x} does not match the weight file "
                f"({self.mesh_hash:016x}); pass the mesh used for solving or disable the check")
        if shape.dim != self.dim:
            raise WeightFileError(f"weight file is {self.dim}D, mesh is {shape.dim}D")
        return KernelField(shape, self.handles, self.sites, self.features, self.sigma,
                           eps_neumann=self.eps_neumann, radius_factor=self.radius_factor,
                           visibility=self.visibility)


def _pack(fmt, *vals):
    return struct.pack("<" + fmt, *vals)


def dumps(wf: WeightFile) -> bytes:
    n, d = wf.sites.shape
    k = wf.features.shape[1]
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_pack("IIII", VERSION, d, k, n))
    out.write(_pack("ddd", wf.sigma, wf.eps_lagrange, wf.eps_neumann))
    out.write(np.asarray(wf.normalization.to_array(), dtype="<f8").tobytes())
    out.write(np.ascontiguousarray(wf.sites, dtype="<f8").tobytes())
    out.write(np.ascontiguousarray(wf.features, dtype="<f8").tobytes())
    out.write(_pack("I", len(wf.handles)))
    for h in wf.handles:
        out.write(_pack("B", _KINDS[h.kind]))
        out.write(np.ascontiguousarray(h.points, dtype="<f8").tobytes())
    # trailing metadata needed to rebuild the field exactly
    out.write(_pack("QdBdd", wf.mesh_hash, wf.radius_factor, int(wf.visibility), wf.w_low, wf.w_high))
    return out.getvalue()


def loads(data: bytes) -> WeightFile:
    buf = memoryview(data)
    pos = 0

    def take(nbytes):
        nonlocal pos
        if pos + nbytes > len(buf):
            raise WeightFileError("truncated weight file")
        chunk = buf[pos:pos + nbytes]
        pos += nbytes
        return chunk

    def unpack(fmt):
        return struct.unpack("<" + fmt, take(struct.calcsize("<" + fmt)))

    def floats(count):
        return np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)

    if bytes(take(4)) != MAGIC:
        raise WeightFileError("not an RBSW weight file")
    version, d, k, n = unpack("IIII")
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version}")
    if d not in (2, 3) or k < 1 or n < 1:
        raise WeightFileError(f"bad header: d={d}, K={k}, N={n}")
    sigma, eps_l, eps_n = unpack("ddd")
    norm = Normalization.from_array(floats(d + 1))
    sites = floats(n * d).reshape(n, d)
    feats = floats(n * k).reshape(n, k)
    (count,) = unpack("I")
    handles = []
    for _ in range(count):
        (kind,) = unpack("B")
        if kind == 0:
            handles.append(Handle.point(floats(d)))
        elif kind == 1:
            p = floats(2 * d).reshape(2, d)
            handles.append(Handle.bone(p[0], p[1]))
        else:
            raise WeightFileError(f"unknown handle kind byte {kind}")
    if count != k:
        raise WeightFileError(f"{count} handles stored for K={k}")
    mesh_hash, rf, vis, w_l, w_h = unpack("QdBdd")
    if pos != len(buf):
        raise WeightFileError("trailing bytes after weight file")
    return WeightFile(sites, feats, sigma, eps_l, eps_n, norm, HandleSet(handles, eps_l),
                      mesh_hash, rf, bool(vis), w_l, w_h)


def save(path, wf: WeightFile) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(wf))


def load(path) -> WeightFile:
    with open(path, "rb") as fh:
        return loads(fh.read())
