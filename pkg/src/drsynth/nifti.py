"""Minimal NIfTI-1 reader/writer for 3D volumes.

Covers exactly what the pipeline needs: single-file ``.nii`` (magic
``n+1``) plus the header-pair variant (``ni1`` with a sibling ``.img``),
optional gzip on either, the five scalar datatypes uint8/int16/int32/
float32/float64, ``scl_slope``/``scl_inter`` scaling, and the sform
(fallback qform, fallback diagonal-spacing) affine.  NIfTI-2, DICOM,
time series (nt > 1), and memory mapping are out of scope.

Writing always emits little-endian single-file ``n+1`` with a 348-byte
header, 4 pad bytes, and the raw array in x-fastest order, so a write/read
cycle reproduces float payloads bit-for-bit (including NaN and signed
zeros).  Gzip output is deterministic (mtime 0, no embedded name).
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np

from .errors import FormatError, IoError, TruncatedFile, UnsupportedDatatype, UnsupportedShape
from .volume import LabelMap, LabelScheme, Volume3D

HEADER_SIZE = 348
_STRUCT = "<i10s18sihcc8h3fhhhh8ffffhbbffffii80s24shh3f3f4f4f4f16s4s"
assert struct.calcsize(_STRUCT) == HEADER_SIZE

_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
_CODES = {v: k for k, v in _DTYPES.items()}


def _is_gzip(blob: bytes) -> bool:
    return blob[:2] == b"\x1f\x8b"


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if _is_gzip(blob):
        try:
            blob = gzip.decompress(blob)
        except OSError as exc:
            raise FormatError(f"bad gzip stream in {path}: {exc}") from exc
    return blob


def _unpack_header(blob: bytes, path):
    if len(blob) < HEADER_SIZE:
        raise TruncatedFile(f"{path}: file shorter than the 348-byte header")
    fields = struct.unpack(_STRUCT, blob[:HEADER_SIZE])
    swapped = False
    if fields[0] != HEADER_SIZE:
        fields = struct.unpack(">" + _STRUCT[1:], blob[:HEADER_SIZE])
        swapped = True
        if fields[0] != HEADER_SIZE:
            raise FormatError(f"{path}: sizeof_hdr is not 348 in either byte order")
    keys = (
        "sizeof_hdr", "data_type", "db_name", "extents", "session_error", "regular",
        "dim_info", "dim", "intent_p", "intent_code", "datatype", "bitpix",
        "slice_start", "pixdim", "vox_offset", "scl_slope", "scl_inter", "slice_end",
        "slice_code", "xyzt_units", "cal_max", "cal_min", "slice_duration", "toffset",
        "glmax", "glmin", "descrip", "aux_file", "qform_code", "sform_code",
        "quatern", "qoffset", "srow_x", "srow_y", "srow_z", "intent_name", "magic",
    )
    out = {}
    i = 0
    for key in keys:
        if key == "dim":
            out[key] = fields[i : i + 8]
            i += 8
        elif key in ("intent_p", "quatern", "qoffset"):
            out[key] = fields[i : i + 3]
            i += 3
        elif key == "pixdim":
            out[key] = fields[i : i + 8]
            i += 8
        elif key in ("srow_x", "srow_y", "srow_z"):
            out[key] = fields[i : i + 4]
            i += 4
        else:
            out[key] = fields[i]
            i += 1
    return out, swapped


def _affine_from_header(hdr, spacing) -> np.ndarray:
    aff = np.eye(4)
    if hdr["sform_code"] > 0:
        aff[0, :] = hdr["srow_x"]
        aff[1, :] = hdr["srow_y"]
        aff[2, :] = hdr["srow_z"]
        return aff
    if hdr["qform_code"] > 0:
        b, c, d = (float(q) for q in hdr["quatern"])
        a = np.sqrt(max(0.0, 1.0 - b * b - c * c - d * d))
        rot = np.array(
            [
                [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
                [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
                [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
            ]
        )
        qfac = float(hdr["pixdim"][0]) or 1.0
        scales = np.array([spacing[0], spacing[1], spacing[2] * qfac])
        aff[:3, :3] = rot * scales[np.newaxis, :]
        aff[:3, 3] = hdr["qoffset"]
        return aff
    aff[:3, :3] = np.diag(spacing)
    return aff


def read_nifti(path, scheme: LabelScheme | None = None):
    """Read a 3D NIfTI-1 file.

    With a declared ``scheme`` the result is a LabelMap (integer data
    required on disk; float data is accepted only when every value is
    integral).  Without one the result is a Volume3D with values cast to
    float32 and intensity scaling applied.
    """
    blob = _read_bytes(path)
    hdr, swapped = _unpack_header(blob, path)

    magic = hdr["magic"]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise FormatError(f"{path}: bad magic {magic!r}")

    dim = hdr["dim"]
    if not (dim[0] == 3 or (dim[0] == 4 and dim[4] == 1)):
        raise UnsupportedShape(f"{path}: dim[0]={dim[0]} (nt={dim[4]}) is not a 3D volume")
    shape = tuple(int(d) for d in dim[1:4])
    if min(shape) < 1:
        raise UnsupportedShape(f"{path}: non-positive dims {shape}")

    if hdr["datatype"] not in _DTYPES:
        raise UnsupportedDatatype(f"{path}: datatype code {hdr['datatype']}")
    dt = _DTYPES[hdr["datatype"]]
    if swapped:
        dt = dt.newbyteorder(">")

    if magic == b"n+1\x00":
        offset = int(round(hdr["vox_offset"]))
        if offset < HEADER_SIZE:
            raise FormatError(f"{path}: vox_offset {offset} overlaps the header")
        payload = blob
    else:
        base, ext = os.path.splitext(str(path))
        if ext == ".gz":
            base, _ = os.path.splitext(base)
        img = base + ".img"
        if not os.path.exists(img) and os.path.exists(img + ".gz"):
            img = img + ".gz"
        payload = _read_bytes(img)
        offset = 0

    need = int(np.prod(shape)) * dt.itemsize
    if len(payload) < offset + need:
        raise TruncatedFile(f"{path}: expected {need} data bytes, found {len(payload) - offset}")
    flat = np.frombuffer(payload, dtype=dt, count=int(np.prod(shape)), offset=offset)
    data = flat.reshape(shape, order="F")
    if swapped:
        data = data.astype(dt.newbyteorder("="))

    pix = hdr["pixdim"][1:4]
    spacing = tuple(float(p) if p > 0 else 1.0 for p in pix)
    affine = _affine_from_header(hdr, spacing)

    if scheme is not None:
        if np.issubdtype(data.dtype, np.floating):
            if not np.array_equal(data, np.round(data)):
                raise FormatError(f"{path}: non-integral values cannot form a label map")
            data = data.astype(np.int32)
        return LabelMap(data.astype(np.int32), spacing, scheme, affine)

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    out = data
    if (slope not in (0.0, 1.0)) or inter != 0.0:
        eff = slope if slope != 0.0 else 1.0
        out = data.astype(np.float64) * eff + inter
    return Volume3D(np.asarray(out, dtype=np.float32), spacing, affine)


def _pack_header(shape, spacing, affine, code, bitpix) -> bytes:
    dim = [3, shape[0], shape[1], shape[2], 1, 1, 1, 1]
    pixdim = [1.0, spacing[0], spacing[1], spacing[2], 0.0, 0.0, 0.0, 0.0]
    return struct.pack(
        _STRUCT,
        HEADER_SIZE,
        b"", b"", 0, 0, b"r", b"\x00",
        *dim,
        0.0, 0.0, 0.0,
        0,
        code, bitpix, 0,
        *pixdim,
        352.0, 1.0, 0.0,
        0, 0, 2,  # slice_end, slice_code, xyzt_units = mm
        0.0, 0.0, 0.0, 0.0, 0, 0,
        b"drsynth", b"",
        0, 1,  # qform off, sform on
        0.0, 0.0, 0.0,
        0.0, 0.0, 0.0,
        *(float(v) for v in affine[0, :]),
        *(float(v) for v in affine[1, :]),
        *(float(v) for v in affine[2, :]),
        b"", b"n+1\x00",
    )


def write_nifti(vol, path) -> None:
    """Write a Volume3D (float32) or LabelMap (int16/int32) to ``path``.

    The write is atomic (temp file + rename) and byte-deterministic, with
    gzip compression when the name ends in ``.gz``.
    """
    if isinstance(vol, LabelMap):
        arr = vol.data
        arr = arr.astype(np.int16) if (arr.size == 0 or arr.max() <= np.iinfo(np.int16).max) else arr.astype(np.int32)
    elif isinstance(vol, Volume3D):
        arr = vol.data.astype(np.float32, copy=False)
    else:
        raise TypeError(f"cannot write {type(vol).__name__} as NIfTI")

    header = _pack_header(vol.dims, vol.spacing, vol.affine, _CODES[arr.dtype], arr.dtype.itemsize * 8)
    blob = header + b"\x00\x00\x00\x00" + arr.tobytes(order="F")
    path = str(path)
    if path.endswith(".gz"):
        import io

        buf = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            gz.write(blob)
        blob = buf.getvalue()

    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from exc
