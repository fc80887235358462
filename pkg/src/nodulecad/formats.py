"""Binary volume/weight containers and the CSV exchange formats."""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .detect.boxes import Candidate, Source
from .metrics import FrocCurve, NoduleAnnotation
from .volume import CtVolume, GrayVolume

PathLike = Union[str, Path]

MPV_MAGIC = b"MPVOL001"
MPW_MAGIC = b"MPWGT001"
_MPV_HEADER = struct.Struct("<8s3I3d3dB")
_DTYPES = {0: np.dtype("<i2"), 1: np.dtype("u1")}

CANDIDATE_HEADER = ["scan_id", "x_mm", "y_mm", "z_mm", "radius_mm", "score", "source"]
ANNOTATION_HEADER = ["scan_id", "x_mm", "y_mm", "z_mm", "diameter_mm", "votes"]
FROC_HEADER = ["fp_per_scan", "sensitivity"]


class FormatError(ValueError):
    """Malformed input; ``offset`` is the byte offset of the problem."""

    def __init__(self, msg: str, offset: int = 0, path: str = ""):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{msg} (byte offset {offset})")
        self.offset = offset


# --------------------------------------------------------------------------
# MPV1 volumes


def encode_volume(v: CtVolume) -> bytes:
    if v.voxels.dtype == np.uint8:
        tag = 1
    elif v.voxels.dtype == np.int16:
        tag = 0
    else:
        raise ValueError(f"MPV1 stores int16 or uint8 voxels, got {v.voxels.dtype}")
    nx, ny, nz = v.dims
    head = _MPV_HEADER.pack(MPV_MAGIC, nx, ny, nz, *v.spacing, *v.origin, tag)
    return head + np.ascontiguousarray(v.voxels, dtype=_DTYPES[tag]).tobytes()


def decode_volume(buf: bytes, path: str = "") -> CtVolume:
    if len(buf) < 8 or buf[:8] != MPV_MAGIC:
        raise FormatError("bad MPV1 magic", 0, path)
    if len(buf) < _MPV_HEADER.size:
        raise FormatError("truncated MPV1 header", len(buf), path)
    _, nx, ny, nz, sx, sy, sz, ox, oy, oz, tag = _MPV_HEADER.unpack_from(buf)
    if tag not in _DTYPES:
        raise FormatError(f"unknown dtype tag {tag}", _MPV_HEADER.size - 1, path)
    if min(nx, ny, nz) < 1:
        raise FormatError("dims must be >= 1", 8, path)
    if min(sx, sy, sz) <= 0 or not np.all(np.isfinite([sx, sy, sz, ox, oy, oz])):
        raise FormatError("spacing must be finite and > 0", 20, path)
    dt = _DTYPES[tag]
    need = nx * ny * nz * dt.itemsize
    body = len(buf) - _MPV_HEADER.size
    if body != need:
        off = _MPV_HEADER.size + min(body, need)
        raise FormatError(f"voxel payload is {body} bytes, expected {need}", off, path)
    vox = np.frombuffer(buf, dtype=dt, offset=_MPV_HEADER.size).reshape(nz, ny, nx)
    vox = vox.astype(dt.newbyteorder("="))
    cls = GrayVolume if tag == 1 else CtVolume
    return cls(vox, (sx, sy, sz), (ox, oy, oz))


def write_volume(path: PathLike, v: CtVolume) -> None:
    Path(path).write_bytes(encode_volume(v))


def read_volume(path: PathLike) -> CtVolume:
    return decode_volume(Path(path).read_bytes(), str(path))


# --------------------------------------------------------------------------
# MPW1 weights


def encode_weights(weights: Dict[str, np.ndarray]) -> bytes:
    out = [MPW_MAGIC, struct.pack("<I", len(weights))]
    for name in sorted(weights):
        arr = np.asarray(weights[name], dtype="<f4")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode_weights(buf: bytes, path: str = "") -> Dict[str, np.ndarray]:
    if buf[:8] != MPW_MAGIC:
        raise FormatError("bad MPW1 magic", 0, path)
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError("truncated MPW1 data", pos, path)
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    weights = {}
    for _ in range(count):
        start = pos
        (nlen,) = struct.unpack("<H", take(2))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not UTF-8", start + 2, path) from None
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape)
        if name in weights:
            raise FormatError(f"duplicate tensor {name!r}", start, path)
        weights[name] = data.astype(np.float64)
    if pos != len(buf):
        raise FormatError("trailing bytes after last tensor", pos, path)
    return weights


def write_weights(path: PathLike, weights: Dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_weights(weights))


def read_weights(path: PathLike) -> Dict[str, np.ndarray]:
    return decode_weights(Path(path).read_bytes(), str(path))


# --------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def candidates_to_csv(cands: Sequence[Candidate]) -> str:
    with_fpr = any(c.fpr_score is not None for c in cands)
    header = CANDIDATE_HEADER + (["fpr_score"] if with_fpr else [])
    rows = []
    for c in cands:
        row = [c.scan_id, *map(_fmt, c.center), _fmt(c.radius_mm), _fmt(c.score), c.source.value]
        if with_fpr:
            row.append(_fmt(c.fpr_score) if c.fpr_score is not None else "")
        rows.append(row)
    return _csv_text(header, rows)


def _read_rows(text: str, header: Sequence[str], path: str, optional_tail: Sequence[str] = ()):
    """Yield ``(byte_offset, dict)`` per data row after checking the header."""
    lines = text.splitlines(keepends=True)
    if not lines:
        raise FormatError("empty CSV file", 0, path)
    got = lines[0].rstrip("\r\n").split(",")
    if got != list(header) and got != list(header) + list(optional_tail):
        raise FormatError(f"unexpected CSV header {got}, expected {list(header) + list(optional_tail)}", 0, path)
    offset = len(lines[0].encode("utf-8"))
    for line in lines[1:]:
        stripped = line.rstrip("\r\n")
        if stripped:
            fields = next(csv.reader([stripped]))
            if len(fields) != len(got):
                raise FormatError(f"expected {len(got)} fields, got {len(fields)}", offset, path)
            yield offset, dict(zip(got, fields))
        offset += len(line.encode("utf-8"))


def _float(row, key, offset, path) -> float:
    try:
        return float(row[key])
    except ValueError:
        raise FormatError(f"{key}: {row[key]!r} is not a number", offset, path) from None


def candidates_from_csv(text: str, path: str = "") -> List[Candidate]:
    out = []
    for off, row in _read_rows(text, CANDIDATE_HEADER, path, ["fpr_score"]):
        try:
            src = Source(row["source"])
        except ValueError:
            raise FormatError(f"unknown source {row['source']!r}", off, path) from None
        fpr = row.get("fpr_score")
        try:
            out.append(
                Candidate(
                    row["scan_id"],
                    tuple(_float(row, k, off, path) for k in ("x_mm", "y_mm", "z_mm")),
                    _float(row, "radius_mm", off, path),
                    _float(row, "score", off, path),
                    src,
                    _float(row, "fpr_score", off, path) if fpr else None,
                )
            )
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(str(e), off, path) from None
    return out


def annotations_to_csv(anns: Sequence[NoduleAnnotation]) -> str:
    rows = [
        [a.scan_id, *map(_fmt, a.center), _fmt(a.diameter_mm), ";".join(str(v) for v in a.texture_votes)]
        for a in anns
    ]
    return _csv_text(ANNOTATION_HEADER, rows)


def annotations_from_csv(text: str, path: str = "") -> List[NoduleAnnotation]:
    out = []
    for off, row in _read_rows(text, ANNOTATION_HEADER, path):
        votes = row["votes"].strip()
        try:
            vals = tuple(int(v) for v in votes.split(";")) if votes else ()
            out.append(
                NoduleAnnotation(
                    row["scan_id"],
                    tuple(_float(row, k, off, path) for k in ("x_mm", "y_mm", "z_mm")),
                    _float(row, "diameter_mm", off, path),
                    vals,
                    len(vals),
                )
            )
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(str(e), off, path) from None
    return out


def froc_to_csv(curve: FrocCurve) -> str:
    return _csv_text(FROC_HEADER, [[_fmt(f), _fmt(s)] for f, s in curve.points()])


def froc_from_csv(text: str, path: str = "") -> List[Tuple[float, float]]:
    return [
        (_float(row, "fp_per_scan", off, path), _float(row, "sensitivity", off, path))
        for off, row in _read_rows(text, FROC_HEADER, path)
    ]


def write_text(path: PathLike, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def read_text(path: PathLike) -> str:
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError("file is not UTF-8", e.start, str(path)) from None
