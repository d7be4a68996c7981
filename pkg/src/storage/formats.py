"""
SOUP Storage Formats Module
Readers and writers for images, dictionaries, coefficients, patch sets,
sampling masks and k-space measurements
"""
import re
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from core.exceptions import FormatError
from core.linalg import CoefMatrix, SparseColumn
from core.sensing import SamplingMask

PathLike = Union[str, Path]

IMAGE_MAGIC = b"SOUPIMG1"
DICTIONARY_MAGIC = b"SOUPDIC1"
PATCHES_MAGIC = b"SOUPPAT1"
COEFS_MAGIC = b"SOUPCOE1"
KSPACE_MAGIC = b"SOUPKSP1"
MASK_HEADER = "SOUPMASK v1"

_U32 = np.dtype("<u4")
_C128 = np.dtype("<c16")
_ENTRY = np.dtype([("idx", "<u4"), ("re", "<f8"), ("im", "<f8")])


class _Reader:
    """Cursor over a file's bytes that reports truncation with the file name"""

    def __init__(self, path: PathLike):
        self.path = str(path)
        self.data = Path(path).read_bytes()
        self.pos = 0

    def magic(self, expected: bytes) -> None:
        found = self.data[:len(expected)]
        if found != expected:
            raise FormatError(f"expected magic {expected!r}, found {found!r}", self.path)
        self.pos = len(expected)

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        size = dtype.itemsize * count
        if self.pos + size > len(self.data):
            raise FormatError("file is truncated", self.path)
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += size
        return out

    def u32(self, count: int = 1) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.array(_U32, count))

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes", self.path)


def _dims(*dims: int) -> bytes:
    return np.asarray(dims, dtype=_U32).tobytes()


# images

def write_image(path: PathLike, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.complex128)
    if image.ndim != 2:
        raise FormatError(f"images must be 2-D, got shape {image.shape}", str(path))
    h, w = image.shape
    Path(path).write_bytes(IMAGE_MAGIC + _dims(h, w) + image.astype(_C128).tobytes(order="C"))


def read_image(path: PathLike) -> np.ndarray:
    """Complex image from a SOUPIMG1 file, or real magnitudes from a PGM"""
    with open(path, "rb") as f:
        head = f.read(len(IMAGE_MAGIC))
    if head.startswith(b"P5") or head.startswith(b"P2"):
        return read_pgm(path).astype(np.complex128)
    reader = _Reader(path)
    reader.magic(IMAGE_MAGIC)
    h, w = reader.u32(2)
    image = reader.array(_C128, h * w).reshape(h, w).astype(np.complex128)
    reader.finish()
    return image


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pgm(path: PathLike) -> np.ndarray:
    """8- or 16-bit binary (P5) or ASCII (P2) PGM as float64"""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    for _ in range(4):
        match = _PGM_TOKEN.match(data, pos)
        if not match:
            raise FormatError("incomplete PGM header", str(path))
        tokens.append(match.group(1))
        pos = match.end()
    kind, width, height, maxval = tokens
    try:
        w, h, maxval = int(width), int(height), int(maxval)
    except ValueError:
        raise FormatError("non-numeric PGM header field", str(path))
    if kind == b"P2":
        values = np.array(data[pos:].split(), dtype=np.float64)
        if values.size != w * h:
            raise FormatError(f"expected {w * h} pixels, found {values.size}", str(path))
        return values.reshape(h, w)
    if kind != b"P5":
        raise FormatError(f"unsupported PGM kind {kind!r}", str(path))
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    if len(data) - pos < w * h * dtype.itemsize:
        raise FormatError("PGM pixel data is truncated", str(path))
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.float64)


def write_pgm(path: PathLike, image: np.ndarray, peak: float = None) -> None:
    """8-bit PGM of |image|, scaled so that `peak` (default: the max magnitude) maps to 255"""
    mag = np.abs(np.asarray(image))
    if peak is None:
        peak = float(mag.max(initial=0.0)) or 1.0
    pixels = np.clip(np.rint(mag / peak * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())


# dense matrices (dictionaries and patch sets), stored column by column

def _write_matrix(path: PathLike, magic: bytes, M: np.ndarray) -> None:
    M = np.asarray(M, dtype=np.complex128)
    rows, cols = M.shape
    Path(path).write_bytes(magic + _dims(rows, cols) + M.astype(_C128).tobytes(order="F"))


def _read_matrix(path: PathLike, magic: bytes) -> np.ndarray:
    reader = _Reader(path)
    reader.magic(magic)
    rows, cols = reader.u32(2)
    M = reader.array(_C128, rows * cols).reshape(rows, cols, order="F").astype(np.complex128)
    reader.finish()
    return M


def write_dictionary(path: PathLike, D: np.ndarray) -> None:
    _write_matrix(path, DICTIONARY_MAGIC, D)


def read_dictionary(path: PathLike) -> np.ndarray:
    return _read_matrix(path, DICTIONARY_MAGIC)


def write_patches(path: PathLike, Y: np.ndarray) -> None:
    _write_matrix(path, PATCHES_MAGIC, Y)


def read_patches(path: PathLike) -> np.ndarray:
    return _read_matrix(path, PATCHES_MAGIC)


# sparse coefficients: per column a count, then (idx, re, im) records

def write_coefs(path: PathLike, C: CoefMatrix) -> None:
    N, J = C.shape
    chunks = [COEFS_MAGIC, _dims(N, J)]
    for j in range(J):
        col = C.column(j)
        entries = np.empty(col.nnz, dtype=_ENTRY)
        entries["idx"] = col.support
        entries["re"] = col.values.real
        entries["im"] = col.values.imag
        chunks.append(_dims(col.nnz))
        chunks.append(entries.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_coefs(path: PathLike) -> CoefMatrix:
    reader = _Reader(path)
    reader.magic(COEFS_MAGIC)
    N, J = reader.u32(2)
    columns = []
    for _ in range(J):
        (count,) = reader.u32()
        entries = reader.array(_ENTRY, count)
        try:
            columns.append(SparseColumn(N, entries["idx"], entries["re"] + 1j * entries["im"]))
        except ValueError as e:
            raise FormatError(f"invalid coefficient column: {e}", reader.path)
    reader.finish()
    if not columns:
        return CoefMatrix.zeros(N, 0)
    return CoefMatrix.from_columns(columns)


# sampling masks and measurements

def write_mask(path: PathLike, mask: SamplingMask) -> None:
    lines = [MASK_HEADER, f"{mask.height} {mask.width}"]
    lines.extend("".join("1" if v else "0" for v in row) for row in mask.kept)
    Path(path).write_text("\n".join(lines) + "\n")


def read_mask(path: PathLike) -> SamplingMask:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or lines[0].strip() != MASK_HEADER:
        raise FormatError(f"expected header {MASK_HEADER!r}", str(path))
    try:
        h, w = (int(v) for v in lines[1].split())
    except ValueError:
        raise FormatError("second line must hold '<h> <w>'", str(path))
    rows = lines[2:2 + h]
    if len(rows) != h or any(len(r) != w or set(r) - {"0", "1"} for r in rows):
        raise FormatError(f"expected {h} lines of {w} '0'/'1' characters", str(path))
    kept = np.array([[c == "1" for c in r] for r in rows], dtype=bool)
    return SamplingMask(kept, scheme="file")


def write_kspace(path: PathLike, z: np.ndarray, mask: SamplingMask) -> None:
    z = np.asarray(z, dtype=np.complex128).reshape(-1)
    if z.size != mask.count:
        raise FormatError(f"{z.size} samples for a mask with {mask.count} entries", str(path))
    Path(path).write_bytes(KSPACE_MAGIC + _dims(mask.height, mask.width, z.size) + z.astype(_C128).tobytes())


def read_kspace(path: PathLike) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Measurement vector and the (h, w) grid it was taken on"""
    reader = _Reader(path)
    reader.magic(KSPACE_MAGIC)
    h, w, count = reader.u32(3)
    z = reader.array(_C128, count).astype(np.complex128)
    reader.finish()
    return z, (h, w)
