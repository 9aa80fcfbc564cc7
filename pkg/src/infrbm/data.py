"""Binary datasets: IDX parsing, binarization, splitting and the FSET container."""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError
from .rng import as_stream

IDX_UBYTE_IMAGES = 0x00000803
IDX_UBYTE_LABELS = 0x00000801
FSET_MAGIC = b"FSET"
FSET_VERSION = 1


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """N binary rows of length ``visible_dim`` with optional integer labels."""

    vectors: np.ndarray
    labels: np.ndarray = None
    num_classes: int = None

    def __post_init__(self):
        v = np.asarray(self.vectors)
        if v.ndim != 2:
            raise DimensionError(f"dataset must be 2-d, got shape {v.shape}")
        if v.size and not np.all((v == 0) | (v == 1)):
            raise ValueError("dataset entries must be 0 or 1")
        v = v.astype(np.uint8)
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if y.shape[0] != v.shape[0]:
                raise DimensionError(f"{y.shape[0]} labels for {v.shape[0]} rows")
            k = self.num_classes if self.num_classes is not None else (int(y.max()) + 1 if y.size else 0)
            if y.size and (y.min() < 0 or y.max() >= k):
                raise ValueError(f"labels must lie in [0, {k})")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)
            object.__setattr__(self, "num_classes", int(k))

    @property
    def count(self):
        return self.vectors.shape[0]

    @property
    def visible_dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.count

    def as_float(self):
        return self.vectors.astype(np.float64)

    def mean(self):
        return self.vectors.mean(axis=0)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return BinaryDataset(self.vectors[idx], labels, self.num_classes if labels is not None else None)


def require_nonempty(data, what="dataset"):
    if data.count < 1:
        raise ValueError(f"{what} must contain at least one row")


@dataclass(frozen=True, eq=False)
class RawImageSet:
    pixels: np.ndarray  # (N, H, W) uint8

    @property
    def count(self):
        return self.pixels.shape[0]

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]


# -- bit packing -----------------------------------------------------------

def pack_rows(bits):
    """Pack each row to ceil(D/8) bytes, little-endian bit order within a byte."""
    bits = np.asarray(bits, dtype=np.uint8)
    return np.packbits(bits, axis=1, bitorder="little")


def unpack_rows(packed, dim):
    packed = np.asarray(packed, dtype=np.uint8)
    return np.unpackbits(packed, axis=1, count=dim, bitorder="little")


# -- IDX ---------------------------------------------------------------------

def parse_idx(buf):
    """Parse an unsigned-byte IDX buffer into a RawImageSet (3-d) or label vector (1-d)."""
    if len(buf) < 4:
        raise FormatError("IDX magic truncated", len(buf))
    (magic,) = struct.unpack_from(">I", buf, 0)
    if magic == IDX_UBYTE_IMAGES:
        ndim = 3
    elif magic == IDX_UBYTE_LABELS:
        ndim = 1
    else:
        raise FormatError(f"bad IDX magic 0x{magic:08x}", 0)
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise FormatError(f"IDX dimension header truncated, need {header} bytes", len(buf))
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    size = 1
    for d in dims:
        size *= d
    if size > 2**40:
        raise FormatError(f"IDX dimensions {dims} overflow the size limit", 4)
    end = header + size
    if len(buf) < end:
        raise FormatError(f"IDX payload truncated: declared {dims} needs {size} bytes, found {len(buf) - header}", len(buf))
    if len(buf) > end:
        raise FormatError(f"{len(buf) - end} trailing bytes after IDX payload", end)
    arr = np.frombuffer(buf, dtype=np.uint8, count=size, offset=header).reshape(dims).copy()
    return RawImageSet(arr) if ndim == 3 else arr


def read_idx(path):
    with open(path, "rb") as f:
        return parse_idx(f.read())


def idx_bytes(arr):
    arr = arr.pixels if isinstance(arr, RawImageSet) else np.asarray(arr)
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim == 3:
        magic = IDX_UBYTE_IMAGES
    elif arr.ndim == 1:
        magic = IDX_UBYTE_LABELS
    else:
        raise DimensionError(f"IDX writer supports 1-d labels or 3-d images, got {arr.ndim}-d")
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


def write_idx(path, arr):
    with open(path, "wb") as f:
        f.write(idx_bytes(arr))


def binarize(raw, threshold=127, labels=None):
    """bit = 1 iff pixel > threshold; images flattened row-major."""
    pixels = raw.pixels if isinstance(raw, RawImageSet) else np.asarray(raw)
    flat = pixels.reshape(pixels.shape[0], -1)
    return BinaryDataset((flat > threshold).astype(np.uint8), labels)


def split(data, validation_count, seed=0):
    """Seeded shuffle, then the first ``validation_count`` rows become validation."""
    if not 0 <= validation_count < data.count:
        raise ValueError(f"validation_count must be in [0, {data.count}), got {validation_count}")
    perm = as_stream(seed).split(0x5917).generator().permutation(data.count)
    return data.subset(perm[validation_count:]), data.subset(perm[:validation_count])


# -- FSET --------------------------------------------------------------------

def fset_bytes(data):
    has_labels = data.labels is not None
    head = FSET_MAGIC + struct.pack("<IIIB", FSET_VERSION, data.count, data.visible_dim, int(has_labels))
    body = pack_rows(data.vectors).tobytes() if data.count else b""
    tail = data.labels.astype("<u2").tobytes() if has_labels else b""
    return head + body + tail


def parse_fset(buf):
    if len(buf) < 17:
        raise FormatError("FSET header truncated", len(buf))
    if buf[:4] != FSET_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {FSET_MAGIC!r}", 0)
    version, n, dim, has_labels = struct.unpack_from("<IIIB", buf, 4)
    if version != FSET_VERSION:
        raise FormatError(f"unsupported FSET version {version}", 4)
    if has_labels not in (0, 1):
        raise FormatError(f"has_labels flag must be 0 or 1, got {has_labels}", 16)
    row_bytes = (dim + 7) // 8
    need = 17 + n * row_bytes + (2 * n if has_labels else 0)
    if len(buf) != need:
        raise FormatError(f"FSET payload is {len(buf)} bytes, expected {need}", min(len(buf), need))
    packed = np.frombuffer(buf, np.uint8, n * row_bytes, 17).reshape(n, row_bytes)
    vectors = unpack_rows(packed, dim) if n else np.zeros((0, dim), np.uint8)
    labels = None
    if has_labels:
        labels = np.frombuffer(buf, "<u2", n, 17 + n * row_bytes).astype(np.int64)
    return BinaryDataset(vectors, labels)


def save_fset(data, path):
    with open(path, "wb") as f:
        f.write(fset_bytes(data))


def load_fset(path):
    with open(path, "rb") as f:
        return parse_fset(f.read())
