"""Dense row-major tensors, their shape algebra and the MXT1 binary format.

Logical layout for video feature maps is ``[B, T, C, H, W]``. Every
operation materializes its result in row-major order; no stride tricks leak
through the public surface.
"""

from __future__ import annotations

import os
import struct
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import InvalidAxes, InvalidShape

MAGIC = b"MXT1"
DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
PRECISIONS = {"f32": np.float32, "f64": np.float64}

# channel axis of the [B, T, C, H, W] layout
CHANNEL_AXIS = 2


def resolve_dtype(precision: str | np.dtype | type | None) -> np.dtype:
    """Map ``"f32"``/``"f64"`` (or a numpy dtype) to a float dtype."""
    if precision is None:
        return np.dtype(np.float32)
    if isinstance(precision, str) and precision in PRECISIONS:
        return np.dtype(PRECISIONS[precision])
    dt = np.dtype(precision)
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {precision!r}")
    return dt


class TensorND:
    """Immutable dense tensor: a shape plus a flat row-major buffer.

    Args:
        data: anything ``np.asarray`` accepts. Flattened in row-major order.
        shape: logical shape; defaults to the shape of ``data``.
        dtype: ``float32`` by default, ``float64`` for verification runs.
    """

    __slots__ = ("_array",)

    def __init__(self, data, shape: Sequence[int] | None = None, dtype=np.float32):
        arr = np.array(data, dtype=resolve_dtype(dtype), order="C", copy=True)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if any(s < 1 for s in shape):
                raise InvalidShape(f"dimensions must be positive, got {shape}")
            if int(np.prod(shape, dtype=np.int64)) != arr.size:
                raise InvalidShape(f"{arr.size} values cannot fill shape {shape}")
            arr = arr.reshape(shape)
        arr.setflags(write=False)
        self._array = arr

    @classmethod
    def wrap(cls, array: np.ndarray) -> "TensorND":
        """Build without a dtype conversion (copy still taken)."""
        return cls(array, dtype=array.dtype if array.dtype in (np.float32, np.float64) else np.float32)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def rank(self) -> int:
        return self._array.ndim

    @property
    def dtype(self) -> np.dtype:
        return self._array.dtype

    @property
    def data(self) -> np.ndarray:
        """Flat read-only view of the row-major buffer."""
        return self._array.reshape(-1)

    def numpy(self) -> np.ndarray:
        """Read-only ndarray view with the logical shape."""
        return self._array

    def strides(self) -> tuple[int, ...]:
        """Row-major element strides (last axis has stride 1)."""
        out = [1] * self.rank
        for a in range(self.rank - 2, -1, -1):
            out[a] = out[a + 1] * self.shape[a + 1]
        return tuple(out)

    def __array__(self, dtype=None, copy=None):
        if dtype is None or np.dtype(dtype) == self._array.dtype:
            return self._array.copy() if copy else self._array
        return self._array.astype(dtype)

    def __getitem__(self, idx):
        return self._array[idx]

    def __eq__(self, other):
        if not isinstance(other, TensorND):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.dtype == other.dtype
            and np.array_equal(self._array, other._array)
        )

    def __hash__(self):
        return hash((self.shape, self.dtype.str, self._array.tobytes()))

    def __repr__(self):
        return f"TensorND(shape={self.shape}, dtype={self.dtype.name})"


def _as_array(t) -> np.ndarray:
    return t.numpy() if isinstance(t, TensorND) else np.asarray(t)


def _as_tensor(t) -> TensorND:
    return t if isinstance(t, TensorND) else TensorND.wrap(np.asarray(t))


def reshape(t, new_shape: Sequence[int]) -> TensorND:
    """Relabel the shape; the flat buffer is unchanged."""
    t = _as_tensor(t)
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != int(np.prod(t.shape, dtype=np.int64)):
        raise InvalidShape(f"cannot reshape {t.shape} to {new_shape}")
    return TensorND(t.data, shape=new_shape, dtype=t.dtype)


def permute_axes(t, order: Sequence[int]) -> TensorND:
    """Reorder axes so that ``result.shape[i] == t.shape[order[i]]``."""
    t = _as_tensor(t)
    order = tuple(int(a) for a in order)
    if sorted(order) != list(range(t.rank)):
        raise InvalidAxes(f"{order} is not a permutation of 0..{t.rank - 1}")
    return TensorND(np.transpose(t.numpy(), order), dtype=t.dtype)


def inverse_permutation(order: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(order)
    for i, a in enumerate(order):
        inv[a] = i
    return tuple(inv)


def concat_channels(parts: Sequence, axis: int = CHANNEL_AXIS) -> TensorND:
    """Concatenate along the channel axis, part m taking the m-th channel range."""
    if not parts:
        raise InvalidShape("nothing to concatenate")
    arrays = [_as_array(p) for p in parts]
    ref = arrays[0]
    axis = axis % ref.ndim
    for a in arrays[1:]:
        if a.ndim != ref.ndim or any(
            a.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis
        ):
            raise InvalidShape(f"cannot concatenate {a.shape} with {ref.shape} on axis {axis}")
    dtype = np.result_type(*arrays)
    return TensorND(np.concatenate(arrays, axis=axis), dtype=dtype)


def split_channels(t, sizes: Sequence[int], axis: int = CHANNEL_AXIS) -> list[TensorND]:
    """Inverse of :func:`concat_channels` for the given channel counts."""
    arr = _as_array(t)
    axis = axis % arr.ndim
    if sum(sizes) != arr.shape[axis] or any(s < 1 for s in sizes):
        raise InvalidShape(f"split {list(sizes)} does not cover {arr.shape[axis]} channels")
    bounds = np.cumsum(sizes)[:-1]
    return [TensorND(p, dtype=arr.dtype) for p in np.split(arr, bounds, axis=axis)]


def temporal_fibers(t) -> TensorND:
    """View ``[B, T, C, H, W]`` as ``[B*H*W, C, T]`` (one row per temporal fiber)."""
    arr = _as_array(t)
    if arr.ndim != 5:
        raise InvalidShape(f"expected [B, T, C, H, W], got {arr.shape}")
    b, T, c, h, w = arr.shape
    return TensorND(np.transpose(arr, (0, 3, 4, 2, 1)).reshape(b * h * w, c, T), dtype=arr.dtype)


def from_temporal_fibers(t, shape: Sequence[int]) -> TensorND:
    """Inverse of :func:`temporal_fibers` given the original ``[B, T, C, H, W]`` shape."""
    arr = _as_array(t)
    b, T, c, h, w = shape
    if arr.shape != (b * h * w, c, T):
        raise InvalidShape(f"{arr.shape} is not the fiber view of {tuple(shape)}")
    return TensorND(np.transpose(arr.reshape(b, h, w, c, T), (0, 4, 3, 1, 2)), dtype=arr.dtype)


# --- serialization -------------------------------------------------------


def write_tensor(fh: BinaryIO, t) -> None:
    """Append one MXT1 record to an open binary stream."""
    arr = _as_array(t)
    dt = arr.dtype.newbyteorder("<")
    if dt not in DTYPE_TAGS:
        raise InvalidShape(f"cannot serialize dtype {arr.dtype}")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(struct.pack("<B", DTYPE_TAGS[dt]))
    fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes(order="C"))


def read_tensor(fh: BinaryIO) -> TensorND | None:
    """Read one record, or return ``None`` at a clean end of stream."""
    magic = fh.read(4)
    if not magic:
        return None
    if magic != MAGIC:
        raise InvalidShape(f"bad magic {magic!r}")
    try:
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        (tag,) = struct.unpack("<B", fh.read(1))
    except struct.error as exc:
        raise InvalidShape("truncated tensor header") from exc
    if tag not in TAG_DTYPES:
        raise InvalidShape(f"unknown dtype tag {tag}")
    dt = TAG_DTYPES[tag]
    count = int(np.prod(dims, dtype=np.int64))
    payload = fh.read(count * dt.itemsize)
    if len(payload) != count * dt.itemsize:
        raise InvalidShape("truncated tensor payload")
    arr = np.frombuffer(payload, dtype=dt).astype(dt.newbyteorder("="))
    return TensorND(arr, shape=dims, dtype=arr.dtype)


def save_tensors(path: str | os.PathLike, tensors: Iterable) -> None:
    with open(path, "wb") as fh:
        for t in tensors:
            write_tensor(fh, t)


def load_tensors(path: str | os.PathLike) -> list[TensorND]:
    out = []
    with open(path, "rb") as fh:
        while (t := read_tensor(fh)) is not None:
            out.append(t)
    return out


def save_tensor(path: str | os.PathLike, t) -> None:
    save_tensors(path, [t])


def load_tensor(path: str | os.PathLike) -> TensorND:
    records = load_tensors(path)
    if len(records) != 1:
        raise InvalidShape(f"{path}: expected one tensor record, found {len(records)}")
    return records[0]
