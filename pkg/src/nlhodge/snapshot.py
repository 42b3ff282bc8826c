"""Little-endian binary snapshots of cochains and gauge fields.

Form file::

    b"NLHDEC01"  int64 n, degree, fiber (0 = real)
    float64[2n]  extents a1, b1, ..., an, bn
    int64[n]     resolution
    float64[...] coefficients in layout order, fiber interleaved per cell

Gauge file: magic b"NLHGAUG1", then n, extents and resolution as above,
followed by one unit quaternion (w, x, y, z) per node in C order.
"""

from __future__ import annotations

import numpy as np

from nlhodge.errors import SnapshotError
from nlhodge.forms import CubicalComplex, FormField

FORM_MAGIC = b"NLHDEC01"
GAUGE_MAGIC = b"NLHGAUG1"

_I8 = np.dtype("<i8")
_F8 = np.dtype("<f8")


def _header(K: CubicalComplex) -> bytes:
    ext = np.array([v for ab in K.extents for v in ab], dtype=_F8)
    return ext.tobytes() + np.array(K.resolution, dtype=_I8).tobytes()


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, dtype, count):
        nbytes = dtype.itemsize * count
        if self.pos + nbytes > len(self.data):
            raise SnapshotError(f"{self.path}: truncated snapshot")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += nbytes
        return out.astype(dtype.newbyteorder("="))

    def complex(self, n):
        ext = self.take(_F8, 2 * n).reshape(n, 2)
        res = self.take(_I8, n)
        try:
            return CubicalComplex([tuple(e) for e in ext], [int(r) for r in res])
        except ValueError as exc:
            raise SnapshotError(f"{self.path}: invalid grid header ({exc})") from exc

    def done(self):
        if self.pos != len(self.data):
            raise SnapshotError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


def _read(path, magic):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    if data[:8] != magic:
        raise SnapshotError(f"{path}: bad magic {data[:8]!r}, expected {magic!r}")
    r = _Reader(data, path)
    r.pos = 8
    return r


def _write(path, payload: bytes):
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise SnapshotError(f"cannot write snapshot {path}: {exc}") from exc


def save_form(path, f: FormField) -> None:
    K = f.complex
    head = np.array([K.n, f.degree, f.fiber or 0], dtype=_I8).tobytes()
    _write(path, FORM_MAGIC + head + _header(K) + np.ascontiguousarray(f.coeffs, dtype=_F8).tobytes())


def load_form(path) -> FormField:
    r = _read(path, FORM_MAGIC)
    n, degree, fiber = (int(v) for v in r.take(_I8, 3))
    if n < 1 or not 0 <= degree <= n or fiber < 0:
        raise SnapshotError(f"{path}: invalid header n={n} degree={degree} fiber={fiber}")
    K = r.complex(n)
    count = K.num_cells(degree) * max(fiber, 1)
    coeffs = r.take(_F8, count)
    r.done()
    if fiber == 0:
        return FormField(K, degree, coeffs)
    if fiber == 3:
        from nlhodge.gauge import LieFormField

        return LieFormField(K, degree, coeffs.reshape(-1, 3))
    return FormField(K, degree, coeffs.reshape(-1, fiber), fiber=fiber)


def save_gauge(path, g) -> None:
    K = g.complex
    quats = np.ascontiguousarray(g.as_quaternions(), dtype=_F8)
    _write(path, GAUGE_MAGIC + np.array([K.n], dtype=_I8).tobytes() + _header(K) + quats.tobytes())


def load_gauge(path):
    from nlhodge.gauge import GaugeField

    r = _read(path, GAUGE_MAGIC)
    n = int(r.take(_I8, 1)[0])
    if n < 1:
        raise SnapshotError(f"{path}: invalid dimension {n}")
    K = r.complex(n)
    quats = r.take(_F8, 4 * K.num_cells(0)).reshape(K.node_shape + (4,))
    r.done()
    return GaugeField.from_quaternions(K, quats)
