"""Binary persistence of factorizations

Layout, little-endian throughout, matrices row-major:

    magic "RSRS", u32 version, u32 N, u32 step count, u32 level count
    u32 level ids, f64 tolerances (one per level)
    per step:
        u32 box, level, |I_r|, |I_s|, |C|
        u32 I_r, I_s, C
        f64 T_rs, T_sr, G_left, G_right, LU(X_rr)
        i32 pivots
    u32 |S|, u32 S, f64 LU(Ã_S), i32 pivots

"""
import logging

import numpy as np

from . import dense
from .core import EliminationStep, SkelFactorization
from .exceptions import ContainerError

log = logging.getLogger("rsrs")

MAGIC = b"RSRS"
VERSION = 1

_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("n", "<u4"),
    ("steps", "<u4"),
    ("levels", "<u4"),
])

_STEP = np.dtype([
    ("box", "<u4"),
    ("level", "<u4"),
    ("residual", "<u4"),
    ("skeleton", "<u4"),
    ("coupled", "<u4"),
])


def _u32(values):
    return np.ascontiguousarray(values, dtype="<u4").tobytes()


def _f64(values):
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def _i32(values):
    return np.ascontiguousarray(values, dtype="<i4").tobytes()


def _lu_bytes(factors):
    return _f64(factors.lu) + _i32(factors.piv)


def save_factorization(f, path):
    """Write `f` to `path`

    :param SkelFactorization f:
    :param str path:
    """
    header = np.zeros(1, dtype=_HEADER)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["n"] = f.n
    header["steps"] = len(f.steps)
    header["levels"] = len(f.tolerances)

    levels = sorted(f.tolerances, reverse=True)
    chunks = [
        header.tobytes(),
        _u32(levels),
        _f64([f.tolerances[level] for level in levels]),
    ]

    for step in f.steps:
        record = np.zeros(1, dtype=_STEP)
        record["box"] = step.box
        record["level"] = step.level
        record["residual"] = step.residual.size
        record["skeleton"] = step.skeleton.size
        record["coupled"] = step.coupled.size
        chunks += [
            record.tobytes(),
            _u32(step.residual),
            _u32(step.skeleton),
            _u32(step.coupled),
            _f64(step.T_rs),
            _f64(step.T_sr),
            _f64(step.G_left),
            _f64(step.G_right),
            _lu_bytes(step.Xrr_factors),
        ]

    chunks += [
        _u32([f.skeleton.size]),
        _u32(f.skeleton),
        _lu_bytes(f.final_factors),
    ]

    with open(path, "wb") as fp:
        for chunk in chunks:
            fp.write(chunk)

    log.debug(f"Wrote {len(f.steps)} steps to {path}")


class _Reader(object):
    def __init__(self, raw, path):
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, dtype, count=1):
        dtype = np.dtype(dtype)
        size = dtype.itemsize * count
        if self.offset + size > len(self.raw):
            raise ContainerError(
                f"{self.path}: truncated at byte {self.offset}, "
                f"needed {size} more"
            )
        values = np.frombuffer(self.raw, dtype=dtype, count=count,
                               offset=self.offset)
        self.offset += size
        return values

    def index(self, count):
        return self.take("<u4", count).astype(np.int64)

    def matrix(self, rows, cols):
        values = self.take("<f8", rows * cols)
        return values.astype(np.float64).reshape(rows, cols)

    def lu(self, n):
        lu = self.matrix(n, n)
        piv = self.take("<i4", n).astype(np.int32)
        return dense.LuFactors(lu=lu, piv=piv, perm=dense._permutation(piv))


def load_factorization(path):
    """Read a factorization written by `save_factorization`

    :rtype: SkelFactorization
    :raises ContainerError: on bad magic, unknown version or truncation
    """
    with open(path, "rb") as fp:
        raw = fp.read()

    reader = _Reader(raw, path)
    header = reader.take(_HEADER)[0]
    if header["magic"] != MAGIC:
        raise ContainerError(f"{path}: bad magic {header['magic']!r}")
    if int(header["version"]) != VERSION:
        raise ContainerError(
            f"{path}: unsupported version {int(header['version'])}"
        )

    n = int(header["n"])
    level_count = int(header["levels"])
    levels = reader.index(level_count)
    atols = reader.take("<f8", level_count)
    tolerances = {int(level): float(atol)
                  for level, atol in zip(levels, atols)}

    steps = []
    for _ in range(int(header["steps"])):
        record = reader.take(_STEP)[0]
        r, k, c = (int(record["residual"]), int(record["skeleton"]),
                   int(record["coupled"]))
        steps.append(EliminationStep(
            box=int(record["box"]),
            level=int(record["level"]),
            residual=reader.index(r),
            skeleton=reader.index(k),
            coupled=reader.index(c),
            T_rs=reader.matrix(r, k),
            T_sr=reader.matrix(k, r),
            G_left=reader.matrix(c, r),
            G_right=reader.matrix(r, c),
            Xrr_factors=reader.lu(r),
        ))

    size = int(reader.index(1)[0])
    skeleton = reader.index(size)
    final = reader.lu(size)

    if reader.offset != len(raw):
        raise ContainerError(
            f"{path}: {len(raw) - reader.offset} trailing bytes"
        )

    eliminated = sum(step.residual.size for step in steps)
    if eliminated + skeleton.size != n:
        log.warning(f"{path}: {eliminated} eliminated and {skeleton.size} "
                    f"skeleton indices do not add up to N={n}")

    return SkelFactorization(
        n=n,
        steps=steps,
        skeleton=skeleton,
        final_factors=final,
        tolerances=tolerances,
        method="loaded",
    )
