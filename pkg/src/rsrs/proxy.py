"""Strong skeletonization with explicit entries and proxy surfaces

The baseline to the black-box driver. Interactions of a box with its far
field are represented by the kernel evaluated on a ring of proxy points
around the box, plus any far-field entries that earlier eliminations have
modified. Modifications are kept as a sparse matrix over global indices.

"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import dense, tree as _tree
from .core import (
    SkelFactorization,
    _summarize,
    _trivial_step,
    complete_step,
    factor_memory,
    final_skeleton,
    select_skeleton,
)
from .exceptions import (
    FactorizationError,
    SingularPivotError,
    ShapeError,
    UnsupportedOracleError,
)
from .util import Stopwatch, as_index

log = logging.getLogger("rsrs")


@dataclass(frozen=True)
class ProxyConfig:
    radius_factor: float = 1.5
    n_proxy: int = 64

    def __post_init__(self):
        if self.radius_factor <= 1:
            raise ValueError(f"radius_factor must exceed 1, "
                             f"got {self.radius_factor}")
        if self.n_proxy < 1:
            raise ValueError(f"n_proxy must be positive, got {self.n_proxy}")


def proxy_points(center, radius, count, dim):
    """`count` points on a circle (dim ≤ 2) or sphere (dim 3)

    One-dimensional boxes use the circle in the plane through the line.

    :rtype: numpy.ndarray
    """
    center = _embed(np.asarray(center, dtype=np.float64).reshape(1, -1))[0]
    if dim == 3:
        # Golden-angle spiral
        i = np.arange(count) + 0.5
        polar = np.arccos(1 - 2 * i / count)
        azimuth = np.pi * (1 + 5 ** 0.5) * i
        unit = np.column_stack([
            np.cos(azimuth) * np.sin(polar),
            np.sin(azimuth) * np.sin(polar),
            np.cos(polar),
        ])
    else:
        angle = 2 * np.pi * np.arange(count) / count
        unit = np.column_stack([np.cos(angle), np.sin(angle)])
    return center + radius * unit


def _embed(coords):
    """Lift 1D coordinates into the plane"""
    if coords.shape[1] == 1:
        return np.column_stack([coords, np.zeros(coords.shape[0])])
    return coords


class _ModifiedOperator(object):
    """Original entries plus accumulated Schur updates"""

    def __init__(self, o):
        self.o = o
        self.updates = scipy.sparse.csr_matrix((o.n, o.n))

    def block(self, rows, cols):
        rows, cols = as_index(rows), as_index(cols)
        out = np.asarray(self.o.entries(rows, cols), dtype=np.float64)
        out = out.reshape(rows.size, cols.size)
        if rows.size and cols.size and self.updates.nnz:
            out = out + self.updates[rows][:, cols].toarray()
        return out

    def modified_columns(self, rows, cols):
        """Those of `cols` carrying an update in some row of `rows`"""
        cols = as_index(cols)
        if not cols.size or not self.updates.nnz:
            return cols[:0]
        touched = self.updates[as_index(rows)][:, cols].nonzero()[1]
        return cols[np.unique(touched)]

    def modified_rows(self, rows, cols):
        rows = as_index(rows)
        if not rows.size or not self.updates.nnz:
            return rows[:0]
        touched = self.updates[rows][:, as_index(cols)].nonzero()[0]
        return rows[np.unique(touched)]

    def add(self, indices, delta):
        indices = as_index(indices)
        if not indices.size:
            return
        r, c = np.meshgrid(indices, indices, indexing="ij")
        update = scipy.sparse.coo_matrix(
            (delta.reshape(-1), (r.reshape(-1), c.reshape(-1))),
            shape=self.updates.shape,
        )
        self.updates = (self.updates + update).tocsr()


def _far_columns(tree, b, m, radius):
    """Far-field active indices handled explicitly, and the rest

    Explicit are those with stored updates against the box, or lying inside
    the proxy radius.
    """
    box = tree.box(b)
    far = [tree.box(a).active_indices for a in _tree.far_field(tree, b)]
    far = as_index(np.concatenate(far)) if far else as_index([])

    coords = tree.points.coords
    distance = np.linalg.norm(coords[far] - box.center, axis=1)
    inside = far[distance <= radius]
    modified = np.union1d(m.modified_columns(box.active_indices, far),
                          m.modified_rows(far, box.active_indices))
    explicit = np.union1d(inside, modified).astype(np.int64)
    return far, explicit


def _far_field_data(o, m, tree, b, proxy):
    """Row-ID and column-ID matrices of box `b`, both |B|×w"""
    box = tree.box(b)
    active = box.active_indices
    radius = proxy.radius_factor * float(np.linalg.norm(box.half_width))
    far, explicit = _far_columns(tree, b, m, radius)

    rows, cols = [], []
    implicit = far.size - explicit.size
    if implicit > 0:
        ring = proxy_points(box.center, radius, proxy.n_proxy, tree.dim)
        targets = _embed(tree.points.coords[active])
        scale = np.sqrt(implicit / proxy.n_proxy)
        rows.append(scale * o.kernel_block(targets, ring))
        cols.append(scale * o.kernel_block(ring, targets).T)
    if explicit.size:
        rows.append(m.block(active, explicit))
        cols.append(m.block(explicit, active).T)

    if not rows:
        empty = np.zeros((active.size, 0))
        return empty, empty
    return np.hstack(rows), np.hstack(cols)


def _id_residual(M, skel, resid, T):
    if not resid.size or not M.size:
        return 0.0
    if not skel.size:
        return float(np.linalg.norm(M[resid]))
    return float(np.linalg.norm(M[resid] - T @ M[skel]))


def skeletonize_box_proxy(o, m, tree, b, atol, kmax, proxy, prune=True):
    """Skeletonize box `b` of the explicitly modified operator

    Updates the stored modifications with the step's Schur complement.

    :return: the step and its forward and adjoint ID residuals
    :rtype: tuple
    """
    box = tree.box(b)
    active = box.active_indices
    near = _tree.near_active_indices(tree, b)

    forward, adjoint = _far_field_data(o, m, tree, b, proxy)
    skel, resid, T_rs, T_sr, reached = select_skeleton(
        forward, adjoint, atol, kmax)
    residuals = (_id_residual(forward, skel, resid, T_rs),
                 _id_residual(adjoint, skel, resid, T_sr.T))

    if not reached:
        log.warning(f"Box {b}: tolerance {atol:.1e} not reached with "
                    f"rank {skel.size} (kmax {kmax})")
    log.debug(f"Box {b}: {active.size} active, {near.size} near, "
              f"rank {skel.size}")

    if not resid.size:
        return _trivial_step(b, box.level, active, reached), residuals

    # Apply E⁻¹ to the rows and F⁻¹ to the columns of the local block
    local = np.concatenate([active, near])
    G = m.block(local, local)
    if skel.size:
        G[resid] -= T_rs @ G[skel]
        G[:, resid] -= G[:, skel] @ T_sr

    coupled = np.concatenate([skel, active.size + np.arange(near.size)])
    step = complete_step(
        b, box.level, active[resid], active[skel], near, T_rs, T_sr,
        X_rr=G[np.ix_(resid, resid)],
        X_rc=G[np.ix_(resid, coupled)],
        X_cr=G[np.ix_(coupled, resid)],
        atol=atol,
        prune=prune,
        reached=reached,
    )

    kept = coupled if step.coupled.size == coupled.size else skel
    m.add(step.coupled, -G[np.ix_(kept, resid)] @ step.G_right)
    return step, residuals


def srs_factor_proxy(o, tree, sched, proxy=None, stop_level=2, prune=True):
    """Factorize an operator with entry access by proxy-surface SRS

    :param LinearOracle o: must expose entries, points and the kernel
    :param BoxTree tree: built over `o.points`, reset before use
    :param ToleranceSchedule sched:
    :param ProxyConfig proxy:
    :param int stop_level: last level to skeletonize
    :rtype: SkelFactorization
    """
    missing = [name for name in ("has_entries", "has_points", "has_kernel")
               if not getattr(o, name)]
    if missing:
        raise UnsupportedOracleError(
            f"{o!r} lacks {', '.join(n[4:] for n in missing)} "
            f"required by the proxy method"
        )
    if tree.points.n != o.n:
        raise ShapeError(f"Tree holds {tree.points.n} points, "
                         f"operator has dimension {o.n}")

    proxy = proxy or ProxyConfig()
    tree.reset()
    m = _ModifiedOperator(o)
    log.info(f"Factorizing {o!r} with proxy surfaces, depth {tree.depth}")

    watch = Stopwatch()
    steps = []
    reports = []
    tolerances = {}
    levels = list(range(tree.depth, stop_level - 1, -1))

    for level in levels:
        level_watch = Stopwatch()
        estimates = {}
        level_steps = []
        with level_watch, watch:
            atol = sched.atol(level, tree.depth)
            tolerances[level] = atol
            if level < tree.depth:
                for b in _tree.level_order(tree, level):
                    _tree.merged_active_indices(tree, b)

            for b in _tree.level_order(tree, level):
                box = tree.box(b)
                if box.active_indices.size:
                    step, estimates[b] = skeletonize_box_proxy(
                        o, m, tree, b, atol, sched.kmax, proxy, prune=prune)
                    box.active_indices = step.skeleton
                    level_steps.append(step)
                box.processed = True

        steps.extend(level_steps)
        report = _summarize(level, atol, level_steps, estimates,
                            level_watch.seconds)
        reports.append(report)
        log.info(f"Level {level}: {report.boxes} boxes, ranks "
                 f"{report.rank_min}..{report.rank_max}, "
                 f"{report.seconds:.2f}s")

    with watch:
        skeleton = final_skeleton(tree, stop_level, bool(levels))
        try:
            final = dense.lu_factor(m.block(skeleton, skeleton))
        except SingularPivotError as e:
            raise FactorizationError(
                f"Final skeleton block is singular at pivot {e.pivot}")

    f = SkelFactorization(
        n=o.n,
        steps=steps,
        skeleton=skeleton,
        final_factors=final,
        tolerances=tolerances,
        method="srs-proxy",
        levels=reports,
        seconds=watch.seconds,
    )
    log.info(f"Factorized in {f.seconds:.2f}s, {len(steps)} steps, "
             f"final skeleton {skeleton.size}, memory {factor_memory(f)}")
    return f
