"""Strong recursive skeletonization from black-box samples

The factorization is A ≈ K = V₁⋯V_q · Ã · W_q⋯W₁ where each step i
eliminates the residual indices of one box with V_i = E_i·L_i and
W_i = U_i·F_i, and Ã is block diagonal with the X_rr blocks of every step
plus the final block on the remaining skeleton S.

"""
import logging
import threading
from dataclasses import asdict, dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg

from . import dense, tree as _tree
from .dense import Elim
from .exceptions import (
    FactorizationError,
    FinalSkeletonTooLargeError,
    ShapeError,
    SingularPivotError,
)
from .sketching import (
    FORWARD,
    ADJOINT,
    apply_elimination,
    build_sketches,
    coupling_residual_estimate,
    extract_block,
    nullified_sample,
)
from .util import Stopwatch, as_index, thread_count

log = logging.getLogger("rsrs")

_EMPTY = np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class ToleranceSchedule:
    atol_leaf: float
    growth: float = 2.0
    kmax: int = 40

    def __post_init__(self):
        if self.atol_leaf < 0:
            raise ValueError(f"atol_leaf must be >= 0, got {self.atol_leaf}")
        if self.growth < 1:
            raise ValueError(f"growth must be >= 1, got {self.growth}")
        if self.kmax < 1:
            raise ValueError(f"kmax must be >= 1, got {self.kmax}")

    def atol(self, level, depth):
        """Absolute tolerance at `level` of a tree of `depth`"""
        return self.atol_leaf * self.growth ** (depth - level)


@dataclass(frozen=True, eq=False)
class EliminationStep:
    """Elimination of one box's residual indices

    `coupled` lists the indices [I_s, I_n] that G_left and G_right couple to
    the residual indices.
    """
    box: int
    level: int
    residual: np.ndarray
    skeleton: np.ndarray
    T_rs: np.ndarray
    T_sr: np.ndarray
    coupled: np.ndarray
    G_left: np.ndarray
    G_right: np.ndarray
    Xrr_factors: dense.LuFactors
    tolerance_reached: bool = True

    @property
    def E(self):
        return Elim(self.T_rs, self.residual, self.skeleton)

    @property
    def F(self):
        return Elim(self.T_sr, self.skeleton, self.residual)

    @property
    def L(self):
        return Elim(self.G_left, self.coupled, self.residual)

    @property
    def U(self):
        return Elim(self.G_right, self.residual, self.coupled)

    @property
    def left_factors(self):
        return self.E, self.L

    @property
    def right_factors(self):
        return self.U, self.F

    @property
    def memory(self):
        r = self.residual.size
        return (self.T_rs.size + self.T_sr.size
                + self.G_left.size + self.G_right.size + r * r)


class BlockDiagonal(object):
    """Ã: LU-factored diagonal blocks on disjoint index sets

    Indices outside every block are left unchanged.
    """

    def __init__(self, blocks):
        self.blocks = blocks

    def apply(self, X, inverse=False, adjoint=False, overwrite=False):
        out = X if overwrite else X.copy()
        for indices, factors in self.blocks:
            if not indices.size:
                continue
            if inverse:
                out[indices] = dense.lu_solve(factors, out[indices],
                                              transposed=adjoint)
            else:
                out[indices] = factors.matmul(out[indices],
                                              transposed=adjoint)
        return out


@dataclass(frozen=True)
class LevelReport:
    level: int
    atol: float
    boxes: int
    rank_min: int
    rank_mean: float
    rank_max: int
    residual_forward: float
    residual_adjoint: float
    flagged: int
    seconds: float


@dataclass(eq=False)
class SkelFactorization:
    n: int
    steps: list
    skeleton: np.ndarray
    final_factors: dense.LuFactors
    tolerances: dict = field(default_factory=dict)
    method: str = "rsrs"
    p: int = 0
    levels: list = field(default_factory=list)
    seconds: float = 0.0
    sketch_seconds: float = 0.0

    @property
    def diagonal(self):
        blocks = [(step.residual, step.Xrr_factors) for step in self.steps]
        blocks.append((self.skeleton, self.final_factors))
        return BlockDiagonal(blocks)

    def operators(self):
        """Factors of K in product order"""
        ops = []
        for step in self.steps:
            ops.extend(step.left_factors)
        ops.append(self.diagonal)
        for step in reversed(self.steps):
            ops.extend(step.right_factors)
        return ops


def _operand(f, X):
    X = np.array(X, dtype=np.float64)
    if X.shape[0] != f.n:
        raise ShapeError(f"Operand has {X.shape[0]} rows, expected {f.n}")
    vector = X.ndim == 1
    return (X.reshape(-1, 1) if vector else X), vector


def factor_apply(f, X, transposed=False):
    """K·X, or Kᵀ·X

    :param SkelFactorization f:
    :param numpy.ndarray X:
    :rtype: numpy.ndarray
    """
    X, vector = _operand(f, X)
    ops = f.operators()
    if transposed:
        for op in ops:
            op.apply(X, adjoint=True, overwrite=True)
    else:
        for op in reversed(ops):
            op.apply(X, overwrite=True)
    return X.reshape(-1) if vector else X


def factor_solve(f, B, transposed=False):
    """K⁻¹·B, or K⁻ᵀ·B

    :param SkelFactorization f:
    :param numpy.ndarray B:
    :rtype: numpy.ndarray
    """
    X, vector = _operand(f, B)
    ops = f.operators()
    if transposed:
        for op in reversed(ops):
            op.apply(X, inverse=True, adjoint=True, overwrite=True)
    else:
        for op in ops:
            op.apply(X, inverse=True, overwrite=True)
    return X.reshape(-1) if vector else X


def factor_memory(f):
    """Stored scalars across all steps and the final block"""
    if f is None or f.n == 0:
        return 0
    total = sum(step.memory for step in f.steps)
    return int(total + f.skeleton.size ** 2)


def factor_report(f):
    """Summary record of a factorization

    :rtype: dict
    """
    ranks = [step.skeleton.size for step in f.steps]
    return dict(
        n=f.n,
        method=f.method,
        p=f.p,
        steps=len(f.steps),
        skeleton=int(f.skeleton.size),
        memory=factor_memory(f),
        max_rank=max(ranks) if ranks else 0,
        seconds=f.seconds,
        sketch_seconds=f.sketch_seconds,
        tolerances={str(k): v for k, v in sorted(f.tolerances.items())},
        levels=[asdict(level) for level in f.levels],
    )


def _interpolation(sample, skel, resid, atol):
    """Least-squares X, |skel|×|resid|, with sample[resid] ≈ Xᵀ·sample[skel]

    Singular values of sample[skel] below `atol` are truncated.
    """
    if not skel.size or not resid.size:
        return np.zeros((skel.size, resid.size))
    basis = sample[skel].T
    largest = np.linalg.norm(basis, 2)
    if largest == 0.0:
        return np.zeros((skel.size, resid.size))
    solution, _, _, _ = scipy.linalg.lstsq(
        basis, sample[resid].T, cond=atol / largest, check_finite=False)
    return solution


def select_skeleton(forward, adjoint, atol, kmax):
    """Shared skeleton of a box from its forward and adjoint far-field data

    `forward` and `adjoint` are |B|×w matrices whose rows are the box's
    indices. A row ID of `forward` and a row ID of `adjoint` (the column ID
    of the adjoint block) each select skeleton positions; when they differ
    the union is kept and both interpolation matrices are refit against it.

    :return: skeleton positions, residual positions, T_rs, T_sr and whether
        both IDs reached the tolerance
    :rtype: tuple
    """
    rows = forward.shape[0]
    rid = dense.row_id(forward, atol, kmax)
    cid = dense.column_id(adjoint.T, atol, kmax)
    reached = rid.tolerance_reached and cid.tolerance_reached

    if set(rid.skel.tolist()) == set(cid.skel.tolist()):
        skel, resid = rid.skel, rid.resid
        T_rs = rid.T
        order = {v: i for i, v in enumerate(cid.skel.tolist())}
        skel_perm = [order[v] for v in skel.tolist()]
        order = {v: i for i, v in enumerate(cid.resid.tolist())}
        resid_perm = [order[v] for v in resid.tolist()]
        T_sr = cid.T[np.ix_(skel_perm, resid_perm)] if cid.T.size else \
            np.zeros((skel.size, resid.size))
    else:
        skel = np.union1d(rid.skel, cid.skel).astype(np.int64)
        resid = np.setdiff1d(np.arange(rows), skel).astype(np.int64)
        T_rs = _interpolation(forward, skel, resid, atol).T
        T_sr = _interpolation(adjoint, skel, resid, atol)

    return skel, resid, np.ascontiguousarray(T_rs), \
        np.ascontiguousarray(T_sr), bool(reached)


def complete_step(box, level, residual, skeleton, near, T_rs, T_sr,
                  X_rr, X_rc, X_cr, atol, prune=True, reached=True):
    """Build the Schur elimination data of a step

    X_rc is X_rr's coupling to [I_s, I_n] and X_cr the transpose side. When
    `prune` is set and both near-field parts are below 1e-2·atol, the step
    eliminates against I_s only.

    :rtype: EliminationStep
    """
    k = skeleton.size
    coupled = np.concatenate([skeleton, near])
    if prune and near.size:
        negligible = 1e-2 * atol
        if (np.linalg.norm(X_rc[:, k:]) <= negligible
                and np.linalg.norm(X_cr[k:]) <= negligible):
            coupled = skeleton
            X_rc = X_rc[:, :k]
            X_cr = X_cr[:k]

    try:
        factors = dense.lu_factor(X_rr)
    except SingularPivotError as e:
        raise FactorizationError(
            f"Box {box}: X_rr is singular at pivot {e.pivot}", box=box)

    G_right = dense.lu_solve(factors, X_rc)
    G_left = dense.lu_solve(factors, X_cr.T, transposed=True).T

    return EliminationStep(
        box=box,
        level=level,
        residual=as_index(residual),
        skeleton=as_index(skeleton),
        T_rs=T_rs,
        T_sr=T_sr,
        coupled=as_index(coupled),
        G_left=np.ascontiguousarray(G_left),
        G_right=np.ascontiguousarray(G_right),
        Xrr_factors=factors,
        tolerance_reached=reached,
    )


def _trivial_step(box, level, active, reached):
    empty = np.zeros((0, 0))
    return EliminationStep(
        box=box,
        level=level,
        residual=_EMPTY,
        skeleton=as_index(active),
        T_rs=np.zeros((0, active.size)),
        T_sr=np.zeros((active.size, 0)),
        coupled=_EMPTY,
        G_left=np.zeros((0, 0)),
        G_right=np.zeros((0, 0)),
        Xrr_factors=dense.lu_factor(empty),
        tolerance_reached=reached,
    )


def skeletonize_box_blackbox(s, tree, b, atol, kmax, oversampling=10,
                             prune=True):
    """Skeletonize box `b` of the current operator from its sketches

    Updates `s` for both halves of the step. The tree is not modified.

    :param SketchSet s:
    :param BoxTree tree:
    :param int b: box id
    :param float atol: absolute ID tolerance
    :param int kmax: rank cap
    :rtype: EliminationStep
    """
    box = tree.box(b)
    active = box.active_indices
    if not active.size:
        raise FactorizationError(f"Box {b} has no active indices", box=b)
    near = _tree.near_active_indices(tree, b)

    forward = nullified_sample(s, tree, b, FORWARD, width_cap=kmax)
    adjoint = nullified_sample(s, tree, b, ADJOINT, width_cap=kmax)
    skel, resid, T_rs, T_sr, reached = select_skeleton(
        forward.sample / np.sqrt(max(forward.width, 1)),
        adjoint.sample / np.sqrt(max(adjoint.width, 1)),
        atol, kmax,
    )

    width = min(forward.width, adjoint.width)
    if skel.size >= width and width < active.size:
        reached = False
    if not reached:
        log.warning(f"Box {b}: tolerance {atol:.1e} not reached with "
                    f"rank {skel.size} (kmax {kmax}, width {width})")

    skeleton = active[skel]
    residual = active[resid]
    log.debug(f"Box {b}: {active.size} active, {near.size} near, "
              f"rank {skeleton.size}")

    if not residual.size:
        return _trivial_step(b, box.level, active, reached)

    apply_elimination(s,
                      left=[Elim(T_rs, residual, skeleton)],
                      right=[Elim(T_sr, skeleton, residual)])

    columns = np.concatenate([active, near])
    coupled = np.concatenate([skel, active.size + np.arange(near.size)])
    rows_forward = extract_block(s, residual, columns, FORWARD, oversampling)
    cols_adjoint = extract_block(s, residual, columns, ADJOINT, oversampling)

    X_rr = rows_forward[:, resid]
    gap = np.abs(X_rr - cols_adjoint[resid]).max()
    if gap > 10 * atol:
        log.warning(f"Box {b}: forward and adjoint X_rr differ by {gap:.2e}")

    step = complete_step(
        b, box.level, residual, skeleton, near, T_rs, T_sr,
        X_rr=X_rr,
        X_rc=rows_forward[:, coupled],
        X_cr=cols_adjoint[coupled],
        atol=atol,
        prune=prune,
        reached=reached,
    )
    apply_elimination(s, left=[step.L], right=[step.U])
    return step


def auto_sample_count(tree, kmax, oversampling=10):
    """max over finest boxes of |I_b ∪ I_n|, plus kmax and oversampling

    :rtype: int
    """
    largest = 0
    for b in _tree.level_order(tree, tree.depth):
        size = sum(tree.box(a).point_indices.size
                   for a in _tree.neighbors(tree, b))
        largest = max(largest, size)

    p = largest + kmax + oversampling
    n = tree.points.n
    if p > n:
        log.warning(f"Automatic sample count {p} exceeds N={n}, using {n}")
        p = n
    return p


def _colour_groups(tree, boxes):
    groups = {}
    for b in boxes:
        key = tuple(c % 3 for c in tree.box(b).cell)
        groups.setdefault(key, []).append(b)
    return [groups[key] for key in sorted(groups)]


def _process_level(s, tree, level, atol, sched, oversampling, parallel):
    boxes = _tree.level_order(tree, level)
    steps = []
    lock = threading.Lock()

    def process(b):
        box = tree.box(b)
        if not box.active_indices.size:
            box.processed = True
            return None
        step = skeletonize_box_blackbox(s, tree, b, atol, sched.kmax,
                                        oversampling=oversampling)
        with lock:
            box.active_indices = step.skeleton
            box.processed = True
        return step

    if parallel:
        with ThreadPoolExecutor(max_workers=thread_count()) as pool:
            for group in _colour_groups(tree, boxes):
                steps.extend(pool.map(process, group))
    else:
        steps.extend(process(b) for b in boxes)

    return [step for step in steps if step is not None]


def _summarize(level, atol, steps, estimates, seconds):
    ranks = [step.skeleton.size for step in steps] or [0]
    forward = [v[0] for v in estimates.values()] or [0.0]
    adjoint = [v[1] for v in estimates.values()] or [0.0]
    return LevelReport(
        level=level,
        atol=atol,
        boxes=len(steps),
        rank_min=int(min(ranks)),
        rank_mean=float(np.mean(ranks)),
        rank_max=int(max(ranks)),
        residual_forward=float(max(forward)),
        residual_adjoint=float(max(adjoint)),
        flagged=sum(not step.tolerance_reached for step in steps),
        seconds=seconds,
    )


def final_skeleton(tree, stop_level, processed):
    if not processed:
        return np.arange(tree.points.n, dtype=np.int64)
    parts = [tree.box(b).active_indices
             for b in _tree.level_order(tree, stop_level)]
    return as_index(np.concatenate(parts)) if parts else _EMPTY


def rsrs_factor(o, tree, p, sched, seed, stop_level=2, oversampling=10,
                parallel=False):
    """Factorize a black-box operator by randomized strong skeletonization

    Sketches are drawn once. Levels are processed from the leaves up to
    `stop_level`, with tolerance `sched.atol(level, depth)`; the remaining
    skeleton block is extracted from the sketches and LU-factored.

    :param LinearOracle o:
    :param BoxTree tree: reset before use
    :param int p: sample count
    :param ToleranceSchedule sched:
    :param int seed:
    :param int stop_level: last level to skeletonize
    :param int oversampling: spare samples for extractions
    :param bool parallel: process non-interacting boxes concurrently
    :rtype: SkelFactorization
    """
    if tree.points.n != o.n:
        raise ShapeError(f"Tree holds {tree.points.n} points, "
                         f"operator has dimension {o.n}")
    tree.reset()

    sketch_watch = Stopwatch()
    with sketch_watch:
        s = build_sketches(o, p, seed)
    log.info(f"Factorizing {o!r} with p={p}, depth {tree.depth}")

    watch = Stopwatch()
    steps = []
    reports = []
    tolerances = {}
    levels = list(range(tree.depth, stop_level - 1, -1))

    for level in levels:
        level_watch = Stopwatch()
        with level_watch, watch:
            atol = sched.atol(level, tree.depth)
            tolerances[level] = atol
            if level < tree.depth:
                for b in _tree.level_order(tree, level):
                    _tree.merged_active_indices(tree, b)

            level_steps = _process_level(s, tree, level, atol, sched,
                                         oversampling, parallel)
            steps.extend(level_steps)

        estimates = coupling_residual_estimate(s, tree, level, level_steps)
        report = _summarize(level, atol, level_steps, estimates,
                            level_watch.seconds)
        reports.append(report)
        log.info(f"Level {level}: {report.boxes} boxes, ranks "
                 f"{report.rank_min}..{report.rank_max}, residual "
                 f"{report.residual_forward:.1e}, "
                 f"{report.seconds:.2f}s")

    with watch:
        skeleton = final_skeleton(tree, stop_level, bool(levels))
        limit = p - oversampling
        if skeleton.size > limit:
            raise FinalSkeletonTooLargeError(
                f"Final skeleton of {skeleton.size} exceeds p - "
                f"oversampling = {limit}; use a deeper tree or larger p",
                deficit=skeleton.size - limit,
            )
        block = extract_block(s, skeleton, skeleton, FORWARD, oversampling)
        try:
            final = dense.lu_factor(block)
        except SingularPivotError as e:
            raise FactorizationError(
                f"Final skeleton block is singular at pivot {e.pivot}")

    f = SkelFactorization(
        n=o.n,
        steps=steps,
        skeleton=skeleton,
        final_factors=final,
        tolerances=tolerances,
        method="rsrs",
        p=p,
        levels=reports,
        seconds=watch.seconds,
        sketch_seconds=sketch_watch.seconds,
    )
    log.info(f"Factorized in {f.seconds:.2f}s, {len(steps)} steps, "
             f"final skeleton {skeleton.size}, memory {factor_memory(f)}")
    return f
