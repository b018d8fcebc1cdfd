"""Uniform hierarchical partition of a point set

Boxes are numbered in level order with the root as 1. At level ℓ the local
index of a box is the Morton code of its integer cell coordinates, so the
children of a box are contiguous and, in 1D, level ℓ holds boxes
2^ℓ .. 2^(ℓ+1)−1 from left to right.

"""
import logging
import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import TreeError
from .util import as_index

log = logging.getLogger("rsrs")

# Largest number of leaf boxes a tree may materialize
MAX_LEAF_BOXES = 1 << 22


@dataclass(frozen=True, eq=False)
class PointSet:
    """N points in 1, 2 or 3 dimensions"""
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1)
        if coords.ndim != 2 or coords.shape[1] not in (1, 2, 3):
            raise TreeError(f"Points must be N x dim with dim in 1..3, "
                            f"got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise TreeError("Point coordinates must be finite")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def dim(self):
        return self.coords.shape[1]

    @property
    def lower(self):
        return self.coords.min(axis=0)

    @property
    def upper(self):
        return self.coords.max(axis=0)


@dataclass(eq=False)
class TreeBox:
    id: int
    level: int
    parent: int
    children: tuple
    cell: tuple
    center: np.ndarray
    half_width: np.ndarray
    point_indices: np.ndarray
    active_indices: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64))
    processed: bool = False

    @property
    def is_empty(self):
        return self.point_indices.size == 0

    @property
    def is_leaf(self):
        return not self.children


def level_offset(level, dim):
    """Id of the first box at `level`"""
    return ((1 << (dim * level)) - 1) // ((1 << dim) - 1) + 1


def morton(cells, level):
    """Interleave the bits of integer cell coordinates

    :param numpy.ndarray cells: K×dim cell coordinates in [0, 2^level)
    :param int level:
    :return: local box indices
    :rtype: numpy.ndarray
    """
    cells = np.asarray(cells, dtype=np.int64)
    dim = cells.shape[1]
    code = np.zeros(cells.shape[0], dtype=np.int64)
    for bit in range(level - 1, -1, -1):
        code <<= dim
        for axis in range(dim):
            code |= ((cells[:, axis] >> bit) & 1) << axis
    return code


def demorton(code, level, dim):
    code = np.asarray(code, dtype=np.int64)
    cells = np.zeros((code.size, dim), dtype=np.int64)
    for bit in range(level):
        for axis in range(dim):
            cells[:, axis] |= ((code >> (bit * dim + axis)) & 1) << bit
    return cells


class BoxTree(object):
    """Boxes of a uniform tree, indexed by id

    After construction only `active_indices` and `processed` change, and only
    through the factorization driver.
    """

    def __init__(self, points, m, depth, boxes, admissibility="strong"):
        self.points = points
        self.dim = points.dim
        self.m = m
        self.depth = depth
        self.admissibility = admissibility
        self._boxes = boxes
        self._neighbors = {}

    def __repr__(self):
        return (f"BoxTree(N={self.points.n}, dim={self.dim}, m={self.m}, "
                f"depth={self.depth})")

    def __len__(self):
        return len(self._boxes)

    def box(self, b):
        try:
            return self._boxes[b]
        except KeyError:
            raise TreeError(f"No box with id {b}")

    def box_ids(self, level):
        if not 0 <= level <= self.depth:
            raise TreeError(f"Level {level} outside 0..{self.depth}")
        first = level_offset(level, self.dim)
        return list(range(first, first + (1 << (self.dim * level))))

    def box_at(self, level, cell):
        """Id of the box with integer coordinates `cell` at `level`"""
        code = morton(np.asarray(cell).reshape(1, -1), level)[0]
        return level_offset(level, self.dim) + int(code)

    def reset(self):
        """Restore active indices to the leaf point sets"""
        for box in self._boxes.values():
            box.processed = False
            if box.level == self.depth:
                box.active_indices = box.point_indices.copy()
            else:
                box.active_indices = np.zeros(0, dtype=np.int64)


def build_tree(points, m, admissibility="strong"):
    """Bisect the bounding box uniformly until every leaf holds ≤ m points

    :param points: PointSet or coordinate array
    :param int m: leaf capacity
    :param str admissibility: "strong" (neighbours share an edge or corner)
        or "weak" (every box is its own only neighbour)
    :rtype: BoxTree
    """
    if not isinstance(points, PointSet):
        points = PointSet(points)
    if points.n == 0:
        raise TreeError("Cannot build a tree over zero points")
    if m < 1:
        raise TreeError(f"Leaf capacity must be at least 1, got {m}")
    if admissibility not in ("strong", "weak"):
        raise TreeError(f"Unknown admissibility {admissibility!r}")

    dim = points.dim
    lower, upper = points.lower, points.upper
    center = (lower + upper) / 2
    half = (upper - lower) / 2
    widest = half.max()
    if widest == 0.0:
        half = np.full(dim, 0.5)
    else:
        half = np.where(half > 0, half, widest)
    origin = center - half
    unit = (points.coords - origin) / (2 * half)

    depth = 0
    while True:
        side = 1 << depth
        cells = np.clip(np.floor(unit * side), 0, side - 1).astype(np.int64)
        counts = np.bincount(morton(cells, depth), minlength=side ** dim)
        if counts.max() <= m:
            break
        depth += 1
        if (1 << (dim * depth)) > MAX_LEAF_BOXES:
            raise TreeError(
                f"Leaf capacity {m} unreachable: {counts.max()} points "
                f"share a box at depth {depth - 1}"
            )

    boxes = {}
    for level in range(depth + 1):
        count = 1 << (dim * level)
        first = level_offset(level, dim)
        level_cells = cells >> (depth - level)
        local = morton(level_cells, level)
        order = np.argsort(local, kind="stable")
        bounds = np.searchsorted(local[order], np.arange(count + 1))
        box_cells = demorton(np.arange(count), level, dim)
        box_half = half / (1 << level)

        for q in range(count):
            b = first + q
            if level < depth:
                child = level_offset(level + 1, dim) + (q << dim)
                children = tuple(range(child, child + (1 << dim)))
            else:
                children = ()
            if level == 0:
                parent = 0
            else:
                parent = level_offset(level - 1, dim) + (q >> dim)

            cell = box_cells[q]
            boxes[b] = TreeBox(
                id=b,
                level=level,
                parent=parent,
                children=children,
                cell=tuple(int(c) for c in cell),
                center=origin + (2 * cell + 1) * box_half,
                half_width=box_half.copy(),
                point_indices=np.sort(order[bounds[q]:bounds[q + 1]]),
            )

    tree = BoxTree(points, m, depth, boxes, admissibility=admissibility)
    tree.reset()
    log.debug(f"Built {tree!r} with {len(tree)} boxes")
    return tree


def neighbors(tree, b):
    """Same-level nonempty boxes touching `b`, including `b` itself

    Closed boxes on a uniform grid intersect exactly when their integer cell
    coordinates differ by at most one on every axis.

    :rtype: list[int]
    """
    if b in tree._neighbors:
        return tree._neighbors[b]

    box = tree.box(b)
    if tree.admissibility == "weak":
        result = [b]
    else:
        side = 1 << box.level
        cell = np.asarray(box.cell)
        result = []
        for offset in itertools.product((-1, 0, 1), repeat=tree.dim):
            other = cell + offset
            if np.any(other < 0) or np.any(other >= side):
                continue
            a = tree.box_at(box.level, other)
            if a == b or not tree.box(a).is_empty:
                result.append(a)
        result.sort()

    tree._neighbors[b] = result
    return result


def far_field(tree, b):
    """Same-level nonempty boxes that are not neighbours of `b`

    :rtype: list[int]
    """
    box = tree.box(b)
    near = set(neighbors(tree, b))
    return [a for a in tree.box_ids(box.level)
            if a not in near and not tree.box(a).is_empty]


def near_active_indices(tree, b):
    """Active indices of the neighbours of `b`, excluding `b`"""
    parts = [tree.box(a).active_indices
             for a in neighbors(tree, b) if a != b]
    if not parts:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(parts)


def merged_active_indices(tree, b):
    """Concatenate the children's active indices into the parent

    :param BoxTree tree:
    :param int b: parent box id
    :return: the parent's new active indices
    :rtype: numpy.ndarray
    """
    box = tree.box(b)
    if box.is_leaf:
        raise TreeError(f"Box {b} is a leaf and has nothing to merge")

    parts = []
    for c in box.children:
        child = tree.box(c)
        if child.is_empty:
            continue
        if not child.processed:
            raise TreeError(
                f"Cannot merge into box {b}: child {c} not processed"
            )
        parts.append(child.active_indices)

    merged = as_index(np.concatenate(parts)) if parts else \
        np.zeros(0, dtype=np.int64)
    box.active_indices = merged
    return merged


def level_order(tree, level):
    """Ascending ids of the nonempty boxes at `level`

    :rtype: list[int]
    """
    return [b for b in tree.box_ids(level) if not tree.box(b).is_empty]
