"""Gaussian sketches and the post-processing that makes them reusable

A SketchSet holds Y = A_g·Ω and Z = A_gᵀ·Ψ for the current, partially
eliminated operator A_g. Eliminations update the quadruple in place instead
of drawing new samples.

"""
import logging
import threading
from dataclasses import dataclass

import numpy as np

from . import dense
from .exceptions import InsufficientSamplesError, ShapeError
from .tree import near_active_indices
from .util import as_index, counter_generator

log = logging.getLogger("rsrs")

FORWARD = "forward"
ADJOINT = "adjoint"

# Pseudo-inverse residual above which an extraction is reported
CONDITIONING_LIMIT = 1e-8

_generation_lock = threading.Lock()


@dataclass(eq=False)
class SketchSet:
    p: int
    omega: np.ndarray
    psi: np.ndarray
    y: np.ndarray
    z: np.ndarray
    seed: int
    generation: int = 0

    @property
    def n(self):
        return self.omega.shape[0]

    def pair(self, side):
        """Test and sample matrix for `side`"""
        if side == FORWARD:
            return self.omega, self.y
        if side == ADJOINT:
            return self.psi, self.z
        raise ValueError(f"Unknown side {side!r}")

    def copy(self):
        return SketchSet(
            p=self.p,
            omega=self.omega.copy(),
            psi=self.psi.copy(),
            y=self.y.copy(),
            z=self.z.copy(),
            seed=self.seed,
            generation=self.generation,
        )


@dataclass(frozen=True, eq=False)
class NullifiedSample:
    box: int
    side: str
    sample: np.ndarray
    width: int
    available: int


def draw_gaussian(rows, cols, seed, stream=0):
    """Standard normal matrix from the Philox counter generator

    Raw 64-bit words are consumed in pairs; the top 53 bits of each give the
    uniforms of a Box–Muller transform. Values fill the matrix row-major.

    :param int rows:
    :param int cols:
    :param int seed:
    :param int stream:
    :rtype: numpy.ndarray
    """
    count = rows * cols
    if count == 0:
        return np.zeros((rows, cols))

    pairs = (count + 1) // 2
    raw = counter_generator(seed, stream).random_raw(2 * pairs)
    shift = np.uint64(11)
    u1 = ((raw[0::2] >> shift).astype(np.float64) + 1.0) * 2.0 ** -53
    u2 = (raw[1::2] >> shift).astype(np.float64) * 2.0 ** -53

    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    values = np.empty(2 * pairs)
    values[0::2] = radius * np.cos(angle)
    values[1::2] = radius * np.sin(angle)
    return values[:count].reshape(rows, cols)


def build_sketches(o, p, seed):
    """Draw Ω and Ψ and sample the operator once

    :param LinearOracle o:
    :param int p: sample count
    :param int seed:
    :rtype: SketchSet
    """
    if not 1 <= p <= o.n:
        raise ShapeError(f"Sample count must lie in 1..{o.n}, got {p}")

    omega = draw_gaussian(o.n, p, seed, stream=0)
    psi = draw_gaussian(o.n, p, seed, stream=1)
    y = np.array(o.apply(omega), dtype=np.float64, order="C")
    z = np.array(o.apply_adjoint(psi), dtype=np.float64, order="C")
    log.debug(f"Drew {p} forward and adjoint samples of {o!r}")

    return SketchSet(p=p, omega=omega, psi=psi, y=y, z=z, seed=seed)


def nullify(s, rows, nullified, side, width_cap=None, box=None, level=None):
    """Sample rows `rows` against a test matrix zeroed on `nullified`

    :rtype: tuple[numpy.ndarray, int]
    """
    rows = as_index(rows)
    nullified = as_index(nullified)
    available = s.p - nullified.size
    if available < 1:
        raise InsufficientSamplesError(
            f"Box {box} at level {level}: {nullified.size} nullified rows "
            f"leave no samples out of p={s.p}",
            deficit=1 - available, box=box, level=level,
        )

    test, sample = s.pair(side)
    basis = dense.nullspace_basis(test[nullified])
    if width_cap is not None:
        basis = basis[:, :width_cap]
    return sample[rows] @ basis, available


def nullified_sample(s, tree, b, side, width_cap=None):
    """Far-field sample of box `b`

    Ω (or Ψ) is projected onto the nullspace of its rows at the active
    indices of `b` and its neighbours, leaving only far-field interactions
    in the sample of the box's active rows.

    :param SketchSet s:
    :param BoxTree tree:
    :param int b: box id
    :param str side: FORWARD or ADJOINT
    :param int width_cap: keep at most this many leading columns
    :rtype: NullifiedSample
    """
    box = tree.box(b)
    rows = box.active_indices
    nullified = np.concatenate([rows, near_active_indices(tree, b)])
    block, available = nullify(s, rows, nullified, side,
                               width_cap=width_cap,
                               box=b,
                               level=box.level)
    return NullifiedSample(
        box=b,
        side=side,
        sample=block,
        width=block.shape[1],
        available=available,
    )


def extract_block(s, target_rows, source_cols, side, oversampling=10):
    """Recover an explicit block of the current operator

    Forward: A_g(target, source) = Y(target,:)·Ω(source,:)†, valid when the
    target rows vanish outside `source_cols`. Adjoint returns
    A_g(source, target) from Z and Ψ.

    :rtype: numpy.ndarray
    """
    target = as_index(target_rows)
    source = as_index(source_cols)
    if s.p < source.size:
        raise InsufficientSamplesError(
            f"Extracting {source.size} columns needs at least that many "
            f"samples, have p={s.p}",
            deficit=source.size - s.p,
        )
    if s.p < source.size + oversampling:
        log.warning(f"Extraction of {source.size} columns runs with "
                    f"{s.p - source.size} spare samples")

    test, sample = s.pair(side)
    block = test[source]
    inverse = dense.right_pseudoinverse(block)

    residual = np.linalg.norm(block @ inverse - np.eye(source.size))
    if residual > CONDITIONING_LIMIT:
        log.warning(f"Ill-conditioned extraction over {source.size} "
                    f"columns: pseudo-inverse residual {residual:.2e}")

    result = sample[target] @ inverse
    return result if side == FORWARD else result.T.copy()


def apply_elimination(s, left=(), right=()):
    """Update the sketches for A ← V⁻¹·A·W⁻¹

    V is the product left[0]·left[1]⋯ and W is right[0]·right[1]⋯ of
    `dense.Elim` operators. Then Ω ← W·Ω, Y ← V⁻¹·Y, Ψ ← Vᵀ·Ψ and
    Z ← W⁻ᵀ·Z keep Y = A·Ω and Z = Aᵀ·Ψ.

    :param SketchSet s:
    :param left: factors of V
    :param right: factors of W
    """
    for op in reversed(right):
        op.apply(s.omega, overwrite=True)
        op.apply(s.z, inverse=True, adjoint=True, overwrite=True)
    for op in left:
        op.apply(s.y, inverse=True, overwrite=True)
        op.apply(s.psi, adjoint=True, overwrite=True)

    with _generation_lock:
        s.generation += 1


def update_sketches_elim(s, step):
    """Apply a completed elimination step, V = E·L and W = U·F"""
    apply_elimination(s, step.left_factors, step.right_factors)


def coupling_residual_estimate(s, tree, level, steps, scope="far"):
    """Estimate the coupling left on each eliminated block of a level

    For every step, the residual rows are sampled against a test matrix
    nullified on the residual indices and, with scope "far", on the box's
    skeleton and its neighbours' active indices as well. The Frobenius norm
    of the sample divided by √width estimates the coupling.

    :param SketchSet s:
    :param BoxTree tree:
    :param int level:
    :param steps: elimination steps of `level`
    :param str scope: "far" or "full"
    :return: box id to (forward, adjoint) estimate
    :rtype: dict
    """
    if scope not in ("far", "full"):
        raise ValueError(f"Unknown scope {scope!r}")

    estimates = {}
    for step in steps:
        if step.level != level or step.residual.size == 0:
            continue

        nullified = [step.residual]
        if scope == "far":
            nullified += [step.skeleton,
                          near_active_indices(tree, step.box)]
        nullified = np.concatenate(nullified)

        values = []
        for side in (FORWARD, ADJOINT):
            block, _ = nullify(s, step.residual, nullified, side,
                               box=step.box, level=level)
            width = max(block.shape[1], 1)
            values.append(float(np.linalg.norm(block) / np.sqrt(width)))
        estimates[step.box] = tuple(values)

    return estimates
