"""Randomized accuracy estimates of a factorization against its operator"""
import logging

from .core import factor_apply, factor_solve
from .dense import spectral_norm_estimate
from .exceptions import ShapeError

log = logging.getLogger("rsrs")


def _check(o, f):
    if o.n != f.n:
        raise ShapeError(f"Factorization has dimension {f.n}, "
                         f"operator has {o.n}")


def operator_norm_estimate(o, iters=20, seed=0):
    return spectral_norm_estimate(o.apply, o.apply_adjoint, o.n,
                                  iters=iters, seed=seed)


def relerr_estimate(o, f, iters=20, seed=0):
    """‖A − K‖₂ / ‖A‖₂ by power iteration on both operators

    :param LinearOracle o:
    :param SkelFactorization f:
    :rtype: float
    """
    _check(o, f)
    if o.n == 0:
        return 0.0

    def apply(x):
        return o.apply(x) - factor_apply(f, x)

    def apply_adjoint(x):
        return o.apply_adjoint(x) - factor_apply(f, x, transposed=True)

    difference = spectral_norm_estimate(apply, apply_adjoint, o.n,
                                        iters=iters, seed=seed)
    norm = operator_norm_estimate(o, iters=iters, seed=seed)
    if norm == 0.0:
        return 0.0 if difference == 0.0 else float("inf")

    log.debug(f"‖A − K‖ ≈ {difference:.3e}, ‖A‖ ≈ {norm:.3e}")
    return difference / norm


def errsolve_estimate(o, f, iters=20, seed=0):
    """‖I − K⁻¹A‖₂ by power iteration

    :param LinearOracle o:
    :param SkelFactorization f:
    :rtype: float
    """
    _check(o, f)
    if o.n == 0:
        return 0.0

    def apply(x):
        return x - factor_solve(f, o.apply(x))

    def apply_adjoint(x):
        return x - o.apply_adjoint(factor_solve(f, x, transposed=True))

    return spectral_norm_estimate(apply, apply_adjoint, o.n,
                                  iters=iters, seed=seed)
