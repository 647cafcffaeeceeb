"""Backend selection for the hot kernels.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy fallback in ``_pykernels`` is used.  Setting ``CCREGION_PURE_PYTHON=1``
forces the fallback.
"""
import os

from . import _pykernels

OPTIMAL = _pykernels.OPTIMAL
UNBOUNDED = _pykernels.UNBOUNDED
ITERATION_LIMIT = _pykernels.ITERATION_LIMIT
INFEASIBLE = _pykernels.INFEASIBLE
BASIC = _pykernels.BASIC
AT_LOWER = _pykernels.AT_LOWER
AT_UPPER = _pykernels.AT_UPPER

_impl = _pykernels
BACKEND = "python"

if os.environ.get("CCREGION_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

binomial_tail_many = _impl.binomial_tail_many
min_mixture = _impl.min_mixture
simplex_iterate = _impl.simplex_iterate
dual_simplex_iterate = _impl.dual_simplex_iterate


def use_backend(name: str) -> None:
    """Switch backends at runtime (``"python"`` or ``"cython"``); used by tests and benchmarks."""
    global _impl, BACKEND, binomial_tail_many, min_mixture, simplex_iterate, dual_simplex_iterate
    if name == "python":
        _impl = _pykernels
    elif name == "cython":
        from . import _ckernels
        _impl = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    binomial_tail_many = _impl.binomial_tail_many
    min_mixture = _impl.min_mixture
    simplex_iterate = _impl.simplex_iterate
    dual_simplex_iterate = _impl.dual_simplex_iterate


def available_backends() -> list:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names
