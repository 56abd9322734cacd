"""Pick the compiled kernels if they were built, otherwise the numpy ones.

Set ``RSSLOCATE_BACKEND=python`` to force the fallback (``cython`` to
require the extension).
"""

import os

_want = os.environ.get("RSSLOCATE_BACKEND", "").strip().lower()

if _want == "python":
    from ._pykernels import box_qp_pg, mle_objective, mle_objective_grad
    BACKEND = "python"
else:
    try:
        from ._ckernels import box_qp_pg, mle_objective, mle_objective_grad
        BACKEND = "cython"
    except ImportError:
        if _want == "cython":
            raise
        from ._pykernels import box_qp_pg, mle_objective, mle_objective_grad
        BACKEND = "python"

__all__ = ["BACKEND", "box_qp_pg", "mle_objective", "mle_objective_grad"]
