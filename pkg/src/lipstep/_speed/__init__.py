"""Hot-kernel backend selection.

The closed-loop simulator calls two small kernels once per control cycle:
exact pendulum propagation and the nine-variable stepping QP. A compiled
extension provides them when available; a pure NumPy implementation is the
fallback. Set LIPSTEP_PURE=1 to force the fallback (used by the benchmark).
"""

import os

if os.environ.get("LIPSTEP_PURE"):
    from .pure import propagate_planar, solve_step_qp

    BACKEND = "pure"
else:
    try:
        from lipstep._fastcore import propagate_planar, solve_step_qp

        BACKEND = "compiled"
    except ImportError:
        from .pure import propagate_planar, solve_step_qp

        BACKEND = "pure"

__all__ = ["propagate_planar", "solve_step_qp", "BACKEND"]
