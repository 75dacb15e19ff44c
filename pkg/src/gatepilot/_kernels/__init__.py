"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``_core``, built from ``_core.pyx``) and the
reference module (``_ref``) export the same functions:

- ``quad_step_batch``   forward-Euler quadrotor step over a batch
- ``ekf_predict``       full 16-state EKF time update (state + covariance)
- ``fill_convex_poly``  scanline polygon fill into a uint8 mask
- ``trace_contours``    crack-boundary loops of a binary mask
- ``rotate_mask_nn``    nearest-neighbor mask rotation about a center

Selection happens at import: the compiled core is used when present
unless ``GATEPILOT_PURE_KERNELS=1`` is set.  ``IMPL`` names the active
backend so tests and benchmarks can report it.
"""

import os

from . import _ref

if os.environ.get("GATEPILOT_PURE_KERNELS", "0") == "1":
    _impl = _ref
    IMPL = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        IMPL = "compiled"
    except ImportError:
        _impl = _ref
        IMPL = "pure"

quad_step_batch = _impl.quad_step_batch
ekf_predict = _impl.ekf_predict
fill_convex_poly = _impl.fill_convex_poly
trace_contours = _impl.trace_contours
rotate_mask_nn = _impl.rotate_mask_nn
