"""Select the compiled kernels when available, else the numpy fallback.

Set ``CONTCONV_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
impl = _kernels_py

if os.environ.get("CONTCONV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        impl = _kernels_py

series_values = impl.series_values
series_derivatives = impl.series_derivatives
newton_refine_batch = impl.newton_refine_batch
absorb_samples = impl.absorb_samples


def fft_workers():
    """Worker count for scipy.fft, bounded by ``CONTCONV_THREADS``."""
    env = os.environ.get("CONTCONV_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
