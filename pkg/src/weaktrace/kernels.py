"""Hot loops of the grid engine with a compiled backend when available.

``BACKEND`` is ``"compiled"`` when the Cython extension imported and
``"numpy"`` otherwise; setting ``WEAKTRACE_PURE=1`` forces the NumPy path.
"""

from __future__ import annotations

import os

import numpy as np


def translate_inplace_numpy(x: np.ndarray, d: np.ndarray, dk: float) -> None:
    N = x.shape[1]
    k = dk * np.fft.fftfreq(N, d=1.0 / N)
    x *= np.exp(-1j * np.outer(d, k))


def beam_split_numpy(x1: np.ndarray, x2: np.ndarray, t: float, r: float):
    ir = 1j * r
    return t * x1 + ir * x2, ir * x1 + t * x2


def weighted_intensity_numpy(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (x.real ** 2 + x.imag ** 2) @ w


translate_inplace = translate_inplace_numpy
beam_split = beam_split_numpy
weighted_intensity = weighted_intensity_numpy
BACKEND = "numpy"

if os.environ.get("WEAKTRACE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        def translate_inplace(x, d, dk):  # noqa: F811
            _kernels.translate_inplace(x, np.ascontiguousarray(d, dtype=float), float(dk))

        def beam_split(x1, x2, t, r):  # noqa: F811
            return _kernels.beam_split(np.ascontiguousarray(x1), np.ascontiguousarray(x2), float(t), float(r))

        def weighted_intensity(x, w):  # noqa: F811
            return _kernels.weighted_intensity(np.ascontiguousarray(x), np.ascontiguousarray(w, dtype=float))

        BACKEND = "compiled"
