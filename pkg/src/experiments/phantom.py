"""
SOUP Phantom Module
Synthetic piecewise-smooth complex test images
"""
from typing import Optional

import numpy as np

# modified Shepp-Logan: (intensity, semi-axis x, semi-axis y, center x, center y, angle in degrees)
_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def phantom(height: int, width: Optional[int] = None, smooth: bool = True) -> np.ndarray:
    """Unit-peak complex ellipse phantom.

    With `smooth`, the piecewise-constant ellipse intensities are modulated
    by a slowly varying bias field and a smooth phase ramp, which makes the
    magnitude piecewise smooth and the image genuinely complex.
    """
    width = height if width is None else width
    y, x = np.meshgrid(
        np.linspace(1.0, -1.0, height),
        np.linspace(-1.0, 1.0, width),
        indexing="ij",
    )
    image = np.zeros((height, width))
    for intensity, a, b, x0, y0, angle in _ELLIPSES:
        theta = np.deg2rad(angle)
        xr = (x - x0) * np.cos(theta) + (y - y0) * np.sin(theta)
        yr = -(x - x0) * np.sin(theta) + (y - y0) * np.cos(theta)
        image[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += intensity

    out = image.astype(np.complex128)
    if smooth:
        bias = 1.0 + 0.25 * np.cos(0.5 * np.pi * x) * np.cos(0.4 * np.pi * (y - 0.2))
        phase = np.pi * (0.3 * x + 0.2 * y * y)
        out = image * bias * np.exp(1j * phase)
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def normalize_peak(image: np.ndarray) -> np.ndarray:
    """Scale to unit peak magnitude; all-zero images are returned unchanged"""
    image = np.asarray(image, dtype=np.complex128)
    peak = float(np.abs(image).max(initial=0.0))
    return image / peak if peak > 0 else image.copy()
