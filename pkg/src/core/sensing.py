"""
SOUP Sensing Module
Undersampled unitary Fourier encoding, sampling masks and the zero-filled adjoint
"""
import logging
import os
from dataclasses import dataclass
from typing import Literal, Protocol, Tuple

import numpy as np
import scipy.fft

from .exceptions import DimensionError, ParameterError
from .linalg import ArrayLike, as_complex_vector

logger = logging.getLogger(__name__)

MaskScheme = Literal["cartesian", "random2d"]

# variable-density profile (1 - d/d_max)^q around DC, plus a fully kept center
DENSITY_POWER = 4
CENTER_FRACTION = 0.04
FACTOR_TOLERANCE = 0.05


def fft_workers() -> int:
    """Worker count for scipy.fft from SOUP_THREADS (default 1)"""
    raw = os.getenv("SOUP_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ParameterError(f"SOUP_THREADS must be a positive integer, got {raw!r}") from None
    if threads < 1:
        raise ParameterError(f"SOUP_THREADS must be a positive integer, got {raw!r}")
    return threads


class LinearOperator(Protocol):
    """Anything with a forward map from images and its adjoint"""

    def forward(self, y: np.ndarray) -> np.ndarray: ...

    def adjoint(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FourierOperator:
    """Unitary 2-D DFT with DC at the grid center (F^H F = I)"""

    height: int
    width: int

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.height, self.width):
            raise DimensionError(f"expected a {self.height}x{self.width} grid, got {x.shape}")
        return x

    def forward(self, y: ArrayLike) -> np.ndarray:
        y = self._check(y)
        return scipy.fft.fftshift(scipy.fft.fft2(y, norm="ortho", workers=fft_workers()))

    def adjoint(self, k: ArrayLike) -> np.ndarray:
        k = self._check(k)
        return scipy.fft.ifft2(scipy.fft.ifftshift(k), norm="ortho", workers=fft_workers())


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Boolean k-space membership of Omega, DC-centered"""

    kept: np.ndarray
    scheme: str = "custom"
    seed: int = 0

    def __post_init__(self):
        kept = np.array(self.kept, dtype=bool)
        if kept.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got shape {kept.shape}")
        if not kept.any():
            raise ParameterError("mask keeps no samples")
        kept.flags.writeable = False
        object.__setattr__(self, "kept", kept)

    @property
    def height(self) -> int:
        return self.kept.shape[0]

    @property
    def width(self) -> int:
        return self.kept.shape[1]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.kept))

    @property
    def factor(self) -> float:
        return self.kept.size / self.count

    def __eq__(self, other) -> bool:
        return isinstance(other, SamplingMask) and np.array_equal(self.kept, other.kept)


def _density(distance: np.ndarray) -> np.ndarray:
    # strictly positive so that every location stays selectable
    d_max = distance.max() + 1.0
    return (1.0 - distance / d_max) ** DENSITY_POWER


def _pick(rng: np.random.Generator, candidates: np.ndarray, weights: np.ndarray, count: int) -> np.ndarray:
    if count <= 0:
        return candidates[:0]
    p = weights / weights.sum()
    return rng.choice(candidates, size=count, replace=False, p=p)


def _cartesian_mask(h: int, w: int, factor: float, rng: np.random.Generator) -> np.ndarray:
    target = int(round(h / factor))
    center = h // 2
    band = max(1, int(np.ceil(CENTER_FRACTION * h)))
    start = center - band // 2
    forced = np.arange(start, start + band)
    if band > target:
        raise ParameterError(
            f"undersampling factor {factor} leaves {target} phase encodes, "
            f"fewer than the {band} forced center lines"
        )
    rows = np.setdiff1d(np.arange(h), forced)
    chosen = _pick(rng, rows, _density(np.abs(rows - center).astype(float)), target - band)
    kept = np.zeros((h, w), dtype=bool)
    kept[forced, :] = True
    kept[chosen, :] = True
    return kept


def _random2d_mask(h: int, w: int, factor: float, rng: np.random.Generator) -> np.ndarray:
    target = int(round(h * w / factor))
    r, c = np.meshgrid(np.arange(h) - h // 2, np.arange(w) - w // 2, indexing="ij")
    distance = np.hypot(r, c).ravel()
    radius = CENTER_FRACTION * min(h, w)
    forced = np.flatnonzero(distance <= radius)
    if forced.size > target:
        raise ParameterError(
            f"undersampling factor {factor} leaves {target} samples, "
            f"fewer than the {forced.size} forced center samples"
        )
    rest = np.setdiff1d(np.arange(h * w), forced)
    chosen = _pick(rng, rest, _density(distance[rest]), target - forced.size)
    kept = np.zeros(h * w, dtype=bool)
    kept[forced] = True
    kept[chosen] = True
    return kept.reshape(h, w)


def make_mask(h: int, w: int, scheme: MaskScheme, factor: float, seed: int = 0) -> SamplingMask:
    """Variable-density random mask keeping about 1/factor of k-space"""
    if factor < 1:
        raise ParameterError(f"undersampling factor must be >= 1, got {factor}")
    if h < 1 or w < 1:
        raise ParameterError(f"invalid grid {h}x{w}")
    rng = np.random.default_rng(seed)
    if factor == 1:
        kept = np.ones((h, w), dtype=bool)
    elif scheme == "cartesian":
        kept = _cartesian_mask(h, w, factor, rng)
    elif scheme == "random2d":
        kept = _random2d_mask(h, w, factor, rng)
    else:
        raise ParameterError(f"unknown sampling scheme {scheme!r}")
    mask = SamplingMask(kept, scheme=scheme, seed=seed)
    if abs(mask.factor - factor) > FACTOR_TOLERANCE * factor:
        logger.warning("achieved undersampling %.3f is more than 5%% off the requested %.3f "
                       "(grid too small)", mask.factor, factor)
    return mask


class MeasurementOperator:
    """A = F_u: unitary DFT followed by selection of Omega in row-major raster order"""

    def __init__(self, mask: SamplingMask):
        self.mask = mask
        self.fourier = FourierOperator(mask.height, mask.width)

    @property
    def image_shape(self) -> Tuple[int, int]:
        return self.mask.height, self.mask.width

    @property
    def num_measurements(self) -> int:
        return self.mask.count

    def forward(self, y: ArrayLike) -> np.ndarray:
        return self.fourier.forward(y)[self.mask.kept]

    def embed(self, z: ArrayLike) -> np.ndarray:
        """Zero-filled centered k-space grid holding z on Omega"""
        z = as_complex_vector(z)
        if z.shape[0] != self.mask.count:
            raise DimensionError(f"{z.shape[0]} measurements for a mask with {self.mask.count} samples")
        grid = np.zeros(self.image_shape, dtype=np.complex128)
        grid[self.mask.kept] = z
        return grid

    def adjoint(self, z: ArrayLike) -> np.ndarray:
        """A^H z = A-dagger z: the zero-filled reconstruction"""
        return self.fourier.adjoint(self.embed(z))


class IdentityOperator:
    """A = I on images of a given shape (denoising-style data term)"""

    def __init__(self, shape: Tuple[int, int]):
        self.image_shape = tuple(shape)

    def forward(self, y: ArrayLike) -> np.ndarray:
        y = np.asarray(y, dtype=np.complex128)
        if y.shape != self.image_shape:
            raise DimensionError(f"expected image of shape {self.image_shape}, got {y.shape}")
        return y.ravel().copy()

    def adjoint(self, z: ArrayLike) -> np.ndarray:
        z = as_complex_vector(z)
        if z.shape[0] != self.image_shape[0] * self.image_shape[1]:
            raise DimensionError(f"{z.shape[0]} samples for image of shape {self.image_shape}")
        return z.reshape(self.image_shape).copy()


def forward(mask: SamplingMask, y: ArrayLike) -> np.ndarray:
    return MeasurementOperator(mask).forward(y)


def adjoint(mask: SamplingMask, z: ArrayLike) -> np.ndarray:
    return MeasurementOperator(mask).adjoint(z)


def add_noise(z: ArrayLike, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive circular complex Gaussian noise with E|e|^2 = sigma^2"""
    z = as_complex_vector(z)
    if sigma <= 0:
        return z.copy()
    noise = rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape)
    return z + sigma / np.sqrt(2.0) * noise
