"""Transverse-mode machinery: Hermite-Gauss basis, displacements, grid fields
and the static (scalar) transfer of a network."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, linalg
from scipy.special import eval_hermite, gammaln

MAX_MODE = 30
DEFAULT_K = 4
DEFAULT_N = 1024


def hg_mode(n: int, y, width: float = 1.0):
    """Normalized Hermite-Gauss mode ``h_n(y)`` of amplitude width ``width``."""
    if not 0 <= n <= MAX_MODE:
        raise ValueError(f"mode index {n} outside 0..{MAX_MODE}")
    if width <= 0:
        raise ValueError("width must be positive")
    x = np.asarray(y, dtype=float) / width
    lognorm = -0.5 * (n * math.log(2.0) + gammaln(n + 1) + 0.5 * math.log(math.pi) + math.log(width))
    return math.exp(lognorm) * eval_hermite(n, x) * np.exp(-0.5 * x * x)


@lru_cache(maxsize=None)
def ladder_derivative(K: int) -> np.ndarray:
    """Width-scaled derivative ``width * d/dy`` in the first K modes: (a - a^+)/sqrt(2)."""
    a = np.diag(np.sqrt(np.arange(1, K, dtype=float)), 1)
    m = (a - a.T) / math.sqrt(2.0)
    m.setflags(write=False)
    return m


def displacement_matrix(d: float, width: float, K: int = DEFAULT_K) -> np.ndarray:
    """Translation ``y -> y - d`` as ``exp(-d * d/dy)`` with a truncated generator.

    Exactly orthogonal; the truncation only shows up as an O((d/width)^(K+1))
    error in the coefficients of a displaced fundamental mode.
    """
    return linalg.expm(-(d / width) * ladder_derivative(K)).astype(complex)


class Displacer:
    """Batched :func:`displacement_matrix` application via one eigendecomposition."""

    def __init__(self, K: int):
        lam, vec = np.linalg.eigh(1j * ladder_derivative(K))
        self.K = K
        self.lam = lam
        self.vec = vec
        self.vec_h = vec.conj()

    def apply(self, coeffs: np.ndarray, shifts: np.ndarray) -> np.ndarray:
        """``coeffs``: (T, K); ``shifts``: (T,) in units of the beam width."""
        z = coeffs @ self.vec_h
        z *= np.exp(1j * np.outer(shifts, self.lam))
        return z @ self.vec.T


@dataclass(frozen=True, eq=False)
class ModalField:
    coefficients: np.ndarray
    width: float = 1.0

    @property
    def K(self) -> int:
        return len(self.coefficients)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))

    @classmethod
    def fundamental(cls, K: int = DEFAULT_K, width: float = 1.0) -> "ModalField":
        c = np.zeros(K, dtype=complex)
        c[0] = 1.0
        return cls(c, width)


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex samples at cell centres ``y_j = -L + (j + 1/2) h``, ``h = 2L/N``."""

    samples: np.ndarray
    width: float = 1.0
    half_width: float = field(default=None)

    def __post_init__(self):
        n = len(self.samples)
        if n < 2 or n & (n - 1):
            raise ValueError("grid size must be a power of two")
        if self.half_width is None:
            object.__setattr__(self, "half_width", 6.0 * self.width)
        if self.half_width < 6.0 * self.width * (1 - 1e-12):
            raise ValueError("grid half-width must be at least 6 beam widths")

    @property
    def N(self) -> int:
        return len(self.samples)

    @property
    def L(self) -> float:
        return self.half_width

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def y(self) -> np.ndarray:
        return grid_points(self.N, self.L)

    @property
    def power(self) -> float:
        return float(self.spacing * np.sum(np.abs(self.samples) ** 2))

    def project(self, n: int) -> complex:
        """Overlap with ``h_n``; spectrally accurate for well-contained fields."""
        return complex(self.spacing * np.sum(hg_mode(n, self.y, self.width) * self.samples))

    @classmethod
    def gaussian(cls, width: float = 1.0, N: int = DEFAULT_N, L: float | None = None, center: float = 0.0):
        L = 6.0 * width if L is None else L
        y = grid_points(N, L)
        return cls(hg_mode(0, y - center, width).astype(complex), width, L)


def grid_points(N: int, L: float) -> np.ndarray:
    h = 2.0 * L / N
    return -L + (np.arange(N) + 0.5) * h


def wavenumbers(N: int, L: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(N, d=2.0 * L / N)


def grid_shift(f: GridField, d: float) -> GridField:
    """Exact (band-limited) translation by ``d`` through a spectral phase ramp."""
    if abs(d) >= f.L / 4:
        raise ValueError("shift must be smaller than a quarter of the grid half-width")
    if d == 0:
        return f
    spec = np.fft.fft(f.samples) * np.exp(-1j * wavenumbers(f.N, f.L) * d)
    return GridField(np.fft.ifft(spec), f.width, f.L)


@dataclass(frozen=True, eq=False)
class SignGram:
    """``G[n, m] = integral of sign(y) h_n(y) h_m(y) dy``."""

    matrix: np.ndarray

    @property
    def K(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, idx):
        return self.matrix[idx]


@lru_cache(maxsize=None)
def _sign_gram(K: int) -> np.ndarray:
    g = np.zeros((K, K))
    for n in range(K):
        for m in range(n + 1, K, 2):
            val, _ = integrate.quad(
                lambda y: hg_mode(n, y) * hg_mode(m, y), 0.0, np.inf,
                epsabs=1e-14, epsrel=1e-13, limit=200,
            )
            g[n, m] = g[m, n] = 2.0 * val
    g.setflags(write=False)
    return g


def sign_gram(width: float = 1.0, K: int = DEFAULT_K) -> SignGram:
    """Quad-cell overlap kernel; independent of ``width`` since both modes scale together."""
    if K > 8:
        raise ValueError("sign_gram supports K <= 8")
    if width <= 0:
        raise ValueError("width must be positive")
    return SignGram(_sign_gram(K))


# ---------------------------------------------------------------------------
# static transfer


@dataclass(frozen=True, eq=False)
class Transfer:
    """Complex maps from input ports (sources, vacuum ports) to arm amplitudes."""

    inputs: tuple
    start: dict            # arm -> row vector at the arm's start
    end: dict              # arm -> row vector just before the consumer
    outputs: tuple
    output_matrix: np.ndarray
    cuts: dict             # cut (tuple of arms) -> matrix

    def unitarity_error(self) -> float:
        u = self.output_matrix
        if u.shape[0] != u.shape[1]:
            return math.inf
        if u.size == 0:
            return 0.0
        return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1]), 2))


def compile_transfer(net) -> Transfer:
    """Scalar (fundamental-mode) transfer of a validated network.

    Mirrors act as identity here; blocks zero their arm.
    """
    n_in = len(net.inputs)
    col = {p: j for j, p in enumerate(net.inputs)}

    def unit(j):
        v = np.zeros(n_in, dtype=complex)
        v[j] = 1.0
        return v

    start, end = net.walk(
        source=lambda el: unit(col[(el.name, 0)]),
        inline=lambda el, x: x,
        vacuum=lambda el, port: unit(col[(el.name, port)]),
    )
    zero = np.zeros(n_in, dtype=complex)
    start = {a: (zero if v is None else v) for a, v in start.items()}
    end = {a: (zero if v is None else v) for a, v in end.items()}
    outputs = tuple(net.outputs)
    out = np.array([end[a] for a in outputs]).reshape(len(outputs), n_in)
    cuts = {c: np.array([start[a] for a in c]) for c in net.frontier_cuts()}
    return Transfer(tuple(net.inputs), start, end, outputs, out, cuts)
