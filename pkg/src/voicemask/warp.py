"""Frequency-warping functions on the normalized band [0, pi].

Three families:

* bilinear (all-pass) warp ``f(w, alpha)``, |alpha| < 1
* quadratic warp ``g(w, beta) = w + beta * (u - u**2)`` with ``u = w / pi``
* compound warp ``h(w, alpha, beta) = g(f(w, alpha), beta)``

All of them fix 0 and pi and are strictly increasing. Positive parameters
push energy upward (sharper voice), negative ones downward (deeper voice).
The bilinear family is closed under composition, which is what makes it
reducible; the compound warp is not.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

QUADRATURE_INTERVALS = 4096
MONOTONE_GRID = 1024
PROPER_ALPHA_RANGE = (0.08, 0.10)
COMPOUND_BOX = (0.12, 0.5)  # max |alpha|, max |beta| for rejection sampling
MAX_REJECTIONS = 10_000


class ConfigurationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# scalar / vectorized warp functions
# ---------------------------------------------------------------------------

def warp_bilinear(omega, alpha: float):
    """Phase of the first-order all-pass ``(z - alpha) / (1 - alpha z)`` at ``z = e^{i omega}``."""
    if not -1.0 < alpha < 1.0:
        raise ValueError(f"bilinear warp needs |alpha| < 1, got {alpha}")
    w = np.asarray(omega, dtype=np.float64)
    if alpha == 0.0:
        return w.copy() if w.ndim else float(w)
    z = np.exp(1j * w)
    # |-i ln(q)| for |q| = 1 is |arg q|; angle() skips the wasted log|q|
    out = np.abs(np.angle((z - alpha) / (1.0 - alpha * z)))
    return out if out.ndim else float(out)


def _check_beta(beta: float) -> None:
    # g'(w) = 1 + (beta/pi)(1 - 2u) stays positive on [0, pi] iff |beta| < pi
    if not abs(beta) < np.pi:
        raise ValueError(f"quadratic warp is not monotone for |beta| >= pi (beta={beta})")


def warp_quadratic(omega, beta: float):
    _check_beta(beta)
    w = np.asarray(omega, dtype=np.float64)
    u = w / np.pi
    out = w + beta * (u - u * u)
    return out if out.ndim else float(out)


def warp_compound(omega, alpha: float, beta: float):
    return warp_quadratic(warp_bilinear(omega, alpha), beta)


def inverse_quadratic(omega_out, beta: float):
    """Invert ``warp_quadratic`` via the smaller root of the quadratic in u."""
    _check_beta(beta)
    w = np.asarray(omega_out, dtype=np.float64)
    if beta == 0.0:
        return w if w.ndim else float(w)
    b = np.pi + beta
    disc = b * b - 4.0 * beta * w
    if np.any(disc < 0):
        raise ArithmeticError("negative discriminant: quadratic warp is not invertible here")
    # u = (b - sqrt(disc)) / (2 beta), rewritten to avoid cancellation
    u = 2.0 * w / (b + np.sqrt(disc))
    out = np.pi * u
    return out if out.ndim else float(out)


def compose_bilinear(alpha1: float, alpha2: float) -> float:
    """Parameter of ``f(f(w, alpha1), alpha2)`` as a single bilinear warp.

    All-pass warps compose like Moebius maps, so the parameters add in the
    relativistic sense, (a1 + a2) / (1 + a1 a2); plain a1 + a2 is only the
    first-order approximation.
    """
    if not (abs(alpha1) < 1 and abs(alpha2) < 1):
        raise ValueError("bilinear parameters must satisfy |alpha| < 1")
    return (alpha1 + alpha2) / (1.0 + alpha1 * alpha2)


# ---------------------------------------------------------------------------
# WarpKind values
# ---------------------------------------------------------------------------

def _check_monotone(kind) -> None:
    grid = np.linspace(0.0, np.pi, MONOTONE_GRID)
    if np.any(np.diff(kind(grid)) <= 0):
        raise ValueError(f"{kind!r} is not strictly increasing on [0, pi]")


@dataclass(frozen=True)
class Bilinear:
    alpha: float

    def __post_init__(self):
        if not -1.0 < self.alpha < 1.0:
            raise ValueError(f"|alpha| must be < 1, got {self.alpha}")

    def __call__(self, omega):
        return warp_bilinear(omega, self.alpha)

    def inverse(self, omega_out):
        return warp_bilinear(omega_out, -self.alpha)

    @property
    def is_identity(self) -> bool:
        return self.alpha == 0.0

    @property
    def sign(self) -> int:
        return int(np.sign(self.alpha))


@dataclass(frozen=True)
class Quadratic:
    beta: float

    def __post_init__(self):
        _check_beta(self.beta)

    def __call__(self, omega):
        return warp_quadratic(omega, self.beta)

    def inverse(self, omega_out):
        return inverse_quadratic(omega_out, self.beta)

    @property
    def is_identity(self) -> bool:
        return self.beta == 0.0

    @property
    def sign(self) -> int:
        return int(np.sign(self.beta))


@dataclass(frozen=True)
class Compound:
    alpha: float
    beta: float

    def __post_init__(self):
        if not -1.0 < self.alpha < 1.0:
            raise ValueError(f"|alpha| must be < 1, got {self.alpha}")
        _check_beta(self.beta)
        _check_monotone(self)

    def __call__(self, omega):
        return warp_compound(omega, self.alpha, self.beta)

    def inverse(self, omega_out):
        return warp_bilinear(inverse_quadratic(omega_out, self.beta), -self.alpha)

    @property
    def is_identity(self) -> bool:
        return self.alpha == 0.0 and self.beta == 0.0

    @property
    def sign(self) -> int:
        return int(np.sign(self.alpha) or np.sign(self.beta))


WarpKind = Bilinear | Quadratic | Compound
IDENTITY = Bilinear(0.0)


def inverse_warp(kind: WarpKind, omega_out):
    return kind.inverse(omega_out)


def kind_to_dict(kind: WarpKind) -> dict:
    if isinstance(kind, Bilinear):
        return {"kind": "bilinear", "alpha": kind.alpha}
    if isinstance(kind, Quadratic):
        return {"kind": "quadratic", "beta": kind.beta}
    return {"kind": "compound", "alpha": kind.alpha, "beta": kind.beta}


def kind_from_dict(d: dict) -> WarpKind:
    k = d["kind"]
    if k == "bilinear":
        return Bilinear(float(d["alpha"]))
    if k == "quadratic":
        return Quadratic(float(d["beta"]))
    if k == "compound":
        return Compound(float(d["alpha"]), float(d["beta"]))
    raise ValueError(f"unknown warp kind {k!r}")


# ---------------------------------------------------------------------------
# distortion strength
# ---------------------------------------------------------------------------

_GRID = np.linspace(0.0, np.pi, QUADRATURE_INTERVALS + 1)


def l1_area(fn, intervals: int = QUADRATURE_INTERVALS) -> float:
    """Composite Simpson estimate of the integral of |fn(w)| over [0, pi]."""
    grid = _GRID if intervals == QUADRATURE_INTERVALS else np.linspace(0.0, np.pi, intervals + 1)
    return float(simpson(np.abs(fn(grid)), x=grid))


def distortion_strength(kind: WarpKind) -> float:
    """Area between the warp curve and the identity over [0, pi]."""
    if kind.is_identity:
        return 0.0
    return l1_area(lambda w: kind(w) - w)


def alpha_for_distortion(target: float) -> float:
    """Positive alpha whose bilinear warp has the given distortion strength."""
    if not 0 < target < distortion_strength(Bilinear(0.9)):
        raise ValueError(f"no bilinear warp reaches distortion {target}")
    return brentq(lambda a: distortion_strength(Bilinear(a)) - target, 1e-9, 0.9, xtol=1e-14)


# ---------------------------------------------------------------------------
# randomized parameter selection
# ---------------------------------------------------------------------------

class Direction(str, enum.Enum):
    DEEPEN = "deepen"
    SHARPEN = "sharpen"

    @property
    def sign(self) -> int:
        return 1 if self is Direction.SHARPEN else -1


class KindPolicy(str, enum.Enum):
    BILINEAR_ONLY = "bilinear"
    COMPOUND_ONLY = "compound"


@dataclass(frozen=True)
class DistortionBand:
    lo: float = 0.32
    hi: float = 0.40
    direction: Direction = Direction.SHARPEN

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("distortion band needs 0 < lo < hi")
        object.__setattr__(self, "direction", Direction(self.direction))

    def contains(self, dist: float) -> bool:
        return self.lo <= dist <= self.hi

    def alpha_range(self) -> tuple[float, float]:
        """|alpha| interval for bilinear-only sampling.

        The default band is the one measured for |alpha| in [0.08, 0.10], so
        that range is used verbatim; other bands are solved for.
        """
        if (self.lo, self.hi) == (0.32, 0.40):
            return PROPER_ALPHA_RANGE
        return alpha_for_distortion(self.lo), alpha_for_distortion(self.hi)


def sample_warp_params(band: DistortionBand, policy: KindPolicy | str,
                       rng: np.random.Generator) -> WarpKind:
    """Draw one random warp whose distortion lies in ``band``.

    Compound parameters are rejection-sampled from the box
    ``|alpha| <= 0.12, |beta| <= 0.5`` with both signs following
    ``band.direction``.
    """
    policy = KindPolicy(policy)
    s = band.direction.sign
    if policy is KindPolicy.BILINEAR_ONLY:
        lo, hi = band.alpha_range()
        return Bilinear(s * rng.uniform(lo, hi))
    amax, bmax = COMPOUND_BOX
    for _ in range(MAX_REJECTIONS):
        a, b = s * rng.uniform(0.0, amax), s * rng.uniform(0.0, bmax)
        if np.sign(a) != np.sign(b) or a == 0.0:
            continue
        kind = Compound(a, b)
        if band.contains(distortion_strength(kind)):
            return kind
    raise ConfigurationError(f"no compound warp in band [{band.lo}, {band.hi}] "
                             f"after {MAX_REJECTIONS} draws")


# ---------------------------------------------------------------------------
# reducing attack
# ---------------------------------------------------------------------------

def default_search_grid(step: float = 1e-3, limit: float = 0.3) -> np.ndarray:
    k = int(round(limit / step))
    return np.arange(-k, k + 1) * step


def attack_reduce_residual(kind: WarpKind, search_grid=None, family: str = "bilinear") -> float:
    """Best L1 fit of ``kind`` by a single warp from ``family`` over ``search_grid``.

    A reducible scheme is one where this residual is ~0: the attacker can
    model the randomized warp as one family member and partially undo it.
    """
    grid = default_search_grid() if search_grid is None else np.asarray(search_grid, dtype=float)
    target = kind(_GRID)
    if family == "bilinear":
        make = warp_bilinear
    elif family == "quadratic":
        make = warp_quadratic
    else:
        raise ValueError(f"unknown family {family!r}")
    best = np.inf
    for c in grid:
        r = float(simpson(np.abs(target - make(_GRID, float(c))), x=_GRID))
        best = min(best, r)
    return best
