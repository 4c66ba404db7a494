"""Torus metric primitives, ball volumes and degree-count expectations.

Points on the d-dimensional unit torus are plain numpy arrays of shape (d,)
with every coordinate in [0, 1).  All functions here are pure; RNG state is
always passed in explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


def unit_ball_volume(d: int) -> float:
    """Volume theta_d of the unit ball in R^d: pi^(d/2) / Gamma(d/2 + 1)."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class GeoParams:
    """Dimension and connectivity radius of one process.

    Requires 0 < r < 1/4 so that radius-r balls embed in the torus without
    self-overlap and the two-ball union geometry below is Euclidean.
    """

    d: int
    r: float
    theta_d: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise DomainError(f"dimension must be an integer >= 1, got {self.d!r}")
        if not (0.0 < self.r < 0.25):
            raise DomainError(f"radius must lie in (0, 1/4), got {self.r!r}")
        object.__setattr__(self, "theta_d", unit_ball_volume(self.d))

    @property
    def ball_volume(self) -> float:
        """Volume of a radius-r ball, theta_d * r^d."""
        return self.theta_d * self.r ** self.d


def canonical_point(x) -> np.ndarray:
    """Reduce coordinates mod 1 to the canonical representative in [0,1)^d."""
    p = np.asarray(x, dtype=np.float64) % 1.0
    # -1e-18 % 1.0 == 1.0 in floating point; fold that back to 0.
    p[p >= 1.0] = 0.0
    return p


def torus_distance(a, b) -> float:
    """Euclidean distance on the unit torus (minimum over integer shifts)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")
    delta = np.abs(a - b) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    return float(np.sqrt(np.sum(delta * delta, axis=-1)))


def torus_distances(pts, q) -> np.ndarray:
    """Vectorized torus distances from each row of `pts` to the point `q`."""
    pts = np.asarray(pts, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    delta = np.abs(pts - q) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    return np.sqrt(np.sum(delta * delta, axis=-1))


def sample_uniform(rng: np.random.Generator, d: int) -> np.ndarray:
    """One uniform point of [0,1)^d from the given generator."""
    return rng.random(d)


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent counter-based stream for one Monte Carlo trial.

    Philox keyed by (master_seed, trial_index); the same pair always yields
    the same stream regardless of how many other trials run or in what order.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Two-ball union volume (exact hyperspherical-cap integral)
# ---------------------------------------------------------------------------

def union_two_balls_volume(params: GeoParams, nu: float) -> float:
    """Volume of the union of two radius-r balls with centres nu apart.

    Evaluates theta_d r^d + (pi^((d-1)/2) r^d / Gamma((d+1)/2)) *
    int_iota^(pi-iota) sin(u)^d du with iota = arccos(nu / 2r), by adaptive
    quadrature to 1e-10 relative error.
    """
    d, r = params.d, params.r
    if not (0.0 <= nu <= 2.0 * r + 1e-15):
        raise DomainError(f"centre distance nu={nu} outside [0, 2r] for r={r}")
    if nu + 2.0 * r >= 0.5:
        raise DomainError(
            f"nu + 2r = {nu + 2 * r} >= 1/2: torus wraparound would affect the union"
        )
    ball = params.ball_volume
    if nu <= 0.0:
        return ball
    iota = math.acos(min(1.0, nu / (2.0 * r)))
    if iota <= 0.0:
        return 2.0 * ball
    coef = math.pi ** ((d - 1) / 2.0) * r ** d / math.gamma((d + 1) / 2.0)
    val, _err = integrate.quad(
        lambda u: math.sin(u) ** d, iota, math.pi - iota,
        epsabs=0.0, epsrel=1e-12, limit=200,
    )
    return ball + coef * val


def union_two_balls_volume_closed(d: int, r: float, nu: float) -> float:
    """Closed-form two-ball union volume for d in {1, 2, 3} (cross-check oracle)."""
    if not (0.0 <= nu <= 2.0 * r + 1e-15):
        raise DomainError(f"nu={nu} outside [0, 2r]")
    if d == 1:
        return 2.0 * r + min(nu, 2.0 * r)
    if d == 2:
        # union = 2*pi*r^2 - lens, lens = 2 r^2 arccos(nu/2r) - (nu/2) sqrt(4r^2 - nu^2)
        lens = 2.0 * r * r * math.acos(min(1.0, nu / (2.0 * r))) \
            - 0.5 * nu * math.sqrt(max(0.0, 4.0 * r * r - nu * nu))
        return 2.0 * math.pi * r * r - lens
    if d == 3:
        lens = math.pi * (4.0 * r + nu) * (2.0 * r - nu) ** 2 / 12.0
        return 2.0 * (4.0 / 3.0) * math.pi * r ** 3 - lens
    raise DomainError(f"closed form only available for d <= 3, got d={d}")


# ---------------------------------------------------------------------------
# Expected count of degree-kappa vertices
# ---------------------------------------------------------------------------

def expected_degree_count(n: int, kappa: int, params: GeoParams) -> float:
    """E[Z_{kappa,n}] = n C(n-1,kappa) p^kappa (1-p)^(n-1-kappa), p = theta_d r^d.

    Evaluated in log space so it stays finite for n up to 1e8.
    """
    if kappa < 0 or n < 1:
        raise DomainError(f"need n >= 1 and kappa >= 0, got n={n}, kappa={kappa}")
    if kappa > n - 1:
        raise DomainError(f"kappa={kappa} exceeds n-1={n - 1}")
    p = params.ball_volume
    if p >= 1.0:
        raise DomainError(f"theta_d r^d = {p} >= 1")
    if n == 1:
        return 1.0
    log_binom = gammaln(n) - gammaln(kappa + 1) - gammaln(n - kappa)
    log_p_term = kappa * math.log(p) if kappa > 0 else 0.0
    log_val = math.log(n) + log_binom + log_p_term + (n - 1 - kappa) * math.log1p(-p)
    return math.exp(log_val)
