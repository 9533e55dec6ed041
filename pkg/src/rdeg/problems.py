"""Quadratic coupled saddle problems with exact gap and saddle oracles.

Family: f(x, y) = (mu/2)||x||^2 + x'Ay - (mu/2)||y||^2 + 2b'x - 2c'y over
two origin-centered balls of equal radius. mu = 0 is the purely bilinear
game, merely convex-concave; mu > 0 makes both blocks strongly curved
with modulus mu.

A gradient sample perturbs the linear terms with one shared draw
zeta ~ N(0, sigma^2 I): gx = mu*x + Ay + 2(b + zeta) and
gy = -mu*y + A'x - 2(c + zeta). Sharing the draw between blocks is what
forces A to be square. gy estimates the gradient of f in y, so ascent
steps add it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError, FeasibilityError, NoInteriorSaddleError
from .geometry import BallSet, IteratePair, as_vector
from .rng import normal_block

PRESET_NAMES = ("bilinear-sec6", "scsc-quadratic")
PRESET_DIM = 10
PRESET_RADIUS = 100.0
PRESET_SIGMA2 = 10.0
PRESET_MU = 0.1

# fixed so every process sees the same preset coupling matrix
_MATRIX_SEED = 1009


@dataclass(frozen=True)
class GradientSample:
    """One gradient estimate: gx for the descent block, gy for the ascent block."""

    gx: np.ndarray
    gy: np.ndarray


def _ball_extreme(g: np.ndarray, mu: float, radius: float) -> float:
    """max of g'v - (mu/2)||v||^2 over ||v|| <= radius.

    The maximizer points along g; the interior stationary value applies
    when ||g|| <= mu*radius, otherwise the boundary wins. mu = 0 reduces
    to the support function radius*||g||.
    """
    gn = float(np.linalg.norm(g))
    if mu > 0.0 and gn <= mu * radius:
        return gn * gn / (2.0 * mu)
    return radius * gn - 0.5 * mu * radius * radius


class SaddleProblem:
    """Shared machinery for the quadratic family; use the subclasses."""

    def __init__(self, a_matrix, b=None, c=None, *, radius, sigma2, mu):
        a = np.ascontiguousarray(a_matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(
                "coupling matrix must be square so one noise draw can perturb "
                f"both gradient blocks, got shape {a.shape}"
            )
        if not np.isfinite(a).all():
            raise ValueError("coupling matrix contains non-finite entries")
        dim = a.shape[0]
        self.a_matrix = a.copy()
        self.b = as_vector(np.zeros(dim) if b is None else b, dim).copy()
        self.c = as_vector(np.zeros(dim) if c is None else c, dim).copy()
        self.mu = float(mu)
        if self.mu < 0.0:
            raise ValueError(f"curvature must be nonnegative, got {self.mu:g}")
        self.sigma2 = float(sigma2)
        if self.sigma2 < 0.0:
            raise ValueError(f"noise variance must be nonnegative, got {self.sigma2:g}")
        self.set_x = BallSet(radius=float(radius), dim=dim)
        self.set_y = BallSet(radius=float(radius), dim=dim)
        self.L = self.mu + float(np.linalg.norm(self.a_matrix, 2))
        for arr in (self.a_matrix, self.b, self.c):
            arr.setflags(write=False)

    # ------------------------------------------------------------- shape

    @property
    def n(self) -> int:
        return self.set_x.dim

    @property
    def m(self) -> int:
        return self.set_y.dim

    @property
    def noise_sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @property
    def kappa(self) -> float:
        """Curvature-to-smoothness ratio; 0 for the degenerate zero problem."""
        return self.mu / self.L if self.L > 0.0 else 0.0

    @property
    def sigma_x(self) -> float:
        """Full-vector noise scale of gx: per-coordinate std is 2*sigma."""
        return 2.0 * self.noise_sigma * float(np.sqrt(self.n))

    @property
    def sigma_y(self) -> float:
        return 2.0 * self.noise_sigma * float(np.sqrt(self.m))

    @property
    def sigma_max(self) -> float:
        return max(self.sigma_x, self.sigma_y)

    # ------------------------------------------------------------ values

    def _check_pair(self, at: IteratePair) -> None:
        if at.x.size != self.n or at.y.size != self.m:
            raise DimensionError(
                f"iterate dims ({at.x.size}, {at.y.size}) do not match problem "
                f"dims ({self.n}, {self.m})"
            )

    def objective(self, at: IteratePair) -> float:
        self._check_pair(at)
        x, y = at.x, at.y
        value = 0.5 * self.mu * (x @ x - y @ y)
        value += x @ (self.a_matrix @ y) + 2.0 * (self.b @ x) - 2.0 * (self.c @ y)
        return float(value)

    def population_gradient(self, at: IteratePair) -> GradientSample:
        """Noiseless gradients; feasibility of `at` is the caller's contract."""
        self._check_pair(at)
        gx = self.mu * at.x + self.a_matrix @ at.y + 2.0 * self.b
        gy = -self.mu * at.y + self.a_matrix.T @ at.x - 2.0 * self.c
        return GradientSample(gx, gy)

    def gradient_batch(self, at: IteratePair, zeta) -> tuple[np.ndarray, np.ndarray]:
        """Gradient estimates for many agents at one iterate.

        `zeta` is (n_agents, n), each row one agent's noise draw already
        scaled to std sigma. Row k equals sample_gradient with that draw.
        """
        zeta = np.ascontiguousarray(zeta, dtype=np.float64)
        if zeta.ndim != 2 or zeta.shape[1] != self.n:
            raise DimensionError(
                f"noise block must be (n_agents, {self.n}), got shape {zeta.shape}"
            )
        pop = self.population_gradient(at)
        noise = 2.0 * zeta
        return pop.gx + noise, pop.gy - noise

    def sample_gradient(self, at: IteratePair, rng_stream) -> GradientSample:
        """One stochastic gradient estimate from the caller's stream."""
        if self.noise_sigma > 0.0:
            zeta = self.noise_sigma * rng_stream.standard_normal(self.n)
        else:
            zeta = np.zeros(self.n)
        gx_rows, gy_rows = self.gradient_batch(at, zeta[None, :])
        return GradientSample(gx_rows[0], gy_rows[0])

    # --------------------------------------------------------------- gap

    def primal_dual_gap(self, x_bar, y_bar) -> float:
        """max_y f(x_bar, y) - min_x f(x, y_bar), exactly, clamped at 0.

        Both inner problems are isotropic quadratics over a ball, so the
        extremes are available in closed form through _ball_extreme.
        """
        x = as_vector(x_bar, self.n)
        y = as_vector(y_bar, self.m)
        if not self.set_x.contains(x):
            raise FeasibilityError(
                f"x with norm {float(np.linalg.norm(x)):.6g} lies outside the "
                f"radius-{self.set_x.radius:g} ball"
            )
        if not self.set_y.contains(y):
            raise FeasibilityError(
                f"y with norm {float(np.linalg.norm(y)):.6g} lies outside the "
                f"radius-{self.set_y.radius:g} ball"
            )
        gap = 0.5 * self.mu * (x @ x + y @ y) + 2.0 * (self.b @ x) + 2.0 * (self.c @ y)
        gap += _ball_extreme(self.a_matrix.T @ x - 2.0 * self.c, self.mu, self.set_y.radius)
        gap += _ball_extreme(self.a_matrix @ y + 2.0 * self.b, self.mu, self.set_x.radius)
        return max(0.0, float(gap))

    # ------------------------------------------------------------ saddle

    @cached_property
    def _saddle_state(self) -> tuple[IteratePair | None, str | None]:
        eye = np.eye(self.n)
        k = np.block(
            [[self.mu * eye, self.a_matrix], [self.a_matrix.T, -self.mu * eye]]
        )
        rhs = np.concatenate([-2.0 * self.b, 2.0 * self.c])
        try:
            sol = np.linalg.solve(k, rhs)
        except np.linalg.LinAlgError:
            return None, "the stationarity system is singular"
        x, y = sol[: self.n], sol[self.n :]
        if not (
            float(np.linalg.norm(x)) < self.set_x.radius
            and float(np.linalg.norm(y)) < self.set_y.radius
        ):
            return None, (
                f"the stationary point (norms {float(np.linalg.norm(x)):.6g}, "
                f"{float(np.linalg.norm(y)):.6g}) is not strictly inside the "
                f"radius-{self.set_x.radius:g} balls"
            )
        pair = IteratePair(x, y)
        g = self.population_gradient(pair)
        residual = float(np.linalg.norm(np.concatenate([g.gx, g.gy])))
        if residual > 1e-8:
            return None, f"stationarity residual {residual:.3g} exceeds 1e-8"
        return pair, None

    @property
    def saddle(self) -> IteratePair | None:
        """The interior saddle point, or None when there is none."""
        return self._saddle_state[0]

    def saddle_point(self) -> IteratePair:
        pair, reason = self._saddle_state
        if pair is None:
            raise NoInteriorSaddleError(reason)
        return pair.copy()


class BilinearGame(SaddleProblem):
    """mu = 0: purely bilinear coupling f = x'Ay + 2b'x - 2c'y."""

    def __init__(self, a_matrix, b=None, c=None, *, radius, sigma2):
        super().__init__(a_matrix, b, c, radius=radius, sigma2=sigma2, mu=0.0)


class ScScQuadraticGame(SaddleProblem):
    """mu > 0: strongly convex-strongly concave quadratic game."""

    def __init__(self, mu, a_matrix, b=None, c=None, *, radius, sigma2):
        if float(mu) <= 0.0:
            raise ValueError(
                f"curvature must be positive, got {float(mu):g}; "
                "use BilinearGame for the flat case"
            )
        super().__init__(a_matrix, b, c, radius=radius, sigma2=sigma2, mu=mu)


def _preset_matrix() -> np.ndarray:
    raw = normal_block(_MATRIX_SEED, (0,), PRESET_DIM, PRESET_DIM)
    return raw / np.linalg.norm(raw, 2)


def make_preset(name: str, sigma2: float | None = None) -> SaddleProblem:
    """Named standard instances; both use the same unit-norm coupling matrix.

    "bilinear-sec6": flat game, d=10, radius 100, noise variance 10.
    "scsc-quadratic": same geometry with curvature mu=0.1.
    `sigma2` overrides the noise variance.
    """
    s2 = PRESET_SIGMA2 if sigma2 is None else float(sigma2)
    if name == "bilinear-sec6":
        return BilinearGame(_preset_matrix(), radius=PRESET_RADIUS, sigma2=s2)
    if name == "scsc-quadratic":
        return ScScQuadraticGame(
            PRESET_MU, _preset_matrix(), radius=PRESET_RADIUS, sigma2=s2
        )
    raise ValueError(
        f"unknown problem preset {name!r}; known presets: {', '.join(PRESET_NAMES)}"
    )
