"""Model specifications and the binary-panel data-generating process.

Two first-order Markov logit models are supported, differing only in how the
period effect enters the index:

* ``TimeDummiesSpec`` -- one free effect per period (``td[t]``),
* ``TimeTrendSpec``   -- a linear trend ``phi_coef * (t - tau)``.

In both, individual ``i`` carries a fixed effect ``eta_i`` and the outcome
follows ``P(y_t = 1 | y_{t-1}) = logistic(eta + gamma * y_{t-1} + effect(t))``
for ``t >= 2``; the initial outcome omits the lag term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _rng
from .panel import PanelData


def logit_prob(eta: float, gamma: float, y_prev: int, effect: float) -> float:
    """Logistic response probability at index ``eta + gamma*y_prev + effect``.

    Evaluated by dividing through by the larger exponential term, so the
    result stays in (0, 1) without overflow for index magnitudes up to the
    float64 exp limit (~709).
    """
    x = eta + gamma * y_prev + effect
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass(frozen=True)
class TimeDummiesSpec:
    """Markov logit model with one period effect per time period.

    Parameters
    ----------
    gamma : float
        State-dependence coefficient on the lagged outcome.
    td : tuple of float
        Period effects for periods 1..T; ``td[0]`` enters only the initial
        condition.
    """

    gamma: float
    td: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "td", tuple(float(v) for v in self.td))
        vals = (self.gamma,) + self.td
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("all parameters must be finite")

    @property
    def delta(self) -> float:
        """exp(gamma) - 1; always > -1."""
        return math.exp(self.gamma) - 1.0

    @property
    def n_periods(self) -> int:
        return len(self.td)

    def effect(self, t: int) -> float:
        """Period effect at period ``t`` (1-based)."""
        if not 1 <= t <= len(self.td):
            raise ValueError(f"period {t} outside 1..{len(self.td)}")
        return self.td[t - 1]

    def effect_step(self, t: int) -> float:
        """First difference of the period effect, effect(t) - effect(t-1)."""
        if not 2 <= t <= len(self.td):
            raise ValueError(f"effect step undefined at period {t}")
        return self.td[t - 1] - self.td[t - 2]

    def phi_pair(self, t: int) -> tuple[float, float]:
        """(exp of effect step at t, at t+1); both strictly positive."""
        return math.exp(self.effect_step(t)), math.exp(self.effect_step(t + 1))


@dataclass(frozen=True)
class TimeTrendSpec:
    """Markov logit model with a linear-in-time period effect.

    The index effect at period ``t`` is ``phi_coef * (t - tau)``, so every
    one-period step of the effect equals ``phi_coef``.
    """

    gamma: float
    phi_coef: float
    tau: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.gamma, self.phi_coef, self.tau)):
            raise ValueError("all parameters must be finite")

    @property
    def delta(self) -> float:
        return math.exp(self.gamma) - 1.0

    @property
    def phi(self) -> float:
        """exp(phi_coef), the multiplicative one-period effect step."""
        return math.exp(self.phi_coef)

    def effect(self, t: int) -> float:
        return self.phi_coef * (t - self.tau)

    def effect_step(self, t: int) -> float:
        return self.phi_coef

    def phi_pair(self, t: int) -> tuple[float, float]:
        return self.phi, self.phi


ModelSpec = TimeDummiesSpec | TimeTrendSpec


@dataclass(frozen=True)
class DgpConfig:
    """Size, heterogeneity and seeding of a simulated panel.

    ``stream`` selects an independent replication stream for the same seed;
    the Monte Carlo harness assigns one stream per replication.
    """

    n_individuals: int
    n_periods: int
    sigma_eta_sq: float = 0.0
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.n_individuals <= 0:
            raise ValueError("n_individuals must be positive")
        if self.n_periods < 2:
            raise ValueError("n_periods must be at least 2")
        if self.sigma_eta_sq < 0:
            raise ValueError("sigma_eta_sq must be nonnegative")


def simulate_panel(spec: ModelSpec, cfg: DgpConfig) -> PanelData:
    """Draw a balanced N x T binary panel from the Markov logit model.

    The initial outcome is Bernoulli with index ``eta + effect(1)`` (no lag
    term); subsequent periods use the full index.  Fixed effects are
    N(0, sigma_eta_sq) via the inverse-CDF transform.  All draws are pure
    functions of ``(cfg.seed, cfg.stream, individual, period)``, so repeated
    or parallel calls with the same config are bitwise identical.
    """
    if isinstance(spec, TimeDummiesSpec) and spec.n_periods < cfg.n_periods:
        raise ValueError(
            f"spec provides {spec.n_periods} period effects, need {cfg.n_periods}")
    n, T = cfg.n_individuals, cfg.n_periods

    gen_eta = _rng.keyed_generator(cfg.seed, cfg.stream, _rng.SUB_ETA)
    eta = _rng.gaussian(gen_eta, n, math.sqrt(cfg.sigma_eta_sq))

    gen_shocks = _rng.keyed_generator(cfg.seed, cfg.stream, _rng.SUB_SHOCKS)
    zeta = gen_shocks.random((n, T))

    y = np.empty((n, T), dtype=np.int8)
    y[:, 0] = expit(eta + spec.effect(1)) > zeta[:, 0]
    for t in range(2, T + 1):
        idx = eta + spec.gamma * y[:, t - 2] + spec.effect(t)
        y[:, t - 1] = expit(idx) > zeta[:, t - 1]
    return PanelData(y=y, ids=np.arange(n, dtype=np.int64), t0=1)
