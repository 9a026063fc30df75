"""Discrete mean-field model of conspicuous consumption.

An agent with income ``z`` splits it into conspicuous consumption ``x`` and
other consumption ``y = z - x``.  Utility depends on a social term

    S(x) = c_N * N(x, m) + c_b * A(x) - c_a * D(x)

where ``A``/``D`` are the status advantage/disadvantage relative to the
population's consumption distribution F and ``m`` its mean.  The default
utility family is

    U = alpha*ln(x+eps) + beta*ln(y+eps) + gamma*(1 + mu*ln(y+eps))*ln(1+S)

with ``N(x, m) = sqrt((1+x)(1+m))``.  The documented domain is incomes in
roughly [0.1, 1], ``mu`` small enough that ``1 + mu*ln(eps) > 0`` and
``c_a <= 1``; outside it ``1 + S`` may leave the positive reals, in which
case utilities are ``-inf`` and partials raise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

GRID_POINTS = 401
BISECT_STEPS = 80


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    mu: float = 0.01
    epsilon: float = 1e-6
    c_a: float = 0.5
    c_b: float = 0.25
    c_N: float = 0.5

    def __post_init__(self) -> None:
        if not 1.0 >= self.c_a >= self.c_b >= 0.0:
            raise ValueError("need 1 >= c_a >= c_b >= 0")
        if not 0.0 <= self.c_N <= 1.0:
            raise ValueError("need 0 <= c_N <= 1")
        if self.alpha <= 0 or self.epsilon <= 0 or self.beta < 0 or self.gamma < 0 or self.mu < 0:
            raise ValueError("alpha, epsilon must be positive; beta, gamma, mu non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        return cls(**{k: float(v) for k, v in data.items() if k in cls.__dataclass_fields__})

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Profile:
    """Weighted consumption levels of the population (weights need not sum to 1)."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if v.shape != w.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("profile needs matching non-empty 1-d values and weights")
        if np.any(w < 0):
            raise ValueError("negative weight")
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "_sorted", v[order])
        object.__setattr__(self, "_cw", np.cumsum(w[order]))
        object.__setattr__(self, "_cwt", np.cumsum(w[order] * v[order]))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(self._cw[-1])

    @property
    def mean(self) -> float:
        """Aggregate consumption (the mean when weights sum to 1)."""
        return float(self._cwt[-1])

    def shifted(self, delta: float, threshold: float = -np.inf) -> "Profile":
        v = np.where(self.values >= threshold, self.values + delta, self.values)
        return Profile(v, self.weights)

    def scaled(self, factor: float) -> "Profile":
        return Profile(self.values * factor, self.weights)

    def with_mass(self, level: float, delta: float) -> "Profile":
        return Profile(np.append(self.values, level), np.append(self.weights, delta))


@dataclass(frozen=True)
class SocialState:
    F: np.ndarray
    a: np.ndarray
    d: np.ndarray
    A: np.ndarray
    D: np.ndarray
    N: np.ndarray
    N_x: np.ndarray
    m: float


def social_terms(x, profile: Profile, m: float | None = None) -> SocialState:
    """Exact sums over the discrete profile.  F uses the <= convention."""
    x = np.asarray(x, dtype=np.float64)
    k = np.searchsorted(profile._sorted, x, side="right")
    cw = np.concatenate([[0.0], profile._cw])
    cwt = np.concatenate([[0.0], profile._cwt])
    F = cw[k]
    a = cwt[k]
    d = profile.mean - a
    A = x * F - a
    D = d - x * (profile.mass - F)
    m = profile.mean if m is None else m
    N = np.sqrt((1 + x) * (1 + m))
    N_x = 0.5 * np.sqrt((1 + m) / (1 + x))
    return SocialState(F, a, d, np.maximum(A, 0.0), np.maximum(D, 0.0), N, N_x, m)


def social_value(state: SocialState, p: ModelParams) -> np.ndarray:
    return p.c_N * state.N + p.c_b * state.A - p.c_a * state.D


def social_slope(state: SocialState, p: ModelParams, mass: float = 1.0) -> np.ndarray:
    """dS/dx: network term plus the F-dependent status bracket."""
    return p.c_N * state.N_x + p.c_b * state.F + p.c_a * (mass - state.F)


# -- utility and partials ----------------------------------------------------


def utility(x, y, S, p: ModelParams) -> np.ndarray:
    x, y, S = (np.asarray(v, dtype=np.float64) for v in (x, y, S))
    with np.errstate(invalid="ignore", divide="ignore"):
        ly = np.log(y + p.epsilon)
        out = p.alpha * np.log(x + p.epsilon) + p.beta * ly + p.gamma * (1 + p.mu * ly) * np.log1p(S)
    return np.where((S > -1) & (x >= 0) & (y >= 0), out, -np.inf)


@dataclass(frozen=True)
class Partials:
    U_x: np.ndarray
    U_y: np.ndarray
    U_S: np.ndarray
    U_xx: np.ndarray
    U_yy: np.ndarray
    U_SS: np.ndarray
    U_xy: np.ndarray
    U_xS: np.ndarray
    U_yS: np.ndarray


def partials(x, y, S, p: ModelParams) -> Partials:
    x, y, S = (np.asarray(v, dtype=np.float64) for v in (x, y, S))
    if np.any(S <= -1):
        raise ValueError("1 + S must be positive")
    xe, ye, s1 = x + p.epsilon, y + p.epsilon, 1 + S
    ly, ls = np.log(ye), np.log(s1)
    g = 1 + p.mu * ly
    zero = np.zeros(np.broadcast(x, y, S).shape)
    return Partials(
        U_x=p.alpha / xe + zero,
        U_y=(p.beta + p.gamma * p.mu * ls) / ye,
        U_S=p.gamma * g / s1 + zero,
        U_xx=-p.alpha / xe**2 + zero,
        U_yy=-(p.beta + p.gamma * p.mu * ls) / ye**2,
        U_SS=-p.gamma * g / s1**2 + zero,
        U_xy=zero,
        U_xS=zero,
        U_yS=p.gamma * p.mu / (ye * s1) + zero,
    )


def private_optimum(z: float, p: ModelParams, S: float = 0.0) -> float:
    """Solves U_x = U_y at fixed S.  Equals alpha*z/(alpha+beta) up to the floor eps."""
    if z <= 0:
        raise ValueError("income must be positive")
    b = p.beta + p.gamma * p.mu * math.log1p(S)
    x = (p.alpha * (z + p.epsilon) - b * p.epsilon) / (p.alpha + b)
    return min(max(x, 0.0), z)


def private_optimum_numeric(z: float, p: ModelParams, S: float = 0.0) -> float:
    def gap(x):
        d = partials(x, z - x, S, p)
        return float(d.U_x - d.U_y)

    lo, hi = 0.0, z
    if gap(lo) <= 0:
        return lo
    if gap(hi) >= 0:
        return hi
    return float(optimize.brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500))


def _psi(x, z, profile: Profile, p: ModelParams, m: float | None = None) -> np.ndarray:
    st = social_terms(x, profile, m)
    S = social_value(st, p)
    d = partials(x, z - x, S, p)
    return d.U_x - d.U_y + social_slope(st, p, profile.mass) * d.U_S


def foc_residual(x: float, z: float, profile: Profile, p: ModelParams, m: float | None = None) -> float:
    """psi = U_x - U_y + (c_N N_x + c_b F + c_a (1 - F)) U_S; the total derivative
    of U(x, z - x, S(x)) in x."""
    if not 0 < x < z:
        raise ValueError("x must lie strictly inside (0, z)")
    return float(_psi(np.float64(x), z, profile, p, m))


def total_utility(x, z, profile: Profile, p: ModelParams, m: float | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    st = social_terms(x, profile, m)
    return utility(x, z - x, social_value(st, p), p)


# -- best responses ----------------------------------------------------------


def best_response(
    z,
    profile: Profile,
    p: ModelParams,
    delta: float = 1e-9,
    grid: int = GRID_POINTS,
    m: float | None = None,
) -> np.ndarray:
    """Global maximiser of U(x, z-x, S(x)) on [delta, z-delta] for each income.

    A coarse grid locates the best cell; bisection on psi (the exact derivative)
    then refines inside the neighbouring cells.  Corners and kinks at atoms of
    F are handled because the refined point is compared with the grid winner.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    out = np.full(z.shape, delta)
    ok = z > 2 * delta
    if not np.any(ok):
        return out
    zz = z[ok]
    lo_b, hi_b = np.full(zz.shape, delta), zz - delta
    t = np.linspace(0.0, 1.0, grid)
    xs = lo_b[:, None] + (hi_b - lo_b)[:, None] * t[None, :]
    u = total_utility(xs, zz[:, None], profile, p, m)
    k = np.argmax(u, axis=1)
    rows = np.arange(zz.size)
    x_grid = xs[rows, k]
    lo = xs[rows, np.maximum(k - 1, 0)]
    hi = xs[rows, np.minimum(k + 1, grid - 1)]
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        up = _psi(mid, zz, profile, p, m) > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    x_ref = 0.5 * (lo + hi)
    better = total_utility(x_ref, zz, profile, p, m) >= total_utility(x_grid, zz, profile, p, m)
    out[ok] = np.where(better, x_ref, x_grid)
    return out


# -- populations and equilibrium ----------------------------------------------


@dataclass(frozen=True, eq=False)
class AgentPopulation:
    incomes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        z = np.asarray(self.incomes, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if z.shape != w.shape or z.size == 0 or np.any(z <= 0) or np.any(w < 0):
            raise ValueError("incomes must be positive and weights non-negative")
        if not math.isclose(float(w.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "incomes", z)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, z_min: float = 0.1, z_max: float = 1.0, m: int = 101) -> "AgentPopulation":
        return cls(np.linspace(z_min, z_max, m), np.full(m, 1.0 / m))

    def profile(self, x: np.ndarray) -> Profile:
        return Profile(np.asarray(x, dtype=np.float64), self.weights)


@dataclass(eq=False)
class EquilibriumState:
    population: AgentPopulation
    params: ModelParams
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: list[float] = field(default_factory=list)

    @property
    def profile(self) -> Profile:
        return self.population.profile(self.x)

    def rows(self) -> list[dict]:
        return [{"income": float(z), "weight": float(w), "x": float(x)} for z, w, x in zip(self.population.incomes, self.population.weights, self.x)]

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "mean_consumption": float(np.dot(self.population.weights, self.x)),
        }


def equilibrium(
    population: AgentPopulation,
    p: ModelParams,
    tol: float = 1e-8,
    max_iters: int = 500,
    damping: float = 0.5,
) -> EquilibriumState:
    """Damped best-response iteration from the private optima.

    Every agent responds to the full population profile (its own atom
    included).  Returns the last state with ``converged=False`` when
    ``max_iters`` is hit.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must be in (0, 1]")
    z = population.incomes
    x = np.array([private_optimum(zi, p) for zi in z])
    history = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        br = best_response(z, population.profile(x), p)
        step = float(np.max(np.abs(br - x)))
        history.append(step)
        x = (1 - damping) * x + damping * br
        if step * damping < tol:
            converged = True
            break
    residual = float(np.max(np.abs(best_response(z, population.profile(x), p) - x)))
    return EquilibriumState(population, p, x, it, residual, converged, history)


# -- probes ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbeReport:
    kind: str
    level: float
    delta: float
    incomes: np.ndarray
    x_before: np.ndarray
    x_after: np.ndarray
    network_share_low: float
    network_share_high: float

    @property
    def delta_x(self) -> np.ndarray:
        return self.x_after - self.x_before

    @property
    def status_share_low(self) -> float:
        return 1.0 - self.network_share_low

    @property
    def status_share_high(self) -> float:
        return 1.0 - self.network_share_high

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "level": self.level,
            "delta": self.delta,
            "min_delta_x": float(self.delta_x.min()),
            "max_delta_x": float(self.delta_x.max()),
            "network_share_low": self.network_share_low,
            "network_share_high": self.network_share_high,
            "status_share_low": self.status_share_low,
            "status_share_high": self.status_share_high,
        }


def shift_profile(profile: Profile, kind: str, level: float, delta: float) -> tuple[Profile, float | None]:
    """Perturbed profile and an optional override of the network input m.

    ``raise``: everyone consuming at least ``level`` consumes ``delta`` more.
    ``add-mass``: extra mass ``delta`` consuming ``level``.
    ``network``: only the network input grows, ``m * (1 + delta)``.
    """
    if kind == "raise":
        return profile.shifted(delta, level), None
    if kind == "add-mass":
        return profile.with_mass(level, delta), None
    if kind == "network":
        return profile, profile.mean * (1 + delta)
    raise ValueError(f"unknown shift kind {kind!r}")


def foc_contributions(z: float, profile: Profile, p: ModelParams) -> tuple[float, float]:
    """Network and status parts of the social FOC term at the agent's best
    response: ``c_N N_x U_S`` and ``(c_b F + c_a (1 - F)) U_S``."""
    x = float(best_response(z, profile, p)[0])
    st = social_terms(x, profile)
    u_s = float(partials(x, z - x, float(social_value(st, p)), p).U_S)
    network = p.c_N * float(st.N_x) * u_s
    status = (p.c_b * float(st.F) + p.c_a * (profile.mass - float(st.F))) * u_s
    return network, status


def network_share(z: float, profile: Profile, p: ModelParams) -> float:
    net, status = foc_contributions(z, profile, p)
    total = net + status
    return net / total if total > 0 else 0.0


def complementarity_probe(
    state: EquilibriumState,
    kind: str = "raise",
    level: float = 0.0,
    delta: float = 1e-3,
    incomes: Sequence[float] | None = None,
    levels: tuple[float, float] = (0.5, 1.5),
) -> ProbeReport:
    """Best-response change of held-out agents when the population shifts, plus
    the network/status decomposition at low and high population consumption
    (the equilibrium profile scaled by ``levels``)."""
    p = state.params
    base = state.profile
    z = np.asarray(incomes if incomes is not None else np.quantile(state.population.incomes, np.linspace(0.1, 0.9, 9)), dtype=np.float64)
    before = best_response(z, base, p)
    if delta == 0:
        after = before.copy()
    else:
        shifted, m = shift_profile(base, kind, level, delta)
        after = best_response(z, shifted, p, m=m)
    z_mid = float(np.median(state.population.incomes))
    low = network_share(z_mid, base.scaled(levels[0]), p)
    high = network_share(z_mid, base.scaled(levels[1]), p)
    return ProbeReport(kind, level, delta, z, before, after, low, high)


# -- assumptions -------------------------------------------------------------


@dataclass
class AssumptionReport:
    results: dict[str, bool] = field(default_factory=dict)
    violations: dict[str, list[tuple[float, float, float]]] = field(default_factory=dict)

    def passed(self, name: str) -> bool:
        return self.results[name]

    def to_json(self, max_points: int = 20) -> dict:
        return {
            name: {"pass": ok, "violations": len(self.violations[name]), "examples": self.violations[name][:max_points]}
            for name, ok in self.results.items()
        }


def assumption_check(p: ModelParams, z_grid: Sequence[float], x_grid: Sequence[float], S_grid: Sequence[float]) -> AssumptionReport:
    """Evaluates the regularity conditions at every (z, x, S) with x < z.

    Checks: positive marginal utilities, strict concavity in each argument,
    non-negative x/y cross partial, strict normality (U_xy - U_yy > 0), a
    unique private optimum, and the sign condition
    ``(U_xS - U_yS) * (x - x_hat) < 0``.
    """
    report = AssumptionReport()
    checks = ["positive_marginals", "concavity", "cross_partial", "normality", "unique_private_optimum", "sign_condition"]
    for name in checks:
        report.violations[name] = []
    for z in z_grid:
        for S in S_grid:
            x_hat = private_optimum(z, p, S)
            xs = np.array([x for x in x_grid if 0 < x < z], dtype=np.float64)
            fine = np.linspace(0, z, 2001)
            gap = partials(fine, z - fine, S, p)
            signs = np.sign(gap.U_x - gap.U_y)
            signs = signs[signs != 0]  # an exact root on the grid is not a second crossing
            if np.count_nonzero(np.diff(signs) != 0) != 1:
                report.violations["unique_private_optimum"].append((float(z), float("nan"), float(S)))
            if xs.size == 0:
                continue
            d = partials(xs, z - xs, S, p)
            pts = [(float(z), float(x), float(S)) for x in xs]
            masks = {
                "positive_marginals": (d.U_x > 0) & (d.U_y > 0) & (d.U_S > 0),
                "concavity": (d.U_xx < 0) & (d.U_yy < 0) & (d.U_SS < 0),
                "cross_partial": d.U_xy >= 0,
                "normality": d.U_xy - d.U_yy > 0,
                "sign_condition": (d.U_xS - d.U_yS) * (xs - x_hat) < 0,
            }
            for name, mask in masks.items():
                report.violations[name].extend(pt for pt, ok in zip(pts, mask) if not ok)
    for name in checks:
        report.results[name] = not report.violations[name]
    return report


def parameter_grid(c_N: Sequence[float], c_a: Sequence[float], base: ModelParams | None = None, c_b_ratio: float = 0.5) -> list[ModelParams]:
    base = base or ModelParams()
    return [replace(base, c_N=float(n), c_a=float(a), c_b=float(a) * c_b_ratio) for n in c_N for a in c_a]
