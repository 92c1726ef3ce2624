"""Two-species advection-diffusion-reaction solver for verification runs.

Species ``u1`` decays at rate ``alpha`` and feeds ``u2`` with conversion
factor ``beta``; both are carried by a uniform velocity field and diffuse.
Grid row 0 is the northern edge, so a flow angle of 90 degrees moves mass
toward decreasing row index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .analysis import angle_error, decompose_reaction, derive_angle, graph_f1, metrics_row
from .core import GridTensor, ReactionGraph, derive_seed, make_rng
from .errors import CflViolation, ConfigError, NonFiniteState, ZeroResultant
from .pip import PipConfig, discover


@dataclass(frozen=True)
class AdrSpec:
    D1: float = 0.005
    D2: float = 0.005
    v: float = 2.0
    theta: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    domain_size: float = 10.0
    interior_extent: float = 6.0
    nx: int = 20
    dt: float | None = None  # None: the stability bound
    sample_stride: int | None = None  # None: about 0.75 cells of travel per sample
    T_samples: int = 100
    u1_init_amplitude: float = 50.0
    blob_width: float | None = None  # None: domain_size / 10
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.D1 < 0 or self.D2 < 0:
            raise ConfigError("diffusion coefficients must be non-negative")
        if self.alpha < 0 or self.beta < 0 or self.v < 0:
            raise ConfigError("alpha, beta and v must be non-negative")
        if not 0 < self.interior_extent < self.domain_size:
            raise ConfigError("need 0 < interior_extent < domain_size")
        if self.nx < 3 or self.T_samples < 1 or self.noise_sigma < 0:
            raise ConfigError("need nx >= 3, T_samples >= 1, noise_sigma >= 0")
        if self.sample_stride is not None and self.sample_stride < 1:
            raise ConfigError("sample_stride must be >= 1")
        if self.dt is not None and self.dt > self.max_dt():
            raise CflViolation(f"dt={self.dt} exceeds the stability bound {self.max_dt()}")

    @property
    def h(self) -> float:
        return self.domain_size / self.nx

    def max_dt(self) -> float:
        """``0.5 * min(h / |v|, h^2 / (4 max D))``."""
        bounds = []
        if self.v > 0:
            bounds.append(self.h / self.v)
        d = max(self.D1, self.D2)
        if d > 0:
            bounds.append(self.h ** 2 / (4 * d))
        return 0.5 * min(bounds) if bounds else 0.5 * self.h

    def step(self) -> float:
        return self.max_dt() if self.dt is None else self.dt

    def stride(self) -> int:
        if self.sample_stride is not None:
            return self.sample_stride
        if self.v == 0:
            return 1
        return max(1, round(0.75 * self.h / (self.v * self.step())))

    def interior(self) -> slice:
        n = round(self.nx * self.interior_extent / self.domain_size)
        start = (self.nx - n) // 2
        return slice(start, start + n)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "AdrSpec":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown AdrSpec fields: {sorted(unknown)}")
        return cls(**d)


def _transport(u: np.ndarray, vx: float, vy: float, D: float, h: float, dt: float) -> np.ndarray:
    p = np.pad(u, 1, mode="edge")  # zero-flux walls
    c = p[1:-1, 1:-1]
    north, south = p[:-2, 1:-1], p[2:, 1:-1]
    west, east = p[1:-1, :-2], p[1:-1, 2:]
    # +x is increasing column, +y is decreasing row
    dudx = (c - west) / h if vx >= 0 else (east - c) / h
    dudy = (c - south) / h if vy >= 0 else (north - c) / h
    lap = (north + south + west + east - 4 * c) / h ** 2
    return c + dt * (-vx * dudx - vy * dudy + D * lap)


def _initial(spec: AdrSpec) -> tuple[np.ndarray, np.ndarray]:
    width = spec.domain_size / 10 if spec.blob_width is None else spec.blob_width
    x = (np.arange(spec.nx) - (spec.nx - 1) / 2) * spec.h
    r2 = x[:, None] ** 2 + x[None, :] ** 2
    u1 = spec.u1_init_amplitude * np.exp(-r2 / (2 * width ** 2))
    return u1, np.zeros_like(u1)


def solve_full(spec: AdrSpec) -> np.ndarray:
    """Whole-domain samples, shape ``(nx, nx, 2, T_samples)``.

    Innovations of standard deviation ``noise_sigma`` are added to both
    species after each recorded sample, so consecutive samples follow a
    linear lag-1 model with independent forcing.
    """
    dt, stride = spec.step(), spec.stride()
    th = math.radians(spec.theta)
    vx, vy = spec.v * math.cos(th), spec.v * math.sin(th)
    decay = math.exp(-spec.alpha * dt)
    rng = make_rng(derive_seed(spec.seed, 1))
    u1, u2 = _initial(spec)
    out = np.empty((spec.nx, spec.nx, 2, spec.T_samples))
    for k in range(spec.T_samples):
        out[:, :, 0, k], out[:, :, 1, k] = u1, u2
        for _ in range(stride):
            u1 = _transport(u1, vx, vy, spec.D1, spec.h, dt)
            u2 = _transport(u2, vx, vy, spec.D2, spec.h, dt)
            u2 = u2 + spec.beta * u1 * (1 - decay)
            u1 = u1 * decay
        if spec.noise_sigma > 0:
            u1 = u1 + rng.normal(0.0, spec.noise_sigma, u1.shape)
            u2 = u2 + rng.normal(0.0, spec.noise_sigma, u2.shape)
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise NonFiniteState(f"non-finite state after sample {k}")
    return out


def solve_adr(spec: AdrSpec) -> GridTensor:
    """Solve and crop to the central analysis region."""
    s = spec.interior()
    return GridTensor(np.ascontiguousarray(solve_full(spec)[s, s]))


def adr_ground_truth(spec: AdrSpec) -> tuple[ReactionGraph, float]:
    """Reaction truth (self links plus u1 -> u2 when the reaction is on) and angle."""
    edges = {(0, 1): 1.0} if spec.alpha > 0 and spec.beta > 0 else {}
    return ReactionGraph(2, edges, {0: 1.0, 1: 1.0}), float(spec.theta) % 360.0


@dataclass(frozen=True)
class AdrResult:
    stencil: object
    reaction: ReactionGraph
    angle: object  # AngleEstimate, or None for a zero resultant
    row: dict


def run_adr_experiment(spec: AdrSpec, cfg: PipConfig, experiment_id: str = "") -> AdrResult:
    x = solve_adr(spec)
    g = discover(x, cfg)
    reaction = decompose_reaction(g) if len(g) else ReactionGraph(2, {}, {})
    truth, theta_true = adr_ground_truth(spec)
    m = graph_f1(reaction, truth)
    try:
        angle = derive_angle(g)
        theta_hat, delta = angle.theta_hat, angle_error(angle.theta_hat, theta_true)
    except ZeroResultant:
        angle, theta_hat, delta = None, None, None
    row = metrics_row(experiment_id, m, theta_true, theta_hat, delta)
    return AdrResult(g, reaction, angle, row)


def sweep_points(sweep: dict) -> list[tuple[str, AdrSpec]]:
    """Expand a sweep JSON object into ``(experiment_id, spec)`` pairs.

    ``sweep`` holds lists ``D``, ``v``, ``theta`` and optional ``seeds`` plus a
    ``base`` dict of fixed AdrSpec fields. ``D`` sets both species.
    """
    known = {"D", "v", "theta", "seeds", "base"}
    unknown = set(sweep) - known
    if unknown:
        raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
    try:
        Ds, vs, thetas = list(sweep["D"]), list(sweep["v"]), list(sweep["theta"])
    except KeyError as exc:
        raise ConfigError(f"sweep is missing {exc}") from exc
    seeds = list(sweep.get("seeds", [0]))
    base = dict(sweep.get("base", {}))
    out = []
    for D in Ds:
        for v in vs:
            for th in thetas:
                for s in seeds:
                    eid = f"D={D:g},v={v:g},theta={th:g},seed={s}"
                    spec = AdrSpec.from_dict({**base, "D1": D, "D2": D, "v": v, "theta": th, "seed": s})
                    out.append((eid, spec))
    return out


def load_sweep(text: str) -> list[tuple[str, AdrSpec]]:
    try:
        return sweep_points(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sweep is not valid JSON: {exc}") from exc
