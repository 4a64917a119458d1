"""Gradient-based single-agent synthesis under integrator dynamics.

Controls are parameterized as u(t) = u_max * tanh(w(t)), which keeps every
control strictly inside its box; w is optimized with Adam to maximize the
smooth robustness of the target formula at time 0, under a temperature
schedule that starts soft and sharpens. Restarts are seeded and sequential;
the first restart that clears the success margin wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .formulas import IAnd, IEventually, InnerFormula, ITrue, SpecError, horizon
from .monitor import RobustnessConfig, inner_rho, inner_rho_tensor
from .nn import Adam
from .trajectories import IndividualTrajectory


@dataclass
class SynthesisRequest:
    x0: np.ndarray
    horizon: int
    u_max: np.ndarray
    target: InnerFormula
    iterations: int = 500
    restarts: int = 8
    learning_rate: float = 0.05
    seed: int = 0
    tau_start: float = 2.0
    tau_max: float = 32.0
    tau_double_every: int = 100
    top: float = 1e6
    success_margin: float = 1e-3
    check_every: int = 20
    w_init: np.ndarray | None = None  # warm start for the first restart

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64).reshape(2)
        self.u_max = np.asarray(self.u_max, dtype=np.float64).reshape(2)
        if np.any(self.u_max <= 0):
            raise SpecError("control bounds must be positive")
        if horizon(self.target) > self.horizon:
            raise SpecError(
                f"target horizon {horizon(self.target)} exceeds request horizon {self.horizon}"
            )


@dataclass
class SynthResult:
    trajectory: IndividualTrajectory
    controls: np.ndarray
    robustness: float  # classical, at time 0
    success: bool
    restarts_used: int = 0
    history: list[float] = field(default_factory=list)  # best-so-far smooth values


def _unroll(x0: np.ndarray, w: Tensor, u_max: np.ndarray) -> tuple[Tensor, Tensor]:
    """States (H+1, 2) and controls (H, 2) from the unconstrained weights."""
    u = ad.tanh(w) * Tensor(u_max)
    rows = [Tensor(x0.reshape(1, 2))]
    for t in range(w.shape[0]):
        rows.append(rows[-1] + u[t : t + 1])
    return ad.concat(rows, axis=0), u


def _states_numpy(x0: np.ndarray, w_val: np.ndarray, u_max: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.tanh(w_val) * u_max
    states = np.vstack([x0[None], x0[None] + np.cumsum(u, axis=0)])
    return states, u


def synthesize(req: SynthesisRequest, record_history: bool = False) -> SynthResult:
    """Best-effort trajectory maximizing the target's robustness from x0.

    Success means strictly positive classical robustness; on failure the
    best restart's trajectory is returned flagged unsuccessful.
    """
    if isinstance(req.target, ITrue):
        u = np.zeros((req.horizon, 2))
        states = np.tile(req.x0, (req.horizon + 1, 1))
        return SynthResult(IndividualTrajectory(states, u), u, req.top, True)

    best_w: np.ndarray | None = None
    best_rho = -np.inf
    history: list[float] = []
    restarts_used = 0

    for restart in range(req.restarts):
        restarts_used += 1
        rng = np.random.default_rng([req.seed, restart])
        if restart == 0 and req.w_init is not None:
            w = Tensor(req.w_init.copy())
        else:
            w = Tensor(rng.uniform(-1.0, 1.0, size=(req.horizon, 2)))
        opt = Adam({"w": w}, lr=req.learning_rate)
        best_smooth = -np.inf
        stop = False
        for it in range(req.iterations):
            tau = min(req.tau_start * (2.0 ** (it // req.tau_double_every)), req.tau_max)
            cfg = RobustnessConfig("smooth", tau=tau, top=req.top)
            opt.zero_grad()
            states, _ = _unroll(req.x0, w, req.u_max)
            rho_s = inner_rho_tensor(states, req.target, cfg)
            best_smooth = max(best_smooth, rho_s.item())
            if record_history:
                history.append(best_smooth)
            (-rho_s).backward()
            opt.step()
            if it % req.check_every == req.check_every - 1 or it == req.iterations - 1:
                states_np, _ = _states_numpy(req.x0, w.value, req.u_max)
                rho_c = inner_rho(states_np, req.target, 0)
                if rho_c > best_rho:
                    best_rho = rho_c
                    best_w = w.value.copy()
                if rho_c > req.success_margin:
                    stop = True
                    break
        if stop:
            break

    assert best_w is not None
    states_np, u_np = _states_numpy(req.x0, best_w, req.u_max)
    rho = inner_rho(states_np, req.target, 0)
    return SynthResult(
        trajectory=IndividualTrajectory(states_np, u_np),
        controls=u_np,
        robustness=rho,
        success=rho > 0.0,
        restarts_used=restarts_used,
        history=history,
    )


def pinned_conjunction(pins: list[tuple[int, InnerFormula]]) -> InnerFormula:
    """Conjunction of formulas each pinned to hold at an exact time."""
    if not pins:
        return ITrue()
    parts = tuple(IEventually(phi, t, t) for t, phi in sorted(pins, key=lambda p: p[0]))
    if len(parts) == 1:
        return parts[0]
    return IAnd(parts)


def synthesize_conjunction(
    x0: np.ndarray,
    pins: list[tuple[int, InnerFormula]],
    horizon_steps: int,
    u_max: np.ndarray,
    record_history: bool = False,
    **budget,
) -> SynthResult:
    """Synthesis for a set of (time, formula) requirements on one agent."""
    for t, _ in pins:
        if t > horizon_steps:
            raise SpecError(f"pinned time {t} exceeds horizon {horizon_steps}")
    req = SynthesisRequest(
        x0=x0, horizon=horizon_steps, u_max=u_max, target=pinned_conjunction(pins), **budget
    )
    return synthesize(req, record_history=record_history)


def warm_start_weights(controls: np.ndarray, u_max: np.ndarray) -> np.ndarray:
    """Invert the tanh parameterization of an existing control sequence."""
    ratio = np.clip(controls / u_max, -0.999, 0.999)
    return np.arctanh(ratio)
