"""Monte-Carlo evaluation of a trained policy against a specification."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .formulas import OuterFormula
from .monitor import RobustnessConfig, outer_rho_batch
from .policy import PolicyParams, rollout
from .scenario import Scenario

_CHUNK = 250


@dataclass
class EvalReport:
    trials: int
    successes: int
    success_rate: float
    rho_min: float
    rho_mean: float
    rho_max: float
    rho_quantiles: list[float]  # 0, 25, 50, 75, 100th percentiles
    mean_communications: float
    wall_clock_per_rollout: float
    gate_mode: str
    seed: int

    def to_json(self) -> dict:
        """Serialized form; timing is deliberately excluded so reports from
        identical seeds are bitwise identical."""
        return {
            "trials": self.trials,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "rho_min": self.rho_min,
            "rho_mean": self.rho_mean,
            "rho_max": self.rho_max,
            "rho_quantiles": self.rho_quantiles,
            "mean_communications": self.mean_communications,
            "gate_mode": self.gate_mode,
            "seed": self.seed,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def evaluate(
    params: PolicyParams,
    scenario: Scenario,
    phi: OuterFormula,
    trials: int,
    seed: int = 0,
    gate_mode: str = "full",
    r_top: float = 1e6,
) -> EvalReport:
    """Independent seeded rollouts; success is classical robustness >= 0."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng([seed, 97])
    member_caps = scenario.member_caps()
    cfg = RobustnessConfig("classical", top=r_top)
    etas: list[np.ndarray] = []
    comms: list[np.ndarray] = []
    t0 = time.perf_counter()
    remaining = trials
    while remaining > 0:
        batch = min(_CHUNK, remaining)
        remaining -= batch
        x0 = scenario.sample_initial_batch(rng, batch)
        with ad.no_grad():
            res = rollout(params, x0, scenario.horizon, gate_mode,
                          member_caps=member_caps)
        states = res.states_numpy()
        members = [(states[:, j], caps) for j, caps in enumerate(member_caps)]
        etas.append(outer_rho_batch(members, phi, cfg))
        comms.append(res.comm_counts())
    elapsed = time.perf_counter() - t0
    eta = np.concatenate(etas)
    comm = np.concatenate(comms)
    successes = int((eta >= 0).sum())
    return EvalReport(
        trials=trials,
        successes=successes,
        success_rate=successes / trials,
        rho_min=float(eta.min()),
        rho_mean=float(eta.mean()),
        rho_max=float(eta.max()),
        rho_quantiles=[float(q) for q in np.percentile(eta, [0, 25, 50, 75, 100])],
        mean_communications=float(comm.mean()),
        wall_clock_per_rollout=elapsed / trials,
        gate_mode=gate_mode,
        seed=seed,
    )
