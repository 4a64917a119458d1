"""Training pipeline for the team policy.

Stage A trains the policy networks under full communication on the
robustness-with-cost objective. Stage B alternates dataset aggregation
(rollouts, repairing violators) with retraining on the mixed
robustness+imitation objective. Stage C trains a no-communication baseline
on the same mixed objective. Stage D labels thoughts by ablating single
(agent, time) channel connections and trains the gate classifier on them.
Stage E retrains the policy with the learned gate active and frozen.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import autodiff as ad
from .autodiff import Tensor
from .formulas import OuterFormula
from .monitor import RobustnessConfig, outer_rho_batch, outer_rho_tensor
from .nn import Adam
from .policy import PolicyParams, RolloutResult, create_policy, rollout, save_policy
from .repair import RepairBudget, repair
from .scenario import Scenario
from .trajectories import TeamTrajectory


@dataclass
class TrainConfig:
    # objective
    m_samples: int = 16
    n_rollouts: int = 64
    beta: float = 0.5
    gamma: float | None = None  # None: closed-form bound with 1.1 safety factor
    tau: float = 10.0
    tau_start: float = 1.0  # temperature anneals from here up to tau
    tau_anneal_every: int = 100  # doubling period, in optimizer steps
    r_top: float = 1e6
    # optimization
    lr: float = 0.02
    steps_a: int = 600
    steps_b: int = 250
    rounds_b: int = 3
    convergence_pp: float = 1.0
    steps_c: int = 350
    steps_e: int = 250
    gate_lr: float = 0.01
    gate_steps: int = 400
    eval_every: int = 25
    val_states: int = 64
    val_fraction: float = 0.2
    # gate labeling
    gate_states: int = 10
    gate_eps_rel: float = 0.05
    gate_eps_floor: float = 0.1
    # model
    n_c: int = 8
    hidden: int = 32
    # repair budget during aggregation
    repair_iterations: int = 250
    repair_restarts: int = 3
    seed: int = 0

    def smooth_cfg(self, step: int | None = None) -> RobustnessConfig:
        """Training temperature: anneals from tau_start, doubling every
        tau_anneal_every steps, capped at tau. step=None gives the final tau."""
        if step is None:
            tau = self.tau
        else:
            tau = min(self.tau_start * 2.0 ** (step // self.tau_anneal_every), self.tau)
        return RobustnessConfig("smooth", tau=tau, top=self.r_top)

    def repair_budget(self) -> RepairBudget:
        return RepairBudget(
            synth_iterations=self.repair_iterations,
            synth_restarts=self.repair_restarts,
            seed=self.seed,
        )

    @staticmethod
    def from_json(path: str | Path) -> "TrainConfig":
        return TrainConfig(**json.loads(Path(path).read_text()))

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")


def gamma_bound(scenario: Scenario) -> float:
    """Closed-form supremum of the squared-control cost over the whole team,
    times a 1.1 safety factor (keeps the objective's sign strict)."""
    u = scenario.u_max_matrix()
    return 1.1 * scenario.horizon * float((u * u).sum())


def effective_gamma(cfg: TrainConfig, scenario: Scenario) -> float:
    return cfg.gamma if cfg.gamma is not None else gamma_bound(scenario)


# -- objectives -----------------------------------------------------------------


def control_cost(res: RolloutResult) -> Tensor:
    """Sum over agents and time of ||u||^2, per batch element: (B,)."""
    total = None
    for u in res.controls:
        s = ad.sum_(ad.square(u), axis=-1)  # (B*J,)
        total = s if total is None else total + s
    per_agent = ad.reshape(total, (res.batch, res.n_agents))
    return ad.sum_(per_agent, axis=1)


def robustness_objective(
    params: PolicyParams,
    x0_batch: np.ndarray,
    phi: OuterFormula,
    scenario: Scenario,
    cfg: TrainConfig,
    gate_mode: str,
    gamma: float,
    step: int | None = None,
) -> tuple[Tensor, RolloutResult, Tensor]:
    """Mean over the batch of eta - max(eta,0) * cost / gamma.

    The division by gamma (>= the cost supremum) keeps the sign of every
    summand equal to the sign of eta, so cost can never override robustness.
    gamma = 0 disables the cost term entirely (pure mean robustness).
    """
    member_caps = scenario.member_caps()
    res = rollout(params, x0_batch, scenario.horizon, gate_mode, member_caps=member_caps)
    eta = outer_rho_tensor(res.member_tensors(member_caps), phi, cfg.smooth_cfg(step))
    if gamma <= 0:
        return ad.mean(eta), res, eta
    cost = control_cost(res)
    per = eta - ad.relu(eta) * cost * (1.0 / gamma)
    return ad.mean(per), res, eta


# -- dataset --------------------------------------------------------------------


@dataclass
class DatasetEntry:
    initial: np.ndarray  # (J, 2)
    states: np.ndarray  # (J, H+1, 2)
    provenance: str  # "rollout" | "repaired"
    round_index: int


@dataclass
class Dataset:
    entries: list[DatasetEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, entry: DatasetEntry, team: TeamTrajectory, phi: OuterFormula) -> None:
        from .monitor import outer_sat

        if not outer_sat(team, phi, 0):
            raise ValueError("refusing to insert a violating trajectory into the dataset")
        self.entries.append(entry)

    def split(self, val_fraction: float) -> tuple[list[int], list[int]]:
        """Deterministic head/tail split by insertion order."""
        n_val = max(1, int(len(self.entries) * val_fraction)) if self.entries else 0
        idx = list(range(len(self.entries)))
        return idx[n_val:], idx[:n_val]

    def save(self, path: str | Path) -> None:
        doc = [
            {
                "initial": e.initial.tolist(),
                "states": e.states.tolist(),
                "provenance": e.provenance,
                "round": e.round_index,
            }
            for e in self.entries
        ]
        Path(path).write_text(json.dumps(doc) + "\n")

    @staticmethod
    def load(path: str | Path) -> "Dataset":
        doc = json.loads(Path(path).read_text())
        return Dataset(
            [
                DatasetEntry(
                    np.array(e["initial"]), np.array(e["states"]),
                    e["provenance"], e["round"],
                )
                for e in doc
            ]
        )


def aggregate_dataset(
    params: PolicyParams,
    scenario: Scenario,
    phi: OuterFormula,
    cfg: TrainConfig,
    dataset: Dataset,
    rng: np.random.Generator,
    round_index: int,
    gate_mode: str = "full",
) -> dict:
    """Roll out, repair violators, insert every satisfying trajectory."""
    member_caps = scenario.member_caps()
    x0 = scenario.sample_initial_batch(rng, cfg.n_rollouts)
    with ad.no_grad():
        res = rollout(params, x0, scenario.horizon, gate_mode, member_caps=member_caps)
    teams = res.to_teams()
    states_np = res.states_numpy()
    members = [(states_np[:, j], caps) for j, caps in enumerate(member_caps)]
    etas = outer_rho_batch(members, phi, RobustnessConfig("classical", top=cfg.r_top))
    stats = {"rollouts": cfg.n_rollouts, "satisfying": 0, "repaired": 0, "failed": 0}
    budget = cfg.repair_budget()
    for i, team in enumerate(teams):
        if etas[i] >= 0:
            stats["satisfying"] += 1
            dataset.add(
                DatasetEntry(x0[i], states_np[i], "rollout", round_index),
                team, phi,
            )
            continue
        outcome = repair(team, phi, scenario, replace(budget, seed=budget.seed + i))
        if outcome.success:
            stats["repaired"] += 1
            states = np.stack(
                [m.trajectory.states for m in outcome.trajectory.members]
            )
            dataset.add(
                DatasetEntry(x0[i], states, "repaired", round_index),
                outcome.trajectory, phi,
            )
        else:
            stats["failed"] += 1
    stats["success_rate"] = stats["satisfying"] / cfg.n_rollouts
    return stats


# -- imitation ---------------------------------------------------------------------


def identical_groups(scenario: Scenario) -> list[list[int]]:
    """Roster indices grouped by identical capability sets."""
    groups: dict[frozenset, list[int]] = {}
    for idx, a in enumerate(scenario.agents):
        groups.setdefault(a.capabilities, []).append(idx)
    return [groups[k] for k in sorted(groups, key=lambda s: sorted(s))]


def match_identical_agents(
    roll_states: np.ndarray,
    data_states: np.ndarray,
    groups: list[list[int]],
) -> np.ndarray:
    """Permutation p minimizing sum_t ||roll[j] - data[p[j]]||^2 within groups.

    roll_states/data_states are (J, T, 2); p[j] is the dataset roster index
    imitated by rollout agent j.
    """
    n = roll_states.shape[0]
    if data_states.shape[0] != n:
        raise ValueError("mismatched rosters")
    perm = np.arange(n)
    for group in groups:
        if len(group) == 1:
            continue
        cost = np.zeros((len(group), len(group)))
        for a, ja in enumerate(group):
            for b, jb in enumerate(group):
                diff = roll_states[ja] - data_states[jb]
                cost[a, b] = float((diff * diff).sum())
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            perm[group[r]] = group[c]
    return perm


def imitation_loss(
    params: PolicyParams,
    entries: list[DatasetEntry],
    scenario: Scenario,
    gate_mode: str,
) -> Tensor:
    """Mean over entries of the squared distance between the policy's rollout
    from the entry's initial states and the stored trajectory, with identical
    agents matched before comparison."""
    member_caps = scenario.member_caps()
    groups = identical_groups(scenario)
    x0 = np.stack([e.initial for e in entries])
    res = rollout(params, x0, scenario.horizon, gate_mode, member_caps=member_caps)
    roll_np = res.states_numpy()
    targets = np.zeros_like(roll_np)
    for i, entry in enumerate(entries):
        perm = match_identical_agents(roll_np[i], entry.states, groups)
        targets[i] = entry.states[perm]
    total = None
    for j in range(res.n_agents):
        diff = res.agent_states(j) - Tensor(targets[:, j])
        term = ad.sum_(ad.square(diff), axis=(1, 2))  # (B,)
        total = term if total is None else total + term
    return ad.mean(total)


# -- success metric ------------------------------------------------------------------


def success_rate(
    params: PolicyParams,
    scenario: Scenario,
    phi: OuterFormula,
    x0_batch: np.ndarray,
    gate_mode: str,
    r_top: float = 1e6,
) -> float:
    member_caps = scenario.member_caps()
    with ad.no_grad():
        res = rollout(params, x0_batch, scenario.horizon, gate_mode,
                      member_caps=member_caps)
    states = res.states_numpy()
    members = [(states[:, j], caps) for j, caps in enumerate(member_caps)]
    etas = outer_rho_batch(members, phi, RobustnessConfig("classical", top=r_top))
    return float((etas >= 0).mean())


# -- policy training engine ------------------------------------------------------------


@dataclass
class StageResult:
    params: PolicyParams
    log: list[dict]
    best_success: float


def train_policy(
    scenario: Scenario,
    phi: OuterFormula,
    cfg: TrainConfig,
    *,
    gate_mode: str,
    steps: int,
    stage: str,
    rng: np.random.Generator,
    dataset: Dataset | None = None,
    init_params: PolicyParams | None = None,
    lr: float | None = None,
) -> StageResult:
    """Adam ascent on the (optionally imitation-mixed) objective; returns the
    checkpoint with the best validation success rate."""
    params = init_params.copy() if init_params is not None else create_policy(
        rng, scenario, n_c=cfg.n_c, hidden=cfg.hidden
    )
    opt = Adam(params.policy_named(), lr=lr if lr is not None else cfg.lr)
    gamma = effective_gamma(cfg, scenario)

    train_idx: list[int] = []
    if dataset is not None and len(dataset) > 0 and cfg.beta > 0:
        train_idx, val_idx = dataset.split(cfg.val_fraction)
        val_x0 = np.stack([dataset.entries[i].initial for i in val_idx])
        extra = cfg.val_states - len(val_x0)
        if extra > 0:
            val_x0 = np.concatenate(
                [val_x0, scenario.sample_initial_batch(rng, extra)]
            )
    else:
        val_x0 = scenario.sample_initial_batch(rng, cfg.val_states)

    log: list[dict] = []
    best_sr = -1.0
    best_params = params.copy()
    use_imitation = dataset is not None and len(train_idx) > 0 and cfg.beta > 0

    for step in range(steps):
        x0 = scenario.sample_initial_batch(rng, cfg.m_samples)
        opt.zero_grad()
        objective, _, eta = robustness_objective(
            params, x0, phi, scenario, cfg, gate_mode, gamma, step=step
        )
        if use_imitation:
            k = min(cfg.m_samples, len(train_idx))
            picks = rng.choice(len(train_idx), size=k, replace=False)
            entries = [dataset.entries[train_idx[p]] for p in picks]
            imit = imitation_loss(params, entries, scenario, gate_mode)
            total = objective * (1.0 - cfg.beta) - imit * cfg.beta
        else:
            total = objective
        (-total).backward()
        opt.step()

        if (step + 1) % cfg.eval_every == 0 or step == steps - 1:
            sr = success_rate(params, scenario, phi, val_x0, gate_mode, cfg.r_top)
            log.append(
                {
                    "stage": stage,
                    "step": step + 1,
                    "objective": float(total.value),
                    "mean_eta": float(eta.value.mean()),
                    "val_success": sr,
                }
            )
            if sr > best_sr:
                best_sr = sr
                best_params = params.copy()

    return StageResult(params=best_params, log=log, best_success=best_sr)


# -- gate dataset and classifier ----------------------------------------------------------


@dataclass
class GateSample:
    thought: np.ndarray
    label: int
    agent_index: int
    time: int
    drop: float


@dataclass
class GateDataset:
    samples: list[GateSample] = field(default_factory=list)
    threshold_sweep: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        thoughts = np.stack([s.thought for s in self.samples])
        labels = np.array([s.label for s in self.samples], dtype=np.int64)
        return thoughts, labels

    def save(self, path: str | Path) -> None:
        doc = {
            "threshold_sweep": self.threshold_sweep,
            "samples": [
                {
                    "thought": s.thought.tolist(),
                    "label": s.label,
                    "agent_index": s.agent_index,
                    "time": s.time,
                    "drop": s.drop,
                }
                for s in self.samples
            ],
        }
        Path(path).write_text(json.dumps(doc) + "\n")


def build_gate_dataset(
    params_full: PolicyParams,
    params_nocomm: PolicyParams,
    scenario: Scenario,
    phi: OuterFormula,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> GateDataset:
    """Label each (agent, time) thought by the robustness drop when that one
    channel connection is cut and the agent falls back to the no-comm policy
    for that step. Covers all agents at all time points of each sampled run."""
    member_caps = scenario.member_caps()
    smooth = cfg.smooth_cfg()
    data = GateDataset()
    sweep_rels = (0.01, 0.05, 0.1)
    sweep_counts = {rel: 0 for rel in sweep_rels}
    total = 0

    def smooth_eta(res: RolloutResult) -> float:
        states = res.states_numpy()
        members = [(states[:, j], caps) for j, caps in enumerate(member_caps)]
        return float(outer_rho_batch(members, phi, smooth)[0])

    for _ in range(cfg.gate_states):
        x0 = scenario.sample_initial(rng)
        with ad.no_grad():
            base = rollout(params_full, x0, scenario.horizon, "full",
                           member_caps=member_caps)
            eta_full = smooth_eta(base)
            eps = cfg.gate_eps_rel * max(abs(eta_full), cfg.gate_eps_floor)
            for j in range(scenario.n_agents):
                for t in range(scenario.horizon):
                    abl = rollout(
                        params_full, x0, scenario.horizon, "full",
                        member_caps=member_caps,
                        ablate=(j, t), nocomm_params=params_nocomm,
                    )
                    drop = eta_full - smooth_eta(abl)
                    label = int(drop > eps)
                    thought = base.thoughts[t].value[j].copy()
                    data.samples.append(GateSample(thought, label, j, t, float(drop)))
                    total += 1
                    for rel in sweep_rels:
                        if drop > rel * max(abs(eta_full), cfg.gate_eps_floor):
                            sweep_counts[rel] += 1

    data.threshold_sweep = {
        "relative_thresholds": list(sweep_rels),
        "positive_fraction": {
            str(rel): (sweep_counts[rel] / total if total else 0.0) for rel in sweep_rels
        },
    }
    return data


def gate_cross_entropy(params: PolicyParams, thoughts: np.ndarray,
                       labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of the gate over (thought, label) pairs.

    Class 0 is "communicate" (label 1 selects it), class 1 is "stay silent".
    """
    logits = params.gate_net(Tensor(thoughts))
    onehot = np.zeros((len(labels), 2))
    onehot[labels == 1, 0] = 1.0
    onehot[labels == 0, 1] = 1.0
    lse = ad.logsumexp(logits, axis=-1)
    picked = ad.sum_(logits * Tensor(onehot), axis=-1)
    return ad.mean(lse - picked)


@dataclass
class GateReport:
    samples: int
    positives: int
    train_accuracy: float
    heldout_accuracy: float
    final_loss: float
    degenerate: bool


def train_gate(
    params: PolicyParams,
    data: GateDataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> GateReport:
    """Fit the gate classifier in place; reports held-out accuracy."""
    thoughts, labels = data.arrays()
    positives = int(labels.sum())
    degenerate = positives == 0 or positives == len(labels)
    order = rng.permutation(len(labels))
    n_held = max(1, len(labels) // 5)
    held, tr = order[:n_held], order[n_held:]
    if len(tr) == 0:
        tr = held
    opt = Adam(params.gate_named(), lr=cfg.gate_lr)
    loss_val = float("nan")
    for _ in range(cfg.gate_steps):
        opt.zero_grad()
        loss = gate_cross_entropy(params, thoughts[tr], labels[tr])
        loss.backward()
        opt.step()
        loss_val = loss.item()

    def accuracy(idx) -> float:
        with ad.no_grad():
            logits = params.gate_net(Tensor(thoughts[idx])).value
        pred = (np.argmax(logits, axis=-1) == 0).astype(int)
        return float((pred == labels[idx]).mean())

    return GateReport(
        samples=len(labels),
        positives=positives,
        train_accuracy=accuracy(tr),
        heldout_accuracy=accuracy(held),
        final_loss=loss_val,
        degenerate=degenerate,
    )


# -- the full pipeline ---------------------------------------------------------------------


@dataclass
class PipelineResult:
    final: PolicyParams
    full_comm: PolicyParams
    nocomm: PolicyParams
    dataset: Dataset
    gate_data: GateDataset | None
    gate_report: GateReport | None
    log: list[dict]
    stage_success: dict


def run_pipeline(
    scenario: Scenario,
    phi: OuterFormula,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    stages: str = "abcde",
) -> PipelineResult:
    """Run the requested training stages in order; see the module docstring."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    log: list[dict] = []
    stage_success: dict = {}
    t_start = time.perf_counter()

    rng_a = np.random.default_rng([cfg.seed, 1])
    result_a = train_policy(
        scenario, phi, cfg, gate_mode="full", steps=cfg.steps_a, stage="a", rng=rng_a
    )
    log += result_a.log
    stage_success["a"] = result_a.best_success
    params_full = result_a.params
    if out is not None:
        save_policy(out / "stage_a.json", params_full)

    dataset = Dataset()
    if "b" in stages:
        agg_rates: list[float] = []
        for round_index in range(1, cfg.rounds_b + 1):
            rng_round = np.random.default_rng([cfg.seed, 2, round_index])
            agg = aggregate_dataset(
                params_full, scenario, phi, cfg, dataset, rng_round, round_index
            )
            agg_rates.append(agg["success_rate"])
            log.append({"stage": "b-aggregate", "round": round_index, **agg})
            result_b = train_policy(
                scenario, phi, cfg, gate_mode="full", steps=cfg.steps_b,
                stage=f"b{round_index}", rng=np.random.default_rng([cfg.seed, 3, round_index]),
                dataset=dataset, init_params=params_full,
            )
            log += result_b.log
            params_full = result_b.params
            stage_success[f"b{round_index}"] = result_b.best_success
            stage_success["b"] = result_b.best_success
            # aggregation rounds stop once the rollout success rate plateaus
            if len(agg_rates) >= 2 and \
                    agg_rates[-1] - agg_rates[-2] < cfg.convergence_pp / 100.0:
                break
        if out is not None:
            save_policy(out / "stage_b.json", params_full)
            dataset.save(out / "dataset.json")

    params_nocomm = params_full
    if "c" in stages:
        result_c = train_policy(
            scenario, phi, cfg, gate_mode="none", steps=cfg.steps_c, stage="c",
            rng=np.random.default_rng([cfg.seed, 4]), dataset=dataset,
        )
        log += result_c.log
        params_nocomm = result_c.params
        stage_success["c"] = result_c.best_success
        if out is not None:
            save_policy(out / "stage_c_nocomm.json", params_nocomm)

    gate_data = None
    gate_report = None
    if "d" in stages:
        gate_data = build_gate_dataset(
            params_full, params_nocomm, scenario, phi, cfg,
            np.random.default_rng([cfg.seed, 5]),
        )
        gate_report = train_gate(
            params_full, gate_data, cfg, np.random.default_rng([cfg.seed, 6])
        )
        log.append(
            {
                "stage": "d",
                "gate_samples": gate_report.samples,
                "gate_positives": gate_report.positives,
                "gate_heldout_accuracy": gate_report.heldout_accuracy,
                "degenerate": gate_report.degenerate,
                "threshold_sweep": gate_data.threshold_sweep,
            }
        )
        if out is not None:
            gate_data.save(out / "gate_dataset.json")

    params_final = params_full
    if "e" in stages:
        result_e = train_policy(
            scenario, phi, cfg, gate_mode="learned", steps=cfg.steps_e, stage="e",
            rng=np.random.default_rng([cfg.seed, 7]), dataset=dataset,
            init_params=params_full,
        )
        log += result_e.log
        params_final = result_e.params
        stage_success["e"] = result_e.best_success

    if out is not None:
        save_policy(out / "final.json", params_final)
        log_doc = {
            "config": asdict(cfg),
            "stage_success": stage_success,
            "dataset_size": len(dataset),
            "events": log,
        }
        (out / "training_log.json").write_text(
            json.dumps(log_doc, indent=1, sort_keys=True) + "\n"
        )
    log.append({"stage": "done", "wall_clock_s": time.perf_counter() - t_start})

    return PipelineResult(
        final=params_final,
        full_comm=params_full,
        nocomm=params_nocomm,
        dataset=dataset,
        gate_data=gate_data,
        gate_report=gate_report,
        log=log,
        stage_success=stage_success,
    )
