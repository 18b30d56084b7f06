"""Seeded simulation runs and batches.

One step of a run, in order: receivers absorb whatever the links deliver from
the previous step, the sender filter absorbs the new observation (and the
feedback about last step's delivery), errors are charged, the policy decides,
and payloads are handed to the links for delivery at the next step. The loss
of a run is

    phi = sum_k [ price[k] . u[k] + sum_i weight[i, k] |x[k] - xh[i, k]|^2 ]

with the conventions that nothing is deliverable at step 0 and a payload sent
at the final step never arrives inside the horizon.

A run is a pure function of (scenario, policy, seed). Batches reuse one
filter schedule per source and pair all policies on identical seeds, so
policy comparisons difference out the shared source and channel randomness.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng
from .channels import ChannelLink, multiaccess_gate
from .errors import ConfigurationError, LogicFault
from .estimation import (
    FilterSchedule,
    decoder_init,
    decoder_step,
    encoder_init,
    encoder_step,
    filter_schedule,
)
from .models import Scenario, sample_trajectory
from .policies import (
    Decision,
    Policy,
    PolicyInputs,
    dissemination_voi,
    parse_policy,
    prioritization_voi,
)


@dataclass(eq=False)
class RunMetrics:
    """Everything measured in one run.

    Totals are always present. Trace arrays (over steps 0..horizon) are None
    when the run was executed totals-only; `gamma` holds the pre-drawn
    delivery indicators, an outcome only at steps where `sent` is 1.

    mismatch_gap[i, k] is the norm of the difference between the sender's
    recursive mirror of receiver i and the literal sender-minus-receiver
    estimate gap. The two are maintained by independent code paths and agree
    exactly in theory, so this trace staying at rounding level is a live
    correctness check on every traced run.
    """

    scenario_name: str
    kind: str
    policy_label: str
    seed: int
    horizon: int
    total_mse: np.ndarray      # (links,)
    transmissions: np.ndarray  # (links,)
    losses: np.ndarray         # (links,)
    phi: float
    err_sq: Optional[np.ndarray] = None       # (links, steps)
    mismatch_sq: Optional[np.ndarray] = None  # (links, steps)
    mismatch_gap: Optional[np.ndarray] = None # (links, steps); see note below
    post_cov_trace: Optional[np.ndarray] = None  # (links, steps)
    sent: Optional[np.ndarray] = None         # (senders, steps)
    gamma: Optional[np.ndarray] = None        # (links, steps)
    rates: Optional[np.ndarray] = None        # (links, steps)
    voi_gain: Optional[np.ndarray] = None     # (senders, steps)
    voi_priority: Optional[np.ndarray] = None # (senders, steps); multi-access only


def _build_links(scenario: Scenario, seed: int) -> list:
    steps = scenario.horizon + 1
    links = []
    for i, proc in enumerate(scenario.links):
        rates = proc.sequence(steps, rng.stream(seed, rng.RATE, i))
        uniforms = rng.stream(seed, rng.ERASURE, i).random(steps)
        links.append(ChannelLink(rates, uniforms))
    return links


def source_schedules(scenario: Scenario) -> tuple:
    """One filter schedule per source; compute once, share across runs."""
    return tuple(filter_schedule(src) for src in scenario.sources)


def run_once(
    scenario: Scenario,
    policy,
    seed: int,
    collect_traces: bool = True,
    schedules: Optional[tuple] = None,
) -> RunMetrics:
    """Simulate one seeded run of `scenario` under `policy` (a Policy or its
    textual spec, e.g. "voi" or "periodic:15")."""
    if isinstance(policy, str):
        policy = parse_policy(policy)
    if schedules is None:
        schedules = source_schedules(scenario)
    if scenario.kind == "broadcast":
        return _run_broadcast(scenario, policy, seed, collect_traces, schedules)
    return _run_multiaccess(scenario, policy, seed, collect_traces, schedules)


def _empty_traces(scenario: Scenario, collect: bool) -> dict:
    if not collect:
        return {}
    steps = scenario.horizon + 1
    L, T = scenario.n_links, scenario.n_senders
    traces = {
        "err_sq": np.zeros((L, steps)),
        "mismatch_sq": np.zeros((L, steps)),
        "mismatch_gap": np.zeros((L, steps)),
        "post_cov_trace": np.zeros((L, steps)),
        "sent": np.zeros((T, steps), dtype=np.int8),
        "gamma": np.zeros((L, steps), dtype=np.int8),
        "rates": np.zeros((L, steps)),
        "voi_gain": np.zeros((T, steps)),
    }
    if scenario.kind == "multiaccess":
        traces["voi_priority"] = np.zeros((T, steps))
    return traces


def _finish(
    scenario: Scenario,
    policy: Policy,
    seed: int,
    links: list,
    total_mse: np.ndarray,
    phi: float,
    traces: dict,
) -> RunMetrics:
    metrics = RunMetrics(
        scenario_name=scenario.name,
        kind=scenario.kind,
        policy_label=policy.label,
        seed=seed,
        horizon=scenario.horizon,
        total_mse=total_mse,
        transmissions=np.array([lk.transmissions for lk in links]),
        losses=np.array([lk.losses for lk in links]),
        phi=float(phi),
        **traces,
    )
    if traces:
        for i, lk in enumerate(links):
            metrics.gamma[i] = lk.gamma
            metrics.rates[i] = lk.rates
    return metrics


def _run_broadcast(scenario, policy, seed, collect, schedules) -> RunMetrics:
    model = scenario.sources[0]
    sched: FilterSchedule = schedules[0]
    steps = scenario.horizon + 1
    L = scenario.n_links
    traj = sample_trajectory(model, seed, 0)
    links = _build_links(scenario, seed)
    rate_rows = [lk.rates for lk in links]
    policy_gen = rng.stream(seed, rng.POLICY)
    traces = _empty_traces(scenario, collect)

    decoders = [decoder_init(model) for _ in range(L)]
    encoder = encoder_init(model, traj.y[0], n_links=L, schedule=sched)
    total_mse = np.zeros(L)
    phi = 0.0
    q_tr = np.trace(sched.post_cov, axis1=1, axis2=2)
    u_prev = 0

    for k in range(steps):
        if k > 0:
            for i, lk in enumerate(links):
                decoders[i] = decoder_step(decoders[i], model, k, lk.receive(k))
            reached = [u_prev and lk.gamma[k - 1] for lk in links]
            encoder = encoder_step(encoder, model, k, traj.y[k], reached, sched)

        x_k = traj.x[k]
        step_err = np.empty(L)
        for i in range(L):
            e = x_k - decoders[i].estimate
            step_err[i] = e @ e
        total_mse += step_err
        phi += float(scenario.weight[:, k] @ step_err)

        weight_next = tuple(scenario.weight[:, k + 1]) if k + 1 < steps else (0.0,) * L
        inputs = PolicyInputs(
            mismatches=tuple(encoder.mismatch),
            success=tuple(1.0 - row[k] for row in rate_rows),
            weight_next=weight_next,
            price=(scenario.price[0, k],),
            state_matrix=(model.A[k],),
        )
        diagnostics = dissemination_voi(inputs)
        decision = policy.decide(k, inputs, policy_gen, diagnostics)
        u_k = decision.u[0]
        phi += scenario.price[0, k] * u_k
        for lk in links:
            lk.send(k, u_k, encoder.estimate)
        u_prev = u_k

        if collect:
            traces["err_sq"][:, k] = step_err
            for i in range(L):
                mm = encoder.estimate - decoders[i].estimate
                traces["mismatch_sq"][i, k] = mm @ mm
                gap = encoder.mismatch[i] - mm
                traces["mismatch_gap"][i, k] = np.sqrt(gap @ gap)
            traces["post_cov_trace"][:, k] = q_tr[k]
            traces["sent"][0, k] = u_k
            traces["voi_gain"][0, k] = decision.gain[0]

    return _finish(scenario, policy, seed, links, total_mse, phi, traces)


def _run_multiaccess(scenario, policy, seed, collect, schedules) -> RunMetrics:
    models = scenario.sources
    steps = scenario.horizon + 1
    trajs = [sample_trajectory(m, seed, j) for j, m in enumerate(models)]
    links = _build_links(scenario, seed)
    rate_rows = [lk.rates for lk in links]
    policy_gen = rng.stream(seed, rng.POLICY)
    traces = _empty_traces(scenario, collect)

    decoders = [decoder_init(m) for m in models]
    encoders = [
        encoder_init(m, trajs[j].y[0], n_links=1, schedule=schedules[j])
        for j, m in enumerate(models)
    ]
    total_mse = np.zeros(2)
    phi = 0.0
    q_tr = [np.trace(s.post_cov, axis1=1, axis2=2) for s in schedules]
    u_prev = (0, 0)

    for k in range(steps):
        if k > 0:
            for j, lk in enumerate(links):
                payload = lk.receive(k)
                if payload is not None:
                    estimate, origin = payload
                    if origin != j:
                        raise LogicFault(f"step {k}: link {j} delivered a payload tagged {origin}")
                    decoders[j] = decoder_step(decoders[j], models[j], k, estimate)
                else:
                    decoders[j] = decoder_step(decoders[j], models[j], k, None)
                reached = [u_prev[j] and lk.gamma[k - 1]]
                encoders[j] = encoder_step(encoders[j], models[j], k, trajs[j].y[k], reached, schedules[j])

        step_err = np.empty(2)
        for j in range(2):
            e = trajs[j].x[k] - decoders[j].estimate
            step_err[j] = e @ e
        total_mse += step_err
        phi += float(scenario.weight[:, k] @ step_err)

        weight_next = tuple(scenario.weight[:, k + 1]) if k + 1 < steps else (0.0, 0.0)
        inputs = PolicyInputs(
            mismatches=tuple(enc.mismatch[0] for enc in encoders),
            success=tuple(1.0 - row[k] for row in rate_rows),
            weight_next=weight_next,
            price=tuple(scenario.price[:, k]),
            state_matrix=tuple(m.A[k] for m in models),
        )
        diagnostics = prioritization_voi(inputs)
        decision = policy.decide(k, inputs, policy_gen, diagnostics)
        multiaccess_gate(decision.u, k, policy.label)
        phi += float(scenario.price[:, k] @ decision.u)
        for j, lk in enumerate(links):
            lk.send(k, decision.u[j], (encoders[j].estimate, j))
        u_prev = decision.u

        if collect:
            traces["err_sq"][:, k] = step_err
            for j in range(2):
                mm = encoders[j].estimate - decoders[j].estimate
                traces["mismatch_sq"][j, k] = mm @ mm
                gap = encoders[j].mismatch[0] - mm
                traces["mismatch_gap"][j, k] = np.sqrt(gap @ gap)
                traces["post_cov_trace"][j, k] = q_tr[j][k]
            traces["sent"][:, k] = decision.u
            traces["voi_gain"][:, k] = decision.gain
            traces["voi_priority"][:, k] = decision.priority

    return _finish(scenario, policy, seed, links, total_mse, phi, traces)


def compute_phi(metrics: RunMetrics, scenario: Scenario) -> float:
    """Recompute the run loss from the exported traces (cross-check path)."""
    if metrics.sent is None or metrics.err_sq is None:
        raise LogicFault("compute_phi needs a run executed with traces collected")
    price_part = float(np.sum(scenario.price * metrics.sent))
    error_part = float(np.sum(scenario.weight * metrics.err_sq))
    return price_part + error_part


@dataclass(eq=False)
class PolicyRuns:
    """Per-seed outcomes of one policy over a batch (seed-aligned arrays)."""

    label: str
    phi: np.ndarray           # (runs,)
    total_mse: np.ndarray     # (runs, links)
    transmissions: np.ndarray # (runs, links)
    losses: np.ndarray        # (runs, links)

    @staticmethod
    def _se(x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        if n < 2:
            return np.full(x.shape[1:] if x.ndim > 1 else (), np.nan)
        return np.std(x, axis=0, ddof=1) / np.sqrt(n)

    def summary(self) -> dict:
        return {
            "phi_mean": float(self.phi.mean()),
            "phi_se": float(self._se(self.phi)),
            "mse_mean": self.total_mse.mean(axis=0),
            "mse_se": self._se(self.total_mse),
            "tx_mean": self.transmissions.mean(axis=0),
            "tx_se": self._se(self.transmissions),
            "loss_mean": self.losses.mean(axis=0),
            "loss_se": self._se(self.losses),
        }


@dataclass(frozen=True)
class PairedStats:
    """Paired difference a - b over common seeds."""

    mean: float
    se: float
    t: float
    n: int


def paired_stats(a: np.ndarray, b: np.ndarray) -> PairedStats:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    n = d.shape[0]
    mean = float(d.mean())
    if n < 2:
        return PairedStats(mean=mean, se=float("nan"), t=float("nan"), n=n)
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        return PairedStats(mean=mean, se=0.0, t=0.0 if mean == 0.0 else float("inf") * np.sign(mean), n=n)
    se = sd / np.sqrt(n)
    return PairedStats(mean=mean, se=se, t=mean / se, n=n)


@dataclass(eq=False)
class BatchSummary:
    """Outcome of run_batch: seed-aligned per-policy arrays plus pairings."""

    scenario_name: str
    kind: str
    seeds: np.ndarray
    policies: tuple  # of PolicyRuns

    def policy(self, ref) -> PolicyRuns:
        """Look up results by position or by label (first match wins)."""
        if isinstance(ref, int):
            return self.policies[ref]
        for p in self.policies:
            if p.label == ref:
                return p
        raise KeyError(ref)

    def paired_phi(self, ref_a, ref_b) -> PairedStats:
        return paired_stats(self.policy(ref_a).phi, self.policy(ref_b).phi)

    def paired_mse(self, ref_a, ref_b, link: int) -> PairedStats:
        return paired_stats(
            self.policy(ref_a).total_mse[:, link], self.policy(ref_b).total_mse[:, link]
        )


def run_batch(
    scenario: Scenario,
    policies: Sequence,
    seeds: Sequence[int],
    threads: int = 1,
) -> BatchSummary:
    """Run every policy (Policy objects or textual specs) on every seed;
    totals only.

    Work is split across a thread pool when threads > 1, with results placed
    by (policy, seed) index, so the outcome is identical for any thread
    count.
    """
    if not policies:
        raise ConfigurationError("run_batch needs at least one policy")
    policies = [parse_policy(p) if isinstance(p, str) else p for p in policies]
    seeds = np.asarray(list(seeds), dtype=np.int64)
    if seeds.size == 0:
        raise ConfigurationError("run_batch needs at least one seed")
    schedules = source_schedules(scenario)
    L = scenario.n_links
    n = seeds.size
    # Results keyed by policy position: the same spec may appear twice
    # (self-comparison gives paired differences of exactly zero).
    out = [
        {
            "phi": np.empty(n),
            "mse": np.empty((n, L)),
            "tx": np.empty((n, L), dtype=np.int64),
            "pl": np.empty((n, L), dtype=np.int64),
        }
        for _ in policies
    ]

    def one(task):
        p_idx, s_idx = task
        m = run_once(scenario, policies[p_idx], int(seeds[s_idx]), collect_traces=False, schedules=schedules)
        slot = out[p_idx]
        slot["phi"][s_idx] = m.phi
        slot["mse"][s_idx] = m.total_mse
        slot["tx"][s_idx] = m.transmissions
        slot["pl"][s_idx] = m.losses

    tasks = [(p, s) for s in range(n) for p in range(len(policies))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, tasks))
    else:
        for task in tasks:
            one(task)

    runs = tuple(
        PolicyRuns(
            label=policies[i].label,
            phi=out[i]["phi"],
            total_mse=out[i]["mse"],
            transmissions=out[i]["tx"],
            losses=out[i]["pl"],
        )
        for i in range(len(policies))
    )
    return BatchSummary(scenario_name=scenario.name, kind=scenario.kind, seeds=seeds, policies=runs)
