"""Built-in correctness checks (the `voisim validate` subcommand).

A fast subset of the full test suite, runnable from an installed package with
no test dependencies: filter equivalence against a covariance-form recursion
written here for that purpose, the sender/receiver mismatch identity on real
runs, the first-step specializations of both VoI rules against the general
policy code, and channel statistics. All checks are seeded, hence
deterministic; `scale` shrinks or grows every sample count proportionally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng
from .channels import ChannelLink, MarkovRate
from .engine import run_once, source_schedules
from .errors import ConfigurationError
from .estimation import encoder_init, filter_schedule
from .models import GaussMarkovModel
from .policies import (
    PolicyInputs,
    dissemination_voi,
    one_shot_broadcast,
    one_shot_multiaccess,
    prioritization_voi,
)

FILTER_TOL = 1e-9        # relative Frobenius error, information vs covariance form
MISMATCH_TOL = 1e-10     # absolute norm of the mirror identity gap
RATE_SIGMAS = 3.0        # empirical erasure frequency tolerance, in standard errors
OCCUPANCY_TOL = 0.02     # absolute occupancy error for the two-state chain


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_system(gen: np.random.Generator, horizon: int) -> GaussMarkovModel:
    n = int(gen.integers(1, 6))
    m = int(gen.integers(1, 4))
    A = gen.normal(size=(n, n)) / np.sqrt(n)
    if gen.random() < 0.3:
        A *= 1.4  # some unstable systems
    C = gen.normal(size=(m, n))
    Rw = gen.normal(size=(n, n))
    W = Rw @ Rw.T / n + 0.05 * np.eye(n)
    Rv = gen.normal(size=(m, m))
    V = Rv @ Rv.T / m + 0.05 * np.eye(m)
    if gen.random() < 0.2:
        M0 = np.zeros((n, n))  # exactly known initial state: singular prior
    else:
        R0 = gen.normal(size=(n, n))
        M0 = R0 @ R0.T / n
    m0 = gen.normal(size=n)
    return GaussMarkovModel.constant(A, C, W, V, m0, M0, horizon)


def _covariance_form_posteriors(model: GaussMarkovModel) -> np.ndarray:
    """Plain predict/update covariance recursion, kept deliberately different
    in form from the library's information-form path."""
    steps = model.horizon + 1
    Q = np.empty((steps, model.n, model.n))
    M = model.M0.copy()
    for k in range(steps):
        C, V = model.C[k], model.V[k]
        S = C @ M @ C.T + V
        G = np.linalg.solve(S, C @ M).T
        Qk = M - G @ S @ G.T
        Q[k] = 0.5 * (Qk + Qk.T)
        if k + 1 < steps:
            M = model.A[k] @ Q[k] @ model.A[k].T + model.W[k]
            M = 0.5 * (M + M.T)
    return Q


def check_filter_equivalence(scale: float = 1.0, seed: int = 2024) -> CheckResult:
    gen = np.random.default_rng(seed)
    systems = max(3, round(20 * scale))
    worst = 0.0
    for _ in range(systems):
        model = _random_system(gen, horizon=40)
        lib = filter_schedule(model).post_cov
        ref = _covariance_form_posteriors(model)
        denom = np.maximum(np.linalg.norm(ref, axis=(1, 2)), 1e-300)
        rel = np.linalg.norm(lib - ref, axis=(1, 2)) / denom
        worst = max(worst, float(rel.max()))
    return CheckResult(
        name="filter-equivalence",
        passed=worst < FILTER_TOL,
        detail=f"{systems} systems, worst relative error {worst:.3e} (tol {FILTER_TOL:.0e})",
    )


def check_mismatch_identity(scale: float = 1.0, seed: int = 11) -> CheckResult:
    from .scenario_io import load_scenario

    scenario = load_scenario("spacecraft_broadcast")
    schedules = source_schedules(scenario)
    runs = max(2, round(6 * scale))
    worst = 0.0
    for s in range(runs):
        metrics = run_once(scenario, "voi", seed + s, schedules=schedules)
        worst = max(worst, float(metrics.mismatch_gap.max()))
    return CheckResult(
        name="mismatch-identity",
        passed=worst < MISMATCH_TOL,
        detail=f"{runs} runs, worst gap {worst:.3e} (tol {MISMATCH_TOL:.0e})",
    )


def _one_shot_draw(gen: np.random.Generator):
    """Random single-step system plus an observation and weights."""
    model = _random_system(gen, horizon=1)
    sched = filter_schedule(model)
    y0 = model.C[0] @ (model.m0 + gen.normal(size=model.n)) + gen.normal(size=model.m)
    nu0 = y0 - model.C[0] @ model.m0
    return model, sched, y0, nu0


def check_one_shot_broadcast(
    scale: float = 1.0,
    seed: int = 5,
    gain_transform: Optional[Callable[[float], float]] = None,
) -> CheckResult:
    """General policy code at the first step vs the closed first-step form.

    gain_transform exists for mutation testing: it corrupts the general
    path's computed gain before the comparison, and must make the check fail.
    """
    gen = np.random.default_rng(seed)
    draws = max(100, round(2000 * scale))
    mismatches = 0
    for _ in range(draws):
        model, sched, y0, nu0 = _one_shot_draw(gen)
        success = tuple(gen.random(2))
        weight_next = tuple(gen.random(2) * 2.0)
        price = float(gen.random() * 0.5 * model.n)
        enc = encoder_init(model, y0, n_links=2, schedule=sched)
        inputs = PolicyInputs(
            mismatches=tuple(enc.mismatch),
            success=success,
            weight_next=weight_next,
            price=(price,),
            state_matrix=(model.A[0],),
        )
        general = dissemination_voi(inputs)
        if gain_transform is not None:
            u_general = int(gain_transform(general.gain[0]) - price >= 0.0)
        else:
            u_general = general.u[0]
        closed = one_shot_broadcast(nu0, sched.gain[0], model.A[0], success, weight_next, price)
        if u_general != closed.u[0]:
            mismatches += 1
    return CheckResult(
        name="one-shot-broadcast",
        passed=mismatches == 0,
        detail=f"{draws} draws, {mismatches} decision mismatches",
    )


def check_one_shot_multiaccess(
    scale: float = 1.0,
    seed: int = 6,
    gain_transform: Optional[Callable[[float], float]] = None,
) -> CheckResult:
    gen = np.random.default_rng(seed)
    draws = max(100, round(2000 * scale))
    mismatches = 0
    for _ in range(draws):
        pair = [_one_shot_draw(gen) for _ in range(2)]
        success = tuple(gen.random(2))
        weight_next = tuple(gen.random(2) * 2.0)
        price = tuple(gen.random(2) * 0.5)
        encs = [
            encoder_init(model, y0, n_links=1, schedule=sched)
            for model, sched, y0, _ in pair
        ]
        inputs = PolicyInputs(
            mismatches=tuple(e.mismatch[0] for e in encs),
            success=success,
            weight_next=weight_next,
            price=price,
            state_matrix=tuple(model.A[0] for model, _, _, _ in pair),
        )
        general = prioritization_voi(inputs)
        if gain_transform is not None:
            gains = tuple(gain_transform(g) for g in general.gain)
            prio = (gains[0] - gains[1], gains[1] - gains[0])
            u_general = tuple(
                int(r > 0.0 and c - p >= 0.0) for r, c, p in zip(prio, gains, price)
            )
        else:
            u_general = general.u
        closed = one_shot_multiaccess(
            [nu0 for _, _, _, nu0 in pair],
            [sched.gain[0] for _, sched, _, _ in pair],
            [model.A[0] for model, _, _, _ in pair],
            success,
            weight_next,
            price,
        )
        if u_general != closed.u:
            mismatches += 1
    return CheckResult(
        name="one-shot-multiaccess",
        passed=mismatches == 0,
        detail=f"{draws} draws, {mismatches} decision mismatches",
    )


def check_channel_rates(scale: float = 1.0, seed: int = 7) -> CheckResult:
    sends = max(2000, round(20000 * scale))
    worst_sigma = 0.0
    for idx, lam in enumerate((0.1, 0.3, 0.9)):
        uniforms = rng.stream(seed, rng.ERASURE, idx).random(sends)
        link = ChannelLink(np.full(sends, lam), uniforms)
        for k in range(sends):
            link.send(k, 1)
        freq = link.losses / sends
        se = np.sqrt(lam * (1.0 - lam) / sends)
        worst_sigma = max(worst_sigma, abs(freq - lam) / se)
    passed = worst_sigma <= RATE_SIGMAS
    detail = f"{sends} sends per rate, worst deviation {worst_sigma:.2f} SE (tol {RATE_SIGMAS:g})"

    # Two-state bursty chain: empirical occupancy vs the stationary
    # distribution of the transition matrix.
    chain = MarkovRate.create([0.05, 0.6], [[0.95, 0.05], [0.05, 0.95]], 0)
    steps = max(20000, round(200000 * scale))
    seq = chain.sequence(steps, np.random.default_rng(seed + 1))
    occupancy = np.array([np.mean(seq == v) for v in chain.values])
    evals, evecs = np.linalg.eig(chain.transition.T)
    stat = np.real(evecs[:, np.argmin(np.abs(evals - 1.0))])
    stat = stat / stat.sum()
    occ_err = float(np.abs(occupancy - stat).max())
    passed = passed and occ_err <= OCCUPANCY_TOL
    detail += f"; chain occupancy error {occ_err:.4f} (tol {OCCUPANCY_TOL:g})"
    return CheckResult(name="channel-rates", passed=passed, detail=detail)


def run_validation(scale: float = 1.0, seed_offset: int = 0) -> list:
    """All checks, in a stable order."""
    if scale <= 0:
        raise ConfigurationError(f"validation scale must be positive, got {scale}")
    return [
        check_filter_equivalence(scale, seed=2024 + seed_offset),
        check_mismatch_identity(scale, seed=11 + seed_offset),
        check_one_shot_broadcast(scale, seed=5 + seed_offset),
        check_one_shot_multiaccess(scale, seed=6 + seed_offset),
        check_channel_rates(scale, seed=7 + seed_offset),
    ]
