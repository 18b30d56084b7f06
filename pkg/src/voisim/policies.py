"""Transmission policies.

The value-of-information (VoI) policies weigh what a delivery would be worth
right now against the price of the channel use. For a sender whose mismatch
to receiver i is et[i] (see `estimation`), a delivery at step k removes the
term A[k] et[i] from receiver i's error one step later, an event that happens
with the link's success probability. That gives the gain

    chi = sum_i (1 - rate[i, k]) * weight[i, k+1] * |A[k] et[i]|^2     (broadcast)
    chi[j] = (1 - rate[j, k]) * weight[j, k+1] * |A[j, k] et[j]|^2     (multi-access)

and the rules

    broadcast:    u = 1  iff  chi - price >= 0
    multi-access: u[j] = 1  iff  priority[j] > 0  and  chi[j] - price[j] >= 0

where priority[j] = chi[j] - chi[other] (each sender yields to the one with
more to gain; ties favour silence). Optional correction terms (`lookahead_*`)
shift chi and priority; they default to zero, the one-step-lookahead choice,
and the engine does not solve for anything else.

Baselines ignore the state: periodic (round-robin across senders on a shared
medium), always, never, and Bernoulli-random. Their random draws come from
the dedicated policy stream so they never perturb source or channel noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError

#: Value the access function returns on a closed gate; compares below every real.
BLOCKED = float("-inf")


def access_function(gate: float, value: float) -> float:
    """`value` when gate > 0, else a sentinel below every real number."""
    return value if gate > 0.0 else BLOCKED


@dataclass(frozen=True, eq=False)
class PolicyInputs:
    """Everything a policy may look at when deciding at one step.

    mismatches    : per-link sender/receiver estimate gaps (each (n,))
    success       : per-link delivery probabilities 1 - rate at this step
    weight_next   : per-receiver error weight at the next step (0 at the horizon end)
    price         : per-sender channel-use price at this step (1 entry for broadcast)
    state_matrix  : per-source state transition at this step
    lookahead_*   : optional correction terms, zero under one-step lookahead
    """

    mismatches: tuple
    success: tuple
    weight_next: tuple
    price: tuple
    state_matrix: tuple
    lookahead_gain: tuple = (0.0, 0.0)
    lookahead_priority: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class Decision:
    """Outcome of one policy evaluation.

    u holds one entry per sender. gain/priority are the VoI diagnostics for
    the step (priority is None for broadcast, where there is nothing to rank).
    margin is the access-function output per sender: the gated surplus whose
    sign is the transmit test.
    """

    u: tuple
    gain: tuple
    priority: Optional[tuple]
    margin: tuple


def _delivery_value(mismatch: np.ndarray, A: np.ndarray, success: float, weight: float) -> float:
    moved = A @ mismatch
    return success * weight * float(moved @ moved)


def dissemination_voi(inputs: PolicyInputs) -> Decision:
    """Broadcast rule: transmit when the summed delivery value covers the price."""
    A = inputs.state_matrix[0]
    chi = sum(
        _delivery_value(e, A, s, w)
        for e, s, w in zip(inputs.mismatches, inputs.success, inputs.weight_next)
    ) + inputs.lookahead_gain[0]
    margin = access_function(1.0, chi - inputs.price[0])
    return Decision(u=(int(margin >= 0.0),), gain=(chi,), priority=None, margin=(margin,))


def prioritization_voi(inputs: PolicyInputs) -> Decision:
    """Multi-access rule: the sender with more to gain transmits, if worth the price.

    With zero lookahead corrections the two priorities are exact negatives,
    so at most one sender can pass the gate; an exact tie keeps both silent.
    """
    chi = tuple(
        _delivery_value(e, A, s, w) + d
        for e, A, s, w, d in zip(
            inputs.mismatches,
            inputs.state_matrix,
            inputs.success,
            inputs.weight_next,
            inputs.lookahead_gain,
        )
    )
    base = tuple(c - d for c, d in zip(chi, inputs.lookahead_gain))
    priority = (
        base[0] - base[1] + inputs.lookahead_priority[0],
        base[1] - base[0] + inputs.lookahead_priority[1],
    )
    margin = tuple(
        access_function(r, c - p) for r, c, p in zip(priority, chi, inputs.price)
    )
    u = tuple(int(m >= 0.0) for m in margin)
    return Decision(u=u, gain=chi, priority=priority, margin=margin)


def one_shot_broadcast(
    innovation: np.ndarray,
    gain: np.ndarray,
    A0: np.ndarray,
    success: Sequence[float],
    weight_next: Sequence[float],
    price: float,
) -> Decision:
    """First-step broadcast decision written directly in terms of the first
    innovation: the initial mismatch to every receiver is gain @ innovation."""
    moved = A0 @ (gain @ np.asarray(innovation, dtype=float).reshape(-1))
    chi = float(sum(s * w for s, w in zip(success, weight_next)) * (moved @ moved))
    margin = access_function(1.0, chi - price)
    return Decision(u=(int(margin >= 0.0),), gain=(chi,), priority=None, margin=(margin,))


def one_shot_multiaccess(
    innovations: Sequence[np.ndarray],
    gains: Sequence[np.ndarray],
    A0: Sequence[np.ndarray],
    success: Sequence[float],
    weight_next: Sequence[float],
    price: Sequence[float],
) -> Decision:
    """First-step multi-access decision in terms of the two first innovations."""
    chi = []
    for nu, K, A, s, w in zip(innovations, gains, A0, success, weight_next):
        moved = A @ (K @ np.asarray(nu, dtype=float).reshape(-1))
        chi.append(s * w * float(moved @ moved))
    priority = (chi[0] - chi[1], chi[1] - chi[0])
    margin = tuple(access_function(r, c - p) for r, c, p in zip(priority, chi, price))
    u = tuple(int(m >= 0.0) for m in margin)
    return Decision(u=u, gain=tuple(chi), priority=priority, margin=margin)


class Policy:
    """Per-run decision maker. `diagnostics` is the VoI evaluation of the same
    inputs, which the engine computes for every run's trace; baselines pass it
    through so exported gains stay meaningful under any policy."""

    label: str = ""

    def decide(
        self, k: int, inputs: PolicyInputs, gen: np.random.Generator, diagnostics: Decision
    ) -> Decision:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label!r})"


class VoiPolicy(Policy):
    label = "voi"

    def decide(self, k, inputs, gen, diagnostics):
        return diagnostics


def _with_u(diagnostics: Decision, u: tuple) -> Decision:
    return Decision(u=u, gain=diagnostics.gain, priority=diagnostics.priority, margin=diagnostics.margin)


class PeriodicPolicy(Policy):
    """Fire every `period` steps starting at `phase`; senders on a shared
    medium take turns on successive fire steps."""

    def __init__(self, period: int, phase: int = 0):
        if period < 1:
            raise ConfigurationError(f"periodic policy needs period >= 1, got {period}")
        if phase < 0:
            raise ConfigurationError(f"periodic policy needs phase >= 0, got {phase}")
        self.period = period
        self.phase = phase
        self.label = f"periodic:{period}" + (f":{phase}" if phase else "")

    def decide(self, k, inputs, gen, diagnostics):
        senders = len(inputs.price)
        fire = k >= self.phase and (k - self.phase) % self.period == 0
        if not fire:
            return _with_u(diagnostics, (0,) * senders)
        if senders == 1:
            return _with_u(diagnostics, (1,))
        turn = ((k - self.phase) // self.period) % senders
        return _with_u(diagnostics, tuple(int(t == turn) for t in range(senders)))


class AlwaysPolicy(Policy):
    label = "always"

    def decide(self, k, inputs, gen, diagnostics):
        senders = len(inputs.price)
        if senders == 1:
            return _with_u(diagnostics, (1,))
        return _with_u(diagnostics, tuple(int(t == k % senders) for t in range(senders)))


class NeverPolicy(Policy):
    label = "never"

    def decide(self, k, inputs, gen, diagnostics):
        return _with_u(diagnostics, (0,) * len(inputs.price))


class RandomPolicy(Policy):
    """Transmit with probability p each step; a shared medium gets a uniformly
    chosen sender. Draws a fixed number of variates per step so the decision
    stream stays aligned across scenarios."""

    def __init__(self, p: float):
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise ConfigurationError(f"random policy needs p in [0, 1], got {p}")
        self.p = p
        self.label = f"random:{p:g}"

    def decide(self, k, inputs, gen, diagnostics):
        senders = len(inputs.price)
        fire_draw, pick_draw = gen.random(2)
        if fire_draw >= self.p:
            return _with_u(diagnostics, (0,) * senders)
        if senders == 1:
            return _with_u(diagnostics, (1,))
        pick = int(pick_draw * senders)
        return _with_u(diagnostics, tuple(int(t == pick) for t in range(senders)))


def parse_policy(text: str) -> Policy:
    """Build a policy from its textual form.

    Grammar: voi | periodic:<period>[:<phase>] | random:<p> | always | never
    """
    parts = text.strip().split(":")
    name, args = parts[0].lower(), parts[1:]
    try:
        if name == "voi" and not args:
            return VoiPolicy()
        if name == "always" and not args:
            return AlwaysPolicy()
        if name == "never" and not args:
            return NeverPolicy()
        if name == "periodic" and 1 <= len(args) <= 2:
            return PeriodicPolicy(int(args[0]), int(args[1]) if len(args) == 2 else 0)
        if name == "random" and len(args) == 1:
            return RandomPolicy(float(args[0]))
    except ValueError as exc:
        raise ConfigurationError(f"bad policy argument in {text!r}: {exc}") from None
    raise ConfigurationError(
        f"unknown policy {text!r}; expected voi, periodic:<period>[:<phase>], random:<p>, always, never"
    )
