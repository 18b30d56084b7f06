"""Packet-erasure links with one-step delay and ideal feedback.

A link accepts at most one payload per step. A payload handed over at step k
with transmit decision u=1 is delivered at step k+1 with probability
1 - rate[k]; otherwise (erasure, or u=0) the receiver sees nothing. The
erasure rate per step is produced by a rate process that is either constant
or a finite-state Markov chain; the rate in force at step k is known to the
sender when it decides.

Erasure outcomes are pre-drawn per (link, step) from a dedicated stream, so
the outcome at step k is a function of (seed, link, k) alone: policies under
paired comparison face identical channel randomness.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, LogicFault, PolicyContractFault


@dataclass(frozen=True)
class ConstantRate:
    """Erasure rate fixed at `value` for every step."""

    value: float

    def validate(self) -> None:
        if not (0.0 <= self.value <= 1.0) or not np.isfinite(self.value):
            raise ConfigurationError(f"erasure rate must lie in [0, 1], got {self.value}")

    def sequence(self, steps: int, gen: np.random.Generator) -> np.ndarray:
        return np.full(steps, float(self.value))


@dataclass(frozen=True, eq=False)
class MarkovRate:
    """Erasure rate following a finite-state Markov chain.

    values     : per-state erasure rates, each in [0, 1]
    transition : row-stochastic matrix, transition[i, j] = P(next=j | now=i)
    initial    : state index in force at step 0
    """

    values: np.ndarray
    transition: np.ndarray
    initial: int

    @classmethod
    def create(cls, values, transition, initial: int = 0) -> "MarkovRate":
        proc = cls(
            values=np.asarray(values, dtype=float).reshape(-1),
            transition=np.asarray(transition, dtype=float),
            initial=int(initial),
        )
        proc.validate()
        return proc

    def validate(self) -> None:
        s = self.values.size
        if s == 0:
            raise ConfigurationError("rate chain needs at least one state")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0) or not np.all(np.isfinite(self.values)):
            raise ConfigurationError("rate chain values must lie in [0, 1]")
        if self.transition.shape != (s, s):
            raise ConfigurationError(
                f"rate chain transition matrix has shape {self.transition.shape}, expected {(s, s)}"
            )
        if np.any(self.transition < 0.0) or not np.all(np.isfinite(self.transition)):
            raise ConfigurationError("rate chain transition entries must be >= 0")
        if not np.allclose(self.transition.sum(axis=1), 1.0, rtol=0.0, atol=1e-12):
            raise ConfigurationError("rate chain transition rows must sum to 1")
        if not (0 <= self.initial < s):
            raise ConfigurationError(f"rate chain initial state {self.initial} out of range")

    def _thresholds(self) -> list:
        # Row i maps a uniform draw to the next state by bisection against the
        # cumulative transition probabilities (last entry dropped: any draw
        # beyond the penultimate threshold lands in the final state).
        return [np.cumsum(row)[:-1].tolist() for row in self.transition]

    def step(self, state: int, gen: np.random.Generator) -> int:
        """Draw the next chain state given the current one (one uniform)."""
        return bisect_right(self._thresholds()[state], gen.random())

    def sequence(self, steps: int, gen: np.random.Generator) -> np.ndarray:
        """Realized rate per step; draw-for-draw equivalent to repeated step()."""
        thresholds = self._thresholds()
        draws = gen.random(max(steps - 1, 0))
        out = np.empty(steps)
        state = self.initial
        for k in range(steps):
            out[k] = self.values[state]
            if k + 1 < steps:
                state = bisect_right(thresholds[state], draws[k])
        return out

    def equals(self, other: "MarkovRate") -> bool:
        return (
            np.array_equal(self.values, other.values)
            and np.array_equal(self.transition, other.transition)
            and self.initial == other.initial
        )


RateProcess = Union[ConstantRate, MarkovRate]


class ChannelLink:
    """One erasure link of a seeded run.

    Construct with the realized per-step rate sequence and the pre-drawn
    erasure uniforms for this (run, link); both have length horizon + 1.
    `gamma[k]` is the delivery indicator the link applies to a payload handed
    over at step k (it exists for every k but decides an outcome only when a
    send was attempted there).
    """

    def __init__(self, rates: np.ndarray, erasure_uniforms: np.ndarray):
        rates = np.asarray(rates, dtype=float)
        u = np.asarray(erasure_uniforms, dtype=float)
        if rates.shape != u.shape or rates.ndim != 1:
            raise ConfigurationError("rates and erasure draws must be 1-d arrays of equal length")
        self.rates = rates
        # P(gamma = 0) = rate: a uniform below the rate erases the packet.
        self.gamma = (u >= rates).astype(np.int8)
        self.sent = np.zeros(rates.shape[0], dtype=np.int8)
        self._slot: Optional[tuple[int, Any]] = None
        self._last_send_step = -1

    @property
    def steps(self) -> int:
        return self.rates.shape[0]

    def send(self, k: int, u: int, payload: Any = None) -> None:
        """Hand a payload to the link at step k (u = 0 records a silent step)."""
        if k <= self._last_send_step:
            raise LogicFault(f"link already carried a send for step {k}")
        if not 0 <= k < self.steps:
            raise LogicFault(f"send step {k} outside horizon")
        self._last_send_step = k
        if u:
            self.sent[k] = 1
            if self.gamma[k]:
                self._slot = (k, payload)

    def receive(self, k: int) -> Any:
        """Payload sent at k-1 if it survived, else None. Consumes the slot."""
        if self._slot is None:
            return None
        sent_at, payload = self._slot
        if k == sent_at + 1:
            self._slot = None
            return payload
        if k > sent_at + 1:
            # Missed its delivery step; the slot never becomes valid again.
            self._slot = None
        return None

    def delivered(self, k: int) -> bool:
        """Whether the payload handed over at step k reached the receiver."""
        return bool(self.sent[k] and self.gamma[k])

    @property
    def transmissions(self) -> int:
        return int(self.sent.sum())

    @property
    def losses(self) -> int:
        return int(np.sum(self.sent * (1 - self.gamma)))


def multiaccess_gate(decisions: Sequence[int], step: int, policy: str = "") -> None:
    """Enforce the shared-medium constraint: at most one sender per step."""
    if sum(int(d) for d in decisions) > 1:
        who = f" (policy {policy})" if policy else ""
        raise PolicyContractFault(
            f"step {step}{who}: {sum(decisions)} simultaneous senders on a multi-access channel"
        )
