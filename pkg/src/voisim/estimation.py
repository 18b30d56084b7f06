"""Kalman filtering at the sender and model-based prediction at the receivers.

The sender runs an exact Kalman filter in information form:

    M[k] = A[k-1] Q[k-1] A[k-1]' + W[k-1],        M[0] = M0
    Q[k] = (M[k]^-1 + C[k]' V[k]^-1 C[k])^-1
    K[k] = Q[k] C[k]' V[k]^-1
    m[k] = A[k-1] xc[k-1],                        m[0] = m0
    nu[k] = y[k] - C[k] m[k]
    xc[k] = m[k] + K[k] nu[k]

The covariance schedule {M, Q, K} does not depend on observations, decisions,
or channel outcomes, so it is computed once per model and shared by every run.
When a prior covariance is singular or too ill-conditioned to invert reliably,
the measurement update falls back to the Joseph-stabilized covariance form,
which needs only the innovation covariance to be invertible (guaranteed by
V > 0).

Each receiver knows the model and the feedback-free part of the protocol: it
propagates its estimate through the dynamics and replaces it with a delivered
sender estimate whenever one arrives. The sender mirrors every receiver with
the mismatch recursion

    et[i, k] = (1 - h[i, k-1]) A[k-1] et[i, k-1] + K[k] nu[k],
    et[i, 0] = K[0] nu[0]

where h[i, k-1] = 1 exactly when the payload sent at k-1 reached receiver i.
The recursion keeps et[i, k] equal to xc[k] - xh[i, k] identically, which is
what makes value-of-information scheduling computable at the sender without
shipping receiver state back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import LogicFault, NumericFault
from .models import GaussMarkovModel

# Condition-number threshold beyond which the information-form update is not
# trusted and the Joseph form is used instead.
ILL_CONDITIONED = 1e12


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _measurement_update(M: np.ndarray, C: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Posterior covariance from prior M; information form with Joseph fallback."""
    cond = np.linalg.cond(M)
    if np.isfinite(cond) and cond < ILL_CONDITIONED:
        Vinv_C = np.linalg.solve(V, C)
        info = np.linalg.inv(M) + C.T @ Vinv_C
        return _symmetrize(np.linalg.inv(info))
    S = C @ M @ C.T + V
    G = np.linalg.solve(S.T, C @ M.T).T  # M C' S^-1
    I = np.eye(M.shape[0])
    joseph = (I - G @ C) @ M @ (I - G @ C).T + G @ V @ G.T
    return _symmetrize(joseph)


@dataclass(frozen=True, eq=False)
class FilterSchedule:
    """Deterministic filter quantities for one model, indexed by step.

    prior_cov[k]  = M[k], post_cov[k] = Q[k], gain[k] = K[k],
    innov_cov[k]  = C[k] M[k] C[k]' + V[k]  (covariance of nu[k]).
    """

    prior_cov: np.ndarray
    post_cov: np.ndarray
    gain: np.ndarray
    innov_cov: np.ndarray


def filter_schedule(model: GaussMarkovModel) -> FilterSchedule:
    """Compute {M, Q, K, innovation covariance} for all steps of a model."""
    steps, n, m = model.horizon + 1, model.n, model.m
    M = np.empty((steps, n, n))
    Q = np.empty((steps, n, n))
    K = np.empty((steps, n, m))
    S = np.empty((steps, m, m))
    M[0] = model.M0
    for k in range(steps):
        C, V = model.C[k], model.V[k]
        Q[k] = _measurement_update(M[k], C, V)
        K[k] = Q[k] @ np.linalg.solve(V.T, C).T  # Q C' V^-1
        S[k] = _symmetrize(C @ M[k] @ C.T + V)
        if k + 1 < steps:
            M[k + 1] = _symmetrize(model.A[k] @ Q[k] @ model.A[k].T + model.W[k])
    return FilterSchedule(prior_cov=M, post_cov=Q, gain=K, innov_cov=S)


@dataclass(eq=False)
class EncoderState:
    """Sender-side filter state after absorbing y[step].

    mismatch has one row per receiver: row i is the sender's exact copy of
    its own estimate minus receiver i's estimate.
    """

    step: int
    estimate: np.ndarray        # xc[k]
    predicted_mean: np.ndarray  # m[k]
    innovation: np.ndarray      # nu[k]
    mismatch: np.ndarray        # (receivers, n)
    post_cov: np.ndarray        # Q[k] (view into the schedule)
    gain: np.ndarray            # K[k] (view into the schedule)


def encoder_init(
    model: GaussMarkovModel,
    y0: np.ndarray,
    n_links: int = 1,
    schedule: Optional[FilterSchedule] = None,
) -> EncoderState:
    """Absorb the first observation; every receiver starts at the prior mean."""
    if schedule is None:
        schedule = filter_schedule(model)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y0)):
        raise NumericFault("non-finite observation at step 0")
    K0 = schedule.gain[0]
    nu0 = y0 - model.C[0] @ model.m0
    xc0 = model.m0 + K0 @ nu0
    mismatch = np.tile(K0 @ nu0, (n_links, 1))
    return EncoderState(
        step=0,
        estimate=xc0,
        predicted_mean=model.m0.copy(),
        innovation=nu0,
        mismatch=mismatch,
        post_cov=schedule.post_cov[0],
        gain=K0,
    )


def encoder_step(
    state: EncoderState,
    model: GaussMarkovModel,
    k: int,
    y_k: np.ndarray,
    reached: Sequence[int],
    schedule: FilterSchedule,
) -> EncoderState:
    """Advance the sender filter to step k and update every receiver mirror.

    reached[i] = 1 exactly when the payload sent at k-1 was delivered to
    receiver i (the sender knows this through the feedback link).
    """
    if k != state.step + 1:
        raise LogicFault(f"encoder got step {k} after step {state.step}")
    y_k = np.asarray(y_k, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y_k)):
        raise NumericFault(f"non-finite observation at step {k}")
    A_prev = model.A[k - 1]
    K = schedule.gain[k]
    m = A_prev @ state.estimate
    nu = y_k - model.C[k] @ m
    xc = m + K @ nu
    h = np.asarray(reached, dtype=float).reshape(-1, 1)
    correction = K @ nu
    mismatch = (1.0 - h) * (state.mismatch @ A_prev.T) + correction
    return EncoderState(
        step=k,
        estimate=xc,
        predicted_mean=m,
        innovation=nu,
        mismatch=mismatch,
        post_cov=schedule.post_cov[k],
        gain=K,
    )


@dataclass(eq=False)
class DecoderState:
    """Receiver-side estimate after step `step`.

    age counts steps since the last delivery (0 right after one; the initial
    state also carries age 0 by convention, nothing having been sendable yet).
    """

    step: int
    estimate: np.ndarray
    age: int
    delivered_last: bool


def decoder_init(model: GaussMarkovModel) -> DecoderState:
    return DecoderState(step=0, estimate=model.m0.copy(), age=0, delivered_last=False)


def decoder_step(
    state: DecoderState,
    model: GaussMarkovModel,
    k: int,
    payload: Optional[np.ndarray],
) -> DecoderState:
    """Advance receiver to step k: propagate, or adopt a delivered estimate.

    payload is the sender estimate from step k-1 when that packet survived,
    else None. Either way the estimate moves through A[k-1]; a delivery
    replaces the propagated base with the sender's.
    """
    if k != state.step + 1:
        raise LogicFault(f"decoder got step {k} after step {state.step}")
    A_prev = model.A[k - 1]
    if payload is None:
        return DecoderState(
            step=k, estimate=A_prev @ state.estimate, age=state.age + 1, delivered_last=False
        )
    return DecoderState(step=k, estimate=A_prev @ np.asarray(payload, dtype=float), age=0, delivered_last=True)
