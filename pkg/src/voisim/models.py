"""Source models and scenario definitions.

A source is a discrete-time Gauss-Markov process

    x[k+1] = A[k] x[k] + w[k],      w[k] ~ N(0, W[k]),  W[k] > 0
    y[k]   = C[k] x[k] + v[k],      v[k] ~ N(0, V[k]),  V[k] > 0
    x[0]   ~ N(m0, M0),             M0 >= 0

with all schedules stored densely over steps 0..horizon. Time-invariant
systems are built with `GaussMarkovModel.constant`, which stores read-only
broadcast views so the dense layout costs nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigurationError

# Relative tolerance for symmetry checks on covariance inputs.
SYMMETRY_RTOL = 1e-12


def _as_schedule(value: np.ndarray, steps: int, shape: tuple[int, ...], key: str) -> np.ndarray:
    """Return a (steps, *shape) float array; a single matrix is broadcast."""
    arr = np.asarray(value, dtype=float)
    if arr.shape == shape:
        return np.broadcast_to(arr, (steps,) + shape)
    if arr.ndim == len(shape) + 1:
        if arr.shape[0] < steps:
            raise ConfigurationError(
                f"{key}: schedule has {arr.shape[0]} entries, horizon needs {steps}"
            )
        if arr.shape[1:] != shape:
            raise ConfigurationError(f"{key}: entries have shape {arr.shape[1:]}, expected {shape}")
        out = arr[:steps].copy()
        out.setflags(write=False)
        return out
    raise ConfigurationError(f"{key}: expected shape {shape} or ({steps}, {', '.join(map(str, shape))})")


def _check_symmetric(sched: np.ndarray, key: str) -> None:
    if not np.allclose(sched, np.swapaxes(sched, -1, -2), rtol=SYMMETRY_RTOL, atol=0.0):
        raise ConfigurationError(f"{key}: matrices must be symmetric")


def _check_pd(sched: np.ndarray, key: str) -> None:
    """Positive-definiteness via Cholesky; names the first offending step."""
    try:
        np.linalg.cholesky(sched)
        return
    except np.linalg.LinAlgError:
        pass
    for k in range(sched.shape[0]):
        try:
            np.linalg.cholesky(sched[k])
        except np.linalg.LinAlgError:
            raise ConfigurationError(f"{key}: matrix at step {k} is not positive definite") from None


@dataclass(frozen=True, eq=False)
class GaussMarkovModel:
    """One partially observed source; all schedules have length horizon + 1.

    A : (horizon+1, n, n) state transition
    C : (horizon+1, m, n) observation map
    W : (horizon+1, n, n) process noise covariance, positive definite
    V : (horizon+1, m, m) measurement noise covariance, positive definite
    m0: (n,) prior mean of x[0]
    M0: (n, n) prior covariance of x[0], positive semidefinite
    """

    A: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    m0: np.ndarray
    M0: np.ndarray
    horizon: int

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[1]

    @classmethod
    def constant(cls, A, C, W, V, m0, M0, horizon: int) -> "GaussMarkovModel":
        """Build a model from single matrices (or full schedules) and validate it."""
        if horizon < 0:
            raise ConfigurationError(f"horizon must be >= 0, got {horizon}")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        C = np.atleast_2d(np.asarray(C, dtype=float))
        steps = horizon + 1
        n = A.shape[-1]
        m = C.shape[-2] if C.ndim >= 2 else 1
        model = cls(
            A=_as_schedule(A, steps, (n, n), "A"),
            C=_as_schedule(C, steps, (m, n), "C"),
            W=_as_schedule(W, steps, (n, n), "W"),
            V=_as_schedule(V, steps, (m, m), "V"),
            m0=np.asarray(m0, dtype=float).reshape(-1),
            M0=np.asarray(M0, dtype=float),
            horizon=horizon,
        )
        model.validate()
        return model

    def validate(self) -> None:
        n, m, steps = self.n, self.m, self.horizon + 1
        for key, sched, shape in (
            ("A", self.A, (n, n)),
            ("C", self.C, (m, n)),
            ("W", self.W, (n, n)),
            ("V", self.V, (m, m)),
        ):
            if sched.shape != (steps,) + shape:
                raise ConfigurationError(f"{key}: shape {sched.shape}, expected {(steps,) + shape}")
            if not np.all(np.isfinite(sched)):
                raise ConfigurationError(f"{key}: contains non-finite entries")
        if self.m0.shape != (n,):
            raise ConfigurationError(f"m0: shape {self.m0.shape}, expected ({n},)")
        if self.M0.shape != (n, n):
            raise ConfigurationError(f"M0: shape {self.M0.shape}, expected ({n}, {n})")
        if not (np.all(np.isfinite(self.m0)) and np.all(np.isfinite(self.M0))):
            raise ConfigurationError("m0/M0: contains non-finite entries")
        _check_symmetric(self.W, "W")
        _check_symmetric(self.V, "V")
        _check_symmetric(self.M0[None], "M0")
        _check_pd(self.W, "W")
        _check_pd(self.V, "V")
        # M0 only needs to be PSD; the filter handles the singular case.
        eigs = np.linalg.eigvalsh(self.M0)
        if eigs.size and eigs[0] < -1e-10 * max(1.0, abs(eigs[-1])):
            raise ConfigurationError("M0: not positive semidefinite")

    def equals(self, other: "GaussMarkovModel") -> bool:
        return (
            self.horizon == other.horizon
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("A", "C", "W", "V", "m0", "M0")
            )
        )


@dataclass(frozen=True, eq=False)
class SourceTrajectory:
    """One sampled realization: states x (steps, n) and observations y (steps, m)."""

    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete simulation setting.

    kind "broadcast": one source, one sender, each link feeds one monitor.
    kind "multiaccess": one source and sender per link, all links converge on
    one monitor that keeps a separate estimate per source.

    price  : (senders, horizon+1) channel-use price per step
    weight : (links, horizon+1) error weight per monitor estimate and step
    """

    kind: str
    sources: tuple
    links: tuple
    price: np.ndarray
    weight: np.ndarray
    name: str = ""
    default_policy: str = "voi"

    @property
    def horizon(self) -> int:
        return self.sources[0].horizon

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_senders(self) -> int:
        return 1 if self.kind == "broadcast" else len(self.sources)

    def validate(self) -> None:
        if self.kind not in ("broadcast", "multiaccess"):
            raise ConfigurationError(f"kind: expected broadcast or multiaccess, got {self.kind!r}")
        if self.kind == "broadcast":
            if len(self.sources) != 1:
                raise ConfigurationError("broadcast scenario needs exactly one source")
            if len(self.links) < 1:
                raise ConfigurationError("broadcast scenario needs at least one link")
        else:
            if len(self.sources) != 2 or len(self.links) != 2:
                raise ConfigurationError("multiaccess scenario needs exactly two sources and two links")
        for src in self.sources:
            src.validate()
            if src.horizon != self.horizon:
                raise ConfigurationError("all sources must share one horizon")
        for proc in self.links:
            proc.validate()
        steps = self.horizon + 1
        if self.price.shape != (self.n_senders, steps):
            raise ConfigurationError(
                f"price: shape {self.price.shape}, expected {(self.n_senders, steps)}"
            )
        if self.weight.shape != (self.n_links, steps):
            raise ConfigurationError(
                f"weight: shape {self.weight.shape}, expected {(self.n_links, steps)}"
            )
        for key, sched in (("price", self.price), ("weight", self.weight)):
            if not np.all(np.isfinite(sched)) or np.any(sched < 0.0):
                raise ConfigurationError(f"{key}: entries must be finite and >= 0")

    def equals(self, other: "Scenario") -> bool:
        if (
            self.kind != other.kind
            or self.default_policy != other.default_policy
            or len(self.sources) != len(other.sources)
            or len(self.links) != len(other.links)
            or not np.array_equal(self.price, other.price)
            or not np.array_equal(self.weight, other.weight)
        ):
            return False
        if not all(a.equals(b) for a, b in zip(self.sources, other.sources)):
            return False
        for a, b in zip(self.links, other.links):
            if type(a) is not type(b):
                return False
            if not (a.equals(b) if hasattr(a, "equals") else a == b):
                return False
        return True


def _psd_factor(M: np.ndarray) -> np.ndarray:
    """Factor F with F F' = M for symmetric PSD M (eigendecomposition, not
    Cholesky, so singular priors are allowed)."""
    w, U = np.linalg.eigh(M)
    return U * np.sqrt(np.clip(w, 0.0, None))


def _factor_schedule(sched: np.ndarray) -> np.ndarray:
    # Broadcast views of a constant matrix have stride 0 on the step axis;
    # factor once in that case instead of once per step.
    if sched.strides[0] == 0:
        return np.broadcast_to(np.linalg.cholesky(sched[0]), sched.shape)
    return np.linalg.cholesky(sched)


def sample_trajectory(model: GaussMarkovModel, seed: int, source_index: int = 0) -> SourceTrajectory:
    """Sample one (x, y) realization.

    Pure function of (model, seed, source_index): the initial state, process
    noise, and measurement noise come from three named streams, so the same
    seed reproduces the same trajectory bit for bit regardless of what else a
    simulation draws.
    """
    steps = model.horizon + 1
    n, m = model.n, model.m

    z0 = rng.stream(seed, rng.X0, source_index).standard_normal(n)
    zw = rng.stream(seed, rng.PROCESS_NOISE, source_index).standard_normal((steps, n))
    zv = rng.stream(seed, rng.MEASUREMENT_NOISE, source_index).standard_normal((steps, m))

    w = np.einsum("kij,kj->ki", _factor_schedule(model.W), zw)
    v = np.einsum("kij,kj->ki", _factor_schedule(model.V), zv)

    x = np.empty((steps, n))
    x[0] = model.m0 + _psd_factor(model.M0) @ z0
    A = model.A
    for k in range(steps - 1):
        x[k + 1] = A[k] @ x[k] + w[k]
    y = np.einsum("kij,kj->ki", model.C, x) + v
    return SourceTrajectory(x=x, y=y)
