"""Interacting-particle propagation of the law, and the two-pass procedure.

Pass one advances M coupled particles from the law initial value x0; every
particle's coefficients are evaluated against the ensemble snapshot frozen
at the step's left endpoint, so updates are simultaneous and the result is
invariant under particle permutation.  Pass two advances target chains from
X0 (possibly different from x0) reading the mean-field terms from the
stored pass-one snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import LawView, ModelSpec
from .random_driver import CoarseBatch, PathBundle, coarsen_batch
from .schemes import StepSlice, step_ensemble, validate_scheme


class PropagationError(RuntimeError):
    """A step failed or produced non-finite law states; carries the step index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class ParticleEnsemble:
    """M particle states with the bundles that drive them."""

    states: np.ndarray
    bundles: Sequence[PathBundle]
    time: float = 0.0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape != (len(self.bundles),):
            raise ValueError(
                f"{self.states.shape[0]} states for {len(self.bundles)} bundles"
            )

    @property
    def size(self) -> int:
        return self.states.size

    @staticmethod
    def from_initial(x0: float, bundles: Sequence[PathBundle]) -> "ParticleEnsemble":
        return ParticleEnsemble(np.full(len(bundles), float(x0)), bundles)


@dataclass(frozen=True)
class LawTrajectory:
    """Law snapshots on the uniform partition, one per grid time."""

    times: np.ndarray
    snapshots: list[LawView]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def means(self) -> np.ndarray:
        return np.array([snap.mean for snap in self.snapshots])


def _slice_at(batch: CoarseBatch, k: int) -> StepSlice:
    lo, hi = batch.jump_ptr[k], batch.jump_ptr[k + 1]
    return StepSlice(
        dw=batch.dw[:, k],
        dz=batch.dz[:, k],
        jump_bundle=batch.jump_bundle[lo:hi],
        jump_tau=batch.jump_tau[lo:hi],
        jump_size=batch.jump_size[lo:hi],
        jump_wdiff=batch.jump_wdiff[lo:hi],
    )


def propagate_law(model: ModelSpec, scheme: str, ensemble: ParticleEnsemble,
                  steps: int) -> LawTrajectory:
    """Advance all particles through N steps against frozen snapshots.

    Raises PropagationError as soon as any law particle goes non-finite;
    a poisoned ensemble moment would silently corrupt everything downstream.
    """
    validate_scheme(model, scheme)
    batch = coarsen_batch(ensemble.bundles, steps)
    states = ensemble.states
    snapshots = [LawView(states)]
    for k in range(steps):
        t_k = float(batch.times[k])
        dt_k = float(batch.times[k + 1] - batch.times[k])
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                states, _ = step_ensemble(
                    scheme, model, snapshots[k], t_k, dt_k, states, _slice_at(batch, k)
                )
        except Exception as exc:  # attach the step index and re-raise
            raise PropagationError(k, str(exc)) from exc
        if not np.all(np.isfinite(states)):
            bad = int(np.count_nonzero(~np.isfinite(states)))
            raise PropagationError(k, f"{bad} law particle(s) diverged")
        snapshots.append(LawView(states))
    return LawTrajectory(times=batch.times.copy(), snapshots=snapshots)


def propagate_targets(model: ModelSpec, scheme: str, law: LawTrajectory, x0: float,
                      bundles: Sequence[PathBundle], steps: int,
                      keep_path: bool = False):
    """Advance independent target chains reading mean-field terms from ``law``.

    Non-finite chains are left to propagate their NaN/inf values and are
    reported by the caller's divergence accounting; they never raise here.
    Returns the (M,) final states, or the (M, N+1) paths if keep_path.
    """
    validate_scheme(model, scheme)
    if law.n_steps != steps:
        raise ValueError(
            f"law trajectory has {law.n_steps} steps, requested {steps}"
        )
    batch = coarsen_batch(bundles, steps)
    if not np.array_equal(law.times, batch.times):
        raise ValueError("law trajectory partition does not match the bundles")
    states = np.full(len(bundles), float(x0))
    path = None
    if keep_path:
        path = np.empty((len(bundles), steps + 1))
        path[:, 0] = states
    for k in range(steps):
        t_k = float(batch.times[k])
        dt_k = float(batch.times[k + 1] - batch.times[k])
        with np.errstate(over="ignore", invalid="ignore"):
            states, _ = step_ensemble(
                scheme, model, law.snapshots[k], t_k, dt_k, states, _slice_at(batch, k)
            )
        if keep_path:
            path[:, k + 1] = states
    return path if keep_path else states


def propagate_target(model: ModelSpec, scheme: str, law: LawTrajectory, x0: float,
                     bundle: PathBundle, steps: int) -> np.ndarray:
    """Single-chain second pass; returns the full (N+1,) trajectory."""
    path = propagate_targets(model, scheme, law, x0, [bundle], steps, keep_path=True)
    return path[0]
