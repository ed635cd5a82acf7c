"""Driving noise: Brownian paths, Poisson jump streams, per-step increments.

One PathBundle holds a single realization of (W, jump stream) on a merged
grid (uniform dyadic fine grid plus the exact jump times).  Coarse solvers
and the fine-grid reference both read the same stored path, so coarse
Brownian increments are exact sums of fine ones and every scheme sees the
exact Brownian value at each jump time.

RNG streams are keyed by (seed, role, replication, particle) through
``rng_stream``; generation is therefore independent of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.random import Generator, PCG64, SeedSequence

# Stream roles for rng_stream keying.
ROLE_LAW = 0   # law-ensemble particle bundles (index = particle)
ROLE_ERR = 1   # error-replication target bundles (index = replication)
ROLE_AUX = 2   # scratch streams (tests, standalone sampling)

_GL_NODES, _GL_WEIGHTS = leggauss(64)


def rng_stream(seed: int, role: int, replication: int = 0, particle: int = 0) -> Generator:
    """Deterministic child generator keyed by (seed, role, replication, particle).

    The key goes into a SeedSequence spawn key, so distinct keys give
    statistically independent streams and the same key always reproduces the
    same stream regardless of how many other streams were created.
    """
    ss = SeedSequence(entropy=seed, spawn_key=(role, replication, particle))
    return Generator(PCG64(ss))


@dataclass(frozen=True)
class MarkDistribution:
    """Jump-size law F with declared moments and fixed quadrature nodes.

    ``quad_nodes``/``quad_weights`` integrate against F itself (weights sum
    to one), so E_F[g] = sum(w * g(nodes)).
    """

    label: str
    mean: float
    second_moment: float
    sampler: Callable[[Generator, int], np.ndarray]
    quad_nodes: np.ndarray | None = None
    quad_weights: np.ndarray | None = None

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    @staticmethod
    def uniform(a: float, b: float) -> "MarkDistribution":
        if not a < b:
            raise ValueError(f"uniform marks need a < b, got [{a}, {b}]")
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid + half * _GL_NODES
        weights = 0.5 * _GL_WEIGHTS  # Legendre weights sum to 2
        return MarkDistribution(
            label=f"uniform({a},{b})",
            mean=mid,
            second_moment=(a * a + a * b + b * b) / 3.0,
            sampler=lambda rng, n: rng.uniform(a, b, size=n),
            quad_nodes=nodes,
            quad_weights=weights,
        )

    def sample(self, rng: Generator, n: int) -> np.ndarray:
        return np.asarray(self.sampler(rng, n), dtype=float)

    def expect(self, g) -> float:
        """E_F[g(e)] by the declared fixed-node quadrature."""
        if self.quad_nodes is None:
            raise ValueError(f"mark law {self.label} declares no quadrature nodes")
        return float(np.dot(self.quad_weights, g(self.quad_nodes)))


@dataclass(frozen=True)
class JumpStream:
    """Jump times and sizes of one compound-Poisson realization on (0, T)."""

    intensity: float
    horizon: float
    times: np.ndarray
    sizes: np.ndarray

    @property
    def count(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class BrownianPath:
    """W sampled on the merged grid (fine dyadic points plus jump times)."""

    grid: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class PathBundle:
    """One shared realization of the driving noise.

    ``fine_index_of_jump[j]`` is the insertion position of jump j in the
    fine dyadic grid; it fixes the jump's location in the merged grid, so
    coarsening at any N dividing 2**fine_exponent is pure bookkeeping.
    """

    brownian: BrownianPath
    jumps: JumpStream
    fine_exponent: int
    fine_index_of_jump: np.ndarray

    @property
    def horizon(self) -> float:
        return self.jumps.horizon


@dataclass(frozen=True)
class StepContext:
    """Everything one scheme step consumes, for a single path.

    ``jumps`` lists (tau_i, Y_i, W_tau_i - W_tk) for the jumps falling in
    (t, t + dt], ordered by tau.
    """

    t: float
    dt: float
    dw: float
    dz: float
    jumps: tuple[tuple[float, float, float], ...] = ()

    @property
    def t_next(self) -> float:
        return self.t + self.dt


def sample_jump_stream(
    intensity: float, horizon: float, marks: MarkDistribution, rng: Generator
) -> JumpStream:
    """Compound-Poisson stream: exponential inter-arrival gaps, iid marks."""
    if intensity < 0:
        raise ValueError(f"intensity must be >= 0, got {intensity}")
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    times = []
    if intensity > 0:
        t = rng.exponential(1.0 / intensity)
        while t < horizon:
            times.append(t)
            t += rng.exponential(1.0 / intensity)
    times = np.asarray(times, dtype=float)
    sizes = marks.sample(rng, len(times)) if len(times) else np.empty(0)
    return JumpStream(intensity=intensity, horizon=horizon, times=times, sizes=sizes)


def sample_bundle(
    intensity: float,
    horizon: float,
    marks: MarkDistribution,
    fine_exponent: int,
    rng: Generator,
) -> PathBundle:
    """Draw jump stream first, then Brownian increments on the merged grid."""
    if fine_exponent < 1:
        raise ValueError(f"fine_exponent must be >= 1, got {fine_exponent}")
    jumps = sample_jump_stream(intensity, horizon, marks, rng)
    n_fine = 2**fine_exponent
    h = horizon / n_fine
    fine = np.arange(n_fine + 1) * h
    jpos = np.searchsorted(fine, jumps.times, side="right")
    merged = np.insert(fine, jpos, jumps.times)
    increments = rng.standard_normal(len(merged) - 1) * np.sqrt(np.diff(merged))
    values = np.concatenate(([0.0], np.cumsum(increments)))
    return PathBundle(
        brownian=BrownianPath(grid=merged, values=values),
        jumps=jumps,
        fine_exponent=fine_exponent,
        fine_index_of_jump=jpos,
    )


def _boundary_positions(bundle: PathBundle, steps: int) -> np.ndarray:
    """Merged-grid indices of the N+1 uniform coarse boundaries."""
    n_fine = 2**bundle.fine_exponent
    if steps < 1 or n_fine % steps != 0:
        raise ValueError(f"steps={steps} does not divide 2**{bundle.fine_exponent}")
    stride = n_fine // steps
    fine_idx = np.arange(steps + 1) * stride
    # fine point i lands at i + (number of jumps inserted at positions <= i)
    shift = np.searchsorted(bundle.fine_index_of_jump, fine_idx, side="right")
    return fine_idx + shift


@dataclass(frozen=True)
class CoarseSteps:
    """Per-bundle coarse-step data read off the stored path.

    jump_step assigns each jump to the coarse step whose interval holds it;
    jump_wdiff[j] = W_{tau_j} - W_{t_k} with t_k that step's left endpoint.
    """

    times: np.ndarray          # (N+1,) boundary times
    dw: np.ndarray             # (N,)
    dz: np.ndarray             # (N,) trapezoidal int (W_s - W_tk) ds
    jump_step: np.ndarray      # (J,) int
    jump_tau: np.ndarray       # (J,)
    jump_size: np.ndarray      # (J,)
    jump_wdiff: np.ndarray     # (J,)


def _coarsen_arrays(bundle: PathBundle, steps: int) -> CoarseSteps:
    g = bundle.brownian.grid
    w = bundle.brownian.values
    bpos = _boundary_positions(bundle, steps)
    times = g[bpos]
    dw = np.diff(w[bpos])
    # trapezoid of W over each merged sub-interval, segment-summed per step
    contrib = np.diff(g) * 0.5 * (w[:-1] + w[1:])
    seg = np.add.reduceat(contrib, bpos[:-1])
    dz = seg - w[bpos[:-1]] * np.diff(times)
    jmerged = bundle.fine_index_of_jump + np.arange(len(bundle.jumps.times))
    jump_step = np.searchsorted(bpos, jmerged, side="right") - 1
    jump_wdiff = w[jmerged] - w[bpos[jump_step]]
    return CoarseSteps(
        times=times,
        dw=dw,
        dz=dz,
        jump_step=jump_step,
        jump_tau=bundle.jumps.times,
        jump_size=bundle.jumps.sizes,
        jump_wdiff=jump_wdiff,
    )


def coarsen(bundle: PathBundle, steps: int) -> list[StepContext]:
    """Restrict the stored path to a uniform N-step partition.

    Increments are read off the path exactly (no resampling); dz comes from
    trapezoidal quadrature on the merged sub-grid of each step.
    """
    arr = _coarsen_arrays(bundle, steps)
    contexts = []
    for k in range(steps):
        sel = np.flatnonzero(arr.jump_step == k)
        triples = tuple(
            (float(arr.jump_tau[j]), float(arr.jump_size[j]), float(arr.jump_wdiff[j]))
            for j in sel
        )
        contexts.append(
            StepContext(
                t=float(arr.times[k]),
                dt=float(arr.times[k + 1] - arr.times[k]),
                dw=float(arr.dw[k]),
                dz=float(arr.dz[k]),
                jumps=triples,
            )
        )
    return contexts


@dataclass(frozen=True)
class CoarseBatch:
    """Coarse-step data for a whole ensemble of bundles.

    Jump records are sorted by (step, bundle, tau) and sliced per step via
    the CSR-style ``jump_ptr``; scatter-adds over ``jump_bundle`` therefore
    accumulate each bundle's jumps in time order, independent of how the
    ensemble is partitioned into work chunks.
    """

    times: np.ndarray        # (N+1,)
    dw: np.ndarray           # (M, N)
    dz: np.ndarray           # (M, N)
    jump_ptr: np.ndarray     # (N+1,) int
    jump_bundle: np.ndarray  # (J,) int
    jump_tau: np.ndarray
    jump_size: np.ndarray
    jump_wdiff: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def coarsen_batch(bundles: Sequence[PathBundle], steps: int) -> CoarseBatch:
    if not bundles:
        raise ValueError("coarsen_batch needs at least one bundle")
    per = [_coarsen_arrays(b, steps) for b in bundles]
    dw = np.stack([p.dw for p in per])
    dz = np.stack([p.dz for p in per])
    step = np.concatenate([p.jump_step for p in per])
    bundle_idx = np.concatenate(
        [np.full(len(p.jump_tau), i, dtype=int) for i, p in enumerate(per)]
    )
    tau = np.concatenate([p.jump_tau for p in per])
    size = np.concatenate([p.jump_size for p in per])
    wdiff = np.concatenate([p.jump_wdiff for p in per])
    order = np.lexsort((tau, bundle_idx, step))
    step = step[order]
    ptr = np.searchsorted(step, np.arange(steps + 1))
    return CoarseBatch(
        times=per[0].times,
        dw=dw,
        dz=dz,
        jump_ptr=ptr,
        jump_bundle=bundle_idx[order],
        jump_tau=tau[order],
        jump_size=size[order],
        jump_wdiff=wdiff[order],
    )


def sample_dz_standalone(dt, dw, rng: Generator):
    """Draw dz from its exact conditional law given dw.

    Conditionally on dw the time-integrated increment is Gaussian with mean
    dw*dt/2 and variance dt**3/12; used when no fine path is available.
    """
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("dt must be > 0")
    dw = np.asarray(dw, dtype=float)
    noise = rng.standard_normal(dw.shape) if dw.shape else rng.standard_normal()
    return dw * dt / 2.0 + noise * np.sqrt(dt**3 / 12.0)
