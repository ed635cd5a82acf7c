"""One-step maps: Euler, strong order 1.0, weak order 2.0, compensated Euler.

All schemes freeze the mean-field law and every coefficient at the left
endpoint t_k of the step and consume the exact in-step jump data (jump
times, sizes, and the Brownian value at each jump time).  The higher-order
schemes are implemented in their jump-sum form, which needs no simulation
of iterated integrals beyond the (dW, dZ) pair.

``step_ensemble`` advances a whole batch of chains at once and is the
single implementation; the per-path functions ``euler_step`` etc. wrap it
for one StepContext and expose per-term diagnostics whose ordered sum
reassembles the step exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LawView, ModelSpec, op_L0
from .random_driver import StepContext

SCHEMES = ("euler", "strong1", "weak2", "compensated_euler")

# derivative manifest per scheme; validated before a run starts
REQUIREMENTS: dict[str, dict[str, tuple[str, ...]]] = {
    "euler": {},
    "compensated_euler": {},
    "strong1": {"sigma": ("d_x",), "c": ("d_x",)},
    "weak2": {
        "b": ("d_x", "d_xx", "dfds"),
        "sigma": ("d_x", "d_xx", "dfds"),
        "c": ("d_x", "d_xx", "dfds"),
    },
}


def validate_scheme(model: ModelSpec, scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme '{scheme}' (have: {SCHEMES})")
    model.validate_for(REQUIREMENTS[scheme])


@dataclass(frozen=True)
class StepResult:
    """Next state plus the ordered per-term decomposition of the update."""

    next_state: float
    terms: tuple[tuple[str, float], ...]

    @property
    def diagnostics(self) -> dict[str, float]:
        return dict(self.terms)


@dataclass(frozen=True)
class StepSlice:
    """Vectorized step data for a batch of chains (one coarse step).

    Jump records are sorted by (chain, tau); ``jump_bundle`` holds the chain
    index of each jump within the batch.
    """

    dw: np.ndarray
    dz: np.ndarray
    jump_bundle: np.ndarray
    jump_tau: np.ndarray
    jump_size: np.ndarray
    jump_wdiff: np.ndarray


_EMPTY = np.empty(0)
_EMPTY_I = np.empty(0, dtype=int)


def slice_from_context(ctx: StepContext) -> StepSlice:
    """A one-chain StepSlice carrying the context's jump triples."""
    if ctx.jumps:
        tau = np.array([j[0] for j in ctx.jumps])
        size = np.array([j[1] for j in ctx.jumps])
        wdiff = np.array([j[2] for j in ctx.jumps])
        bundle = np.zeros(len(ctx.jumps), dtype=int)
    else:
        tau, size, wdiff, bundle = _EMPTY, _EMPTY, _EMPTY, _EMPTY_I
    return StepSlice(
        dw=np.array([ctx.dw]),
        dz=np.array([ctx.dz]),
        jump_bundle=bundle,
        jump_tau=tau,
        jump_size=size,
        jump_wdiff=wdiff,
    )


def _scatter(values, bundle_idx, n):
    out = np.zeros(n)
    np.add.at(out, bundle_idx, values)
    return out


def _jump_pairs(bundle_idx):
    """Ordered (earlier, later) index pairs within each chain's jump run."""
    pe, pl = [], []
    n = len(bundle_idx)
    start = 0
    for i in range(1, n + 1):
        if i == n or bundle_idx[i] != bundle_idx[start]:
            if i - start >= 2:
                for later in range(start + 1, i):
                    for earlier in range(start, later):
                        pe.append(earlier)
                        pl.append(later)
            start = i
    return np.asarray(pe, dtype=int), np.asarray(pl, dtype=int)


def step_ensemble(scheme: str, model: ModelSpec, law: LawView, t: float, dt: float,
                  x: np.ndarray, sl: StepSlice):
    """Advance a batch of chains by one step.

    Returns (next_states, terms) where terms is the ordered list of
    (name, array) contributions; adding them to x in order reproduces
    next_states bit for bit.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme '{scheme}' (have: {SCHEMES})")
    x = np.asarray(x, dtype=float)
    n = x.size
    t_next = t + dt
    dw = sl.dw
    has_jumps = sl.jump_bundle.size > 0

    b_mf = np.zeros(n) + model.b.mf(t, law, x)
    s_mf = np.zeros(n) + model.sigma.mf(t, law, x)

    if has_jumps:
        bi = sl.jump_bundle
        xj = x[bi]
        yj = sl.jump_size
        cj = np.zeros(bi.size) + model.c.mf(t, law, xj, yj)

    terms: list[tuple[str, np.ndarray]] = []

    if scheme == "compensated_euler":
        comp = np.zeros(n) + model.compensator_mf(t, law, x)
        terms.append(("compensated_drift", (b_mf + comp) * dt))
        terms.append(("diffusion", s_mf * dw))
        plain = _scatter(cj, bi, n) if has_jumps else np.zeros(n)
        terms.append(("compensated_jump", plain - comp * dt))
    else:
        terms.append(("drift", b_mf * dt))
        terms.append(("diffusion", s_mf * dw))
        terms.append(("jump", _scatter(cj, bi, n) if has_jumps else np.zeros(n)))

    if scheme in ("strong1", "weak2"):
        l1_sigma = (np.zeros(n) + model.sigma.mf_dx(t, law, x)) * s_mf
        terms.append(("milstein", 0.5 * l1_sigma * (dw * dw - dt)))
        if has_jumps:
            l1_c = (model.c.mf_dx(t, law, xj, yj) + np.zeros(bi.size)) * s_mf[bi]
            terms.append(("jump_brownian", _scatter(l1_c * sl.jump_wdiff, bi, n)))
            s_shift = model.sigma.mf(t, law, xj + cj) - s_mf[bi]
            terms.append(
                ("diffusion_jump_shift",
                 _scatter(s_shift * (dw[bi] - sl.jump_wdiff), bi, n))
            )
            pe, pl = _jump_pairs(bi)
            if pe.size:
                displaced = xj[pl] + cj[pe]
                pair_vals = model.c.mf(t, law, displaced, yj[pl]) - cj[pl]
                terms.append(("jump_jump", _scatter(pair_vals, bi[pl], n)))
            else:
                terms.append(("jump_jump", np.zeros(n)))
        else:
            terms.append(("jump_brownian", np.zeros(n)))
            terms.append(("diffusion_jump_shift", np.zeros(n)))
            terms.append(("jump_jump", np.zeros(n)))

    if scheme == "weak2":
        dz = sl.dz
        l0_b = np.zeros(n) + op_L0(model.b, model, t, law, x)
        l0_s = np.zeros(n) + op_L0(model.sigma, model, t, law, x)
        l1_b = (np.zeros(n) + model.b.mf_dx(t, law, x)) * s_mf
        terms.append(("drift_quad", 0.5 * l0_b * dt * dt))
        terms.append(("drift_dz", l1_b * dz))
        terms.append(("diffusion_dwdt_dz", l0_s * (dw * dt - dz)))
        if has_jumps:
            l0_c = op_L0(model.c, model, t, law, xj, e=yj) + np.zeros(bi.size)
            terms.append(("jump_time", _scatter(l0_c * (sl.jump_tau - t), bi, n)))
            b_shift = model.b.mf(t, law, xj + cj) - b_mf[bi]
            terms.append(
                ("drift_jump_shift",
                 _scatter(b_shift * (t_next - sl.jump_tau), bi, n))
            )
        else:
            terms.append(("jump_time", np.zeros(n)))
            terms.append(("drift_jump_shift", np.zeros(n)))

    acc = x.copy()
    for _, term in terms:
        acc = acc + term
    return acc, terms


def _run_single(scheme: str, model: ModelSpec, law: LawView, x: float,
                ctx: StepContext) -> StepResult:
    nxt, terms = step_ensemble(
        scheme, model, law, ctx.t, ctx.dt, np.array([float(x)]),
        slice_from_context(ctx),
    )
    return StepResult(
        next_state=float(nxt[0]),
        terms=tuple((name, float(v[0])) for name, v in terms),
    )


def euler_step(model: ModelSpec, law: LawView, x: float, ctx: StepContext) -> StepResult:
    """x + b^X dt + sigma^X dW + sum of c^X over the step's jumps."""
    return _run_single("euler", model, law, x, ctx)


def strong1_step(model: ModelSpec, law: LawView, x: float, ctx: StepContext) -> StepResult:
    """Euler plus the Brownian-square and jump-coupling corrections."""
    return _run_single("strong1", model, law, x, ctx)


def weak2_step(model: ModelSpec, law: LawView, x: float, ctx: StepContext) -> StepResult:
    """Strong-1.0 plus the L0-driven time-quadratic and (dW, dZ) corrections."""
    return _run_single("weak2", model, law, x, ctx)


def compensated_euler_step(model: ModelSpec, law: LawView, x: float,
                           ctx: StepContext) -> StepResult:
    """Martingale-form Euler; algebraically identical to euler_step."""
    return _run_single("compensated_euler", model, law, x, ctx)


STEP_FUNCTIONS = {
    "euler": euler_step,
    "strong1": strong1_step,
    "weak2": weak2_step,
    "compensated_euler": compensated_euler_step,
}
