"""Problem definitions and the mean-field operators.

A model is a triple of coefficients (drift b, diffusion sigma, jump c) for
the scalar dynamics

    dX = E[b(t, X', x)]|_{x=X} dt + E[sigma(t, X', x)]|_{x=X} dW
         + int E[c(t, X', x, e)]|_{x=X_-} mu(de, dt),

where the expectation runs over an independent copy X' of the solution and
is approximated by an ensemble average over particle states (a LawView).

Coefficients come in two flavours:

* ``LawPolyCoefficient`` declares f(t, x', x) as a polynomial in the law
  argument x' of degree <= 2 with (t, x)-dependent components.  Mean-field
  evaluations then reduce to the cached ensemble moments (O(1) per point),
  which is what makes large-ensemble runs cheap.  Both built-in problems
  are of this form.
* ``GenericCoefficient`` wraps arbitrary callables plus whatever partial
  derivatives the user supplies; mean-field evaluations average over the
  full particle array.

The operators L0, L1, L_e^-1 and the compensated variants act on either
flavour through a common method protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .random_driver import MarkDistribution


class ModelCapabilityError(Exception):
    """A scheme or operator needs derivatives the model does not provide."""


def _fsum_mean(values) -> float:
    """Exactly rounded mean; invariant under permutation and chunking."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("mean of empty array")
    return math.fsum(arr.tolist()) / arr.size


def _fsum_mean_axis0(arr: np.ndarray) -> np.ndarray:
    """Column-wise exactly rounded mean of a 2-d array."""
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    out = np.array([math.fsum(col.tolist()) for col in arr.T]) / arr.shape[0]
    return out


class LawView:
    """Immutable snapshot of the particle states with cached moments.

    The state array is marked read-only; the per-(model, time) operator
    aggregates computed against this snapshot are memoized on the view.
    """

    __slots__ = ("states", "mean", "second_moment", "_drivers")

    def __init__(self, states):
        st = np.array(states, dtype=float, copy=True).reshape(-1)
        st.setflags(write=False)
        self.states = st
        self.mean = _fsum_mean(st)
        self.second_moment = _fsum_mean(st * st)
        self._drivers: dict = {}

    @property
    def size(self) -> int:
        return self.states.size

    def moments(self) -> tuple[float, float, float]:
        """(1, E[X'], E[X'^2]) against which law-polynomial terms contract."""
        return (1.0, self.mean, self.second_moment)

    def drivers(self, model: "ModelSpec", t: float) -> "LawDrivers":
        key = (id(model), float(t))
        got = self._drivers.get(key)
        if got is None:
            got = _build_drivers(model, float(t), self)
            self._drivers[key] = got
        return got

    def __repr__(self):
        return f"LawView(M={self.size}, mean={self.mean:.6g})"


def degenerate_law(x: float, size: int = 1) -> LawView:
    """All particles at one point; handy in tests and examples."""
    return LawView(np.full(size, float(x)))


# ---------------------------------------------------------------------------
# coefficient flavours
# ---------------------------------------------------------------------------

TXCallable = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TXFunc:
    """A (t, x)-component with the partials the order-2 operators need."""

    fn: TXCallable
    d_t: Optional[TXCallable] = None
    d_x: Optional[TXCallable] = None
    d_xx: Optional[TXCallable] = None


def _zero_tx(t, x):
    return np.zeros(np.shape(x))


def _const_tx(v: float) -> TXCallable:
    v = float(v)

    def fn(t, x):
        return np.full(np.shape(x), v)

    return fn


def tx_const(v: float) -> TXFunc:
    """Constant component with all derivatives zero."""
    return TXFunc(fn=_const_tx(v), d_t=_zero_tx, d_x=_zero_tx, d_xx=_zero_tx)


TX_ZERO = tx_const(0.0)


@dataclass(frozen=True)
class LawPolyCoefficient:
    """f(t, x', x) = p0(t, x) + p1(t, x) x' + p2(t, x) x'^2."""

    p0: Optional[TXFunc] = None
    p1: Optional[TXFunc] = None
    p2: Optional[TXFunc] = None

    @property
    def terms(self):
        return (self.p0, self.p1, self.p2)

    def value(self, t, xp, x):
        xp = np.asarray(xp, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast_shapes(xp.shape, x.shape))
        for deg, term in enumerate(self.terms):
            if term is None:
                continue
            contrib = term.fn(t, x)
            out = out + (contrib * xp**deg if deg else contrib)
        return out

    def _contract(self, t, x, law: LawView, part: str):
        mom = law.moments()
        out = np.zeros(np.shape(x))
        for deg, term in enumerate(self.terms):
            if term is None:
                continue
            fn = getattr(term, part) if part != "fn" else term.fn
            if fn is None:
                raise ModelCapabilityError(
                    f"law-polynomial term of degree {deg} lacks {part}"
                )
            contrib = fn(t, x)
            out = out + (contrib * mom[deg] if deg else contrib)
        return out

    def mf(self, t, law, x):
        return self._contract(t, np.asarray(x, dtype=float), law, "fn")

    def mf_dx(self, t, law, x):
        return self._contract(t, np.asarray(x, dtype=float), law, "d_x")

    def mf_dxx(self, t, law, x):
        return self._contract(t, np.asarray(x, dtype=float), law, "d_xx")

    def dfds(self, t, law, x, drivers: "LawDrivers"):
        x = np.asarray(x, dtype=float)
        out = self._contract(t, x, law, "d_t")
        if self.p1 is not None:
            out = out + self.p1.fn(t, x) * (drivers.a1 + drivers.jg_lin)
        if self.p2 is not None:
            out = out + self.p2.fn(t, x) * (
                2.0 * drivers.a2 + drivers.a3 + drivers.jg_quad
            )
        return out

    def missing(self, parts) -> list[str]:
        present = [term for term in self.terms if term is not None]
        gone = []
        for part in parts:
            if part == "value":
                continue
            if part == "dfds":
                if any(term.d_t is None for term in present):
                    gone.append("d_t")
                continue
            attr = {"d_x": "d_x", "d_xx": "d_xx"}[part]
            if any(getattr(term, attr) is None for term in present):
                gone.append(part)
        return gone


@dataclass(frozen=True)
class GenericCoefficient:
    """f(t, x', x) as arbitrary callables; mean-field evals average particles.

    Partial derivatives are optional and gate which operators apply:
    d_x / d_xx for L1 and the diffusion part of L0, and (d_t, d_xp, d_xpxp)
    for the time-derivative part of L0.
    """

    fn: Callable
    d_x: Optional[Callable] = None
    d_xx: Optional[Callable] = None
    d_t: Optional[Callable] = None
    d_xp: Optional[Callable] = None
    d_xpxp: Optional[Callable] = None

    def value(self, t, xp, x):
        return np.asarray(self.fn(t, np.asarray(xp, float), np.asarray(x, float)))

    def _average(self, fn, t, law, x, what="fn"):
        if fn is None:
            raise ModelCapabilityError(f"GenericCoefficient lacks {what}")
        x = np.asarray(x, dtype=float)
        flat = np.ravel(x)
        vals = fn(t, law.states[:, None], flat[None, :])
        vals = np.broadcast_to(vals, (law.size, flat.size))
        return _fsum_mean_axis0(vals).reshape(x.shape)

    def mf(self, t, law, x):
        return self._average(self.fn, t, law, x)

    def mf_dx(self, t, law, x):
        return self._average(self.d_x, t, law, x, "d_x")

    def mf_dxx(self, t, law, x):
        return self._average(self.d_xx, t, law, x, "d_xx")

    def dfds(self, t, law, x, drivers: "LawDrivers"):
        x = np.asarray(x, dtype=float)
        flat = np.ravel(x)
        xp = law.states[:, None]
        xb = flat[None, :]
        psi = drivers.psi[:, None]
        phi = drivers.phi[:, None]
        parts = (
            self.d_t(t, xp, xb)
            + self.d_xp(t, xp, xb) * psi
            + 0.5 * self.d_xpxp(t, xp, xb) * phi**2
        )
        parts = np.broadcast_to(parts, (law.size, flat.size)).copy()
        if drivers.intensity > 0:
            disp, weights = drivers.displacement_nodes()
            base = np.broadcast_to(self.fn(t, xp, xb), (law.size, flat.size))
            for q, w in enumerate(weights):
                shifted = self.fn(t, xp + disp[:, q : q + 1], xb)
                parts += drivers.intensity * w * (shifted - base)
        return _fsum_mean_axis0(parts).reshape(x.shape)

    def missing(self, parts) -> list[str]:
        gone = []
        for part in parts:
            if part == "value":
                continue
            if part == "dfds":
                gone.extend(
                    name
                    for name in ("d_t", "d_xp", "d_xpxp")
                    if getattr(self, name) is None
                )
                continue
            if getattr(self, part) is None:
                gone.append(part)
        return gone


@dataclass(frozen=True)
class AffineMarkCoefficient:
    """Jump coefficient affine in the mark: c = base(t, x', x) + e * slope(t, x', x)."""

    base: Optional[LawPolyCoefficient] = None
    slope: Optional[LawPolyCoefficient] = None
    affine_in_mark: bool = field(default=True, init=False)

    def _combine(self, method, t, law_or_xp, x, e, *extra):
        e = np.asarray(e, dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(x), e.shape))
        if self.base is not None:
            out = out + getattr(self.base, method)(t, law_or_xp, x, *extra)
        if self.slope is not None:
            out = out + e * getattr(self.slope, method)(t, law_or_xp, x, *extra)
        return out

    def value(self, t, xp, x, e):
        e = np.asarray(e, dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(xp), np.shape(x), e.shape))
        if self.base is not None:
            out = out + self.base.value(t, xp, x)
        if self.slope is not None:
            out = out + e * self.slope.value(t, xp, x)
        return out

    def mf(self, t, law, x, e):
        return self._combine("mf", t, law, x, e)

    def mf_dx(self, t, law, x, e):
        return self._combine("mf_dx", t, law, x, e)

    def mf_dxx(self, t, law, x, e):
        return self._combine("mf_dxx", t, law, x, e)

    def dfds(self, t, law, x, e, drivers):
        e = np.asarray(e, dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(x), e.shape))
        if self.base is not None:
            out = out + self.base.dfds(t, law, x, drivers)
        if self.slope is not None:
            out = out + e * self.slope.dfds(t, law, x, drivers)
        return out

    def missing(self, parts) -> list[str]:
        gone: list[str] = []
        for piece in (self.base, self.slope):
            if piece is not None:
                for name in piece.missing(parts):
                    if name not in gone:
                        gone.append(name)
        return gone


@dataclass(frozen=True)
class GenericMarkCoefficient:
    """Jump coefficient c(t, x', x, e) as callables.

    ``affine_in_e`` declares c(., e) = c(., 0) + e*(c(., 1) - c(., 0)); the
    compensator then needs only the first mark moment.
    """

    fn: Callable
    d_x: Optional[Callable] = None
    d_xx: Optional[Callable] = None
    d_t: Optional[Callable] = None
    d_xp: Optional[Callable] = None
    d_xpxp: Optional[Callable] = None
    affine_in_e: bool = False

    @property
    def affine_in_mark(self) -> bool:
        return self.affine_in_e

    def value(self, t, xp, x, e):
        return np.asarray(
            self.fn(t, np.asarray(xp, float), np.asarray(x, float), np.asarray(e, float))
        )

    def _average(self, fn, t, law, x, e, what="fn"):
        if fn is None:
            raise ModelCapabilityError(f"GenericMarkCoefficient lacks {what}")
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        shape = np.broadcast_shapes(x.shape, e.shape)
        xf = np.ravel(np.broadcast_to(x, shape))
        ef = np.ravel(np.broadcast_to(e, shape))
        vals = fn(t, law.states[:, None], xf[None, :], ef[None, :])
        vals = np.broadcast_to(vals, (law.size, xf.size))
        return _fsum_mean_axis0(vals).reshape(shape)

    def mf(self, t, law, x, e):
        return self._average(self.fn, t, law, x, e)

    def mf_dx(self, t, law, x, e):
        return self._average(self.d_x, t, law, x, e, "d_x")

    def mf_dxx(self, t, law, x, e):
        return self._average(self.d_xx, t, law, x, e, "d_xx")

    def dfds(self, t, law, x, e, drivers):
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        shape = np.broadcast_shapes(x.shape, e.shape)
        xf = np.ravel(np.broadcast_to(x, shape))[None, :]
        ef = np.ravel(np.broadcast_to(e, shape))[None, :]
        xp = law.states[:, None]
        psi = drivers.psi[:, None]
        phi = drivers.phi[:, None]
        parts = (
            self.d_t(t, xp, xf, ef)
            + self.d_xp(t, xp, xf, ef) * psi
            + 0.5 * self.d_xpxp(t, xp, xf, ef) * phi**2
        )
        parts = np.broadcast_to(parts, (law.size, xf.size)).copy()
        if drivers.intensity > 0:
            disp, weights = drivers.displacement_nodes()
            base = np.broadcast_to(self.fn(t, xp, xf, ef), (law.size, xf.size))
            for q, w in enumerate(weights):
                shifted = self.fn(t, xp + disp[:, q : q + 1], xf, ef)
                parts += drivers.intensity * w * (shifted - base)
        return _fsum_mean_axis0(parts).reshape(shape)

    def missing(self, parts) -> list[str]:
        gone = []
        for part in parts:
            if part == "value":
                continue
            if part == "dfds":
                gone.extend(
                    name
                    for name in ("d_t", "d_xp", "d_xpxp")
                    if getattr(self, name) is None
                )
                continue
            if getattr(self, part) is None:
                gone.append(part)
        return gone


# ---------------------------------------------------------------------------
# per-(model, law, t) ensemble aggregates consumed by L0
# ---------------------------------------------------------------------------


class LawDrivers:
    """Frozen-law aggregates entering the time derivative of f^X.

    psi / phi are the drift / diffusion of each law particle (mean-field
    evaluated against the same frozen law); the jump generator enters via
    lambda-integrated displacement moments.  a1 = E[psi], a2 = E[X' psi],
    a3 = E[phi^2]; jg_lin = lam * E[D], jg_quad = lam * E[2 X' D + D^2]
    with D the mean-field jump displacement of a law particle.
    """

    __slots__ = (
        "model", "t", "law", "psi", "phi", "a1", "a2", "a3",
        "jg_lin", "jg_quad", "intensity", "_disp",
    )

    def __init__(self, model, t, law, psi, phi, a1, a2, a3, jg_lin, jg_quad):
        self.model = model
        self.t = t
        self.law = law
        self.psi = psi
        self.phi = phi
        self.a1 = a1
        self.a2 = a2
        self.a3 = a3
        self.jg_lin = jg_lin
        self.jg_quad = jg_quad
        self.intensity = model.intensity
        self._disp = None

    def displacement_nodes(self):
        """(M, Q) jump displacements of the law particles at the mark nodes."""
        if self._disp is None:
            marks = self.model.marks
            if marks.quad_nodes is None:
                raise ModelCapabilityError(
                    f"mark law {marks.label} declares no quadrature nodes"
                )
            X = self.law.states
            nodes = marks.quad_nodes
            disp = np.empty((X.size, nodes.size))
            for q, e in enumerate(nodes):
                disp[:, q] = self.model.c.mf(self.t, self.law, X, e)
            self._disp = (disp, marks.quad_weights)
        return self._disp


def _build_drivers(model: "ModelSpec", t: float, law: LawView) -> LawDrivers:
    X = law.states
    psi = np.broadcast_to(np.asarray(model.b.mf(t, law, X), float), X.shape)
    phi = np.broadcast_to(np.asarray(model.sigma.mf(t, law, X), float), X.shape)
    a1 = float(np.mean(psi))
    a2 = float(np.mean(X * psi))
    a3 = float(np.mean(phi * phi))
    jg_lin = 0.0
    jg_quad = 0.0
    lam = model.intensity
    if lam > 0:
        c = model.c
        mu1, mu2 = model.marks.mean, model.marks.second_moment
        if isinstance(c, AffineMarkCoefficient):
            u = c.base.mf(t, law, X) if c.base is not None else np.zeros_like(X)
            v = c.slope.mf(t, law, X) if c.slope is not None else np.zeros_like(X)
            ed = u + mu1 * v
            ed2 = u * u + 2.0 * mu1 * u * v + mu2 * v * v
            jg_lin = lam * float(np.mean(ed))
            jg_quad = lam * float(np.mean(2.0 * X * ed + ed2))
        else:
            marks = model.marks
            if marks.quad_nodes is None:
                raise ModelCapabilityError(
                    f"mark law {marks.label} declares no quadrature nodes"
                )
            acc_lin = np.zeros_like(X)
            acc_quad = np.zeros_like(X)
            for e, w in zip(marks.quad_nodes, marks.quad_weights):
                d = np.broadcast_to(np.asarray(c.mf(t, law, X, e), float), X.shape)
                acc_lin = acc_lin + w * d
                acc_quad = acc_quad + w * (2.0 * X * d + d * d)
            jg_lin = lam * float(np.mean(acc_lin))
            jg_quad = lam * float(np.mean(acc_quad))
    return LawDrivers(model, t, law, psi, phi, a1, a2, a3, jg_lin, jg_quad)


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """A scalar mean-field jump-diffusion problem.

    ``jump_compensator`` selects how int c(t,x',x,e) lambda(de) is computed:
    "auto" uses the first mark moment when c is affine in the mark and the
    declared quadrature otherwise; a callable (t, x', x) is averaged over
    the law like any other coefficient.
    """

    name: str
    b: LawPolyCoefficient | GenericCoefficient
    sigma: LawPolyCoefficient | GenericCoefficient
    c: AffineMarkCoefficient | GenericMarkCoefficient
    intensity: float
    marks: MarkDistribution
    params: dict = field(default_factory=dict)
    jump_compensator: object = "auto"

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError(f"intensity must be >= 0, got {self.intensity}")

    def compensator_mf(self, t, law, x):
        """Mean-field value of int c(t, x', x, e) lambda(de)."""
        x = np.asarray(x, dtype=float)
        if self.intensity == 0:
            return np.zeros(x.shape)
        comp = self.jump_compensator
        if callable(comp):
            wrapped = GenericCoefficient(fn=comp)
            return wrapped.mf(t, law, x)
        if comp == "auto" and getattr(self.c, "affine_in_mark", False):
            mu1 = self.marks.mean
            if isinstance(self.c, AffineMarkCoefficient):
                out = np.zeros(x.shape)
                if self.c.base is not None:
                    out = out + self.c.base.mf(t, law, x)
                if self.c.slope is not None:
                    out = out + mu1 * self.c.slope.mf(t, law, x)
                return self.intensity * out
            at0 = self.c.mf(t, law, x, 0.0)
            at1 = self.c.mf(t, law, x, 1.0)
            return self.intensity * (at0 + mu1 * (at1 - at0))
        marks = self.marks
        if marks.quad_nodes is None:
            raise ModelCapabilityError(
                f"mark law {marks.label} declares no quadrature nodes for the compensator"
            )
        out = np.zeros(x.shape)
        for e, w in zip(marks.quad_nodes, marks.quad_weights):
            out = out + w * self.c.mf(t, law, x, e)
        return self.intensity * out

    def validate_for(self, requirements: dict[str, tuple[str, ...]]) -> None:
        """Raise ModelCapabilityError naming every missing derivative."""
        gone = []
        for coeff_name, parts in requirements.items():
            coeff = getattr(self, coeff_name)
            gone.extend(f"{coeff_name}.{part}" for part in coeff.missing(parts))
        if gone:
            raise ModelCapabilityError(
                f"model '{self.name}' is missing derivatives: {', '.join(gone)}"
            )


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def _as_coefficient(f):
    if hasattr(f, "mf"):
        return f
    if callable(f):
        return GenericCoefficient(fn=f)
    raise TypeError(f"not a coefficient: {f!r}")


def mf_eval(f, t, law: LawView, x, e=None):
    """E[f(t, X', x)] against the ensemble; scalar in, scalar out."""
    coeff = _as_coefficient(f)
    if e is None:
        out = coeff.mf(t, law, x)
    else:
        out = coeff.mf(t, law, x, e)
    return float(out) if np.ndim(x) == 0 and np.ndim(e if e is not None else 0) == 0 else out


def compensated_drift(model: ModelSpec, t, law: LawView, x):
    """b^X + mean-field lambda-integral of c (the martingale-form drift)."""
    out = model.b.mf(t, law, x) + model.compensator_mf(t, law, x)
    return float(out) if np.ndim(x) == 0 else out


def op_L1(f, model: ModelSpec, t, law: LawView, x, e=None):
    """(d_x f)^X sigma^X."""
    coeff = _as_coefficient(f)
    missing = coeff.missing(("d_x",))
    if missing:
        raise ModelCapabilityError(f"L1 needs {missing} on {type(coeff).__name__}")
    grad = coeff.mf_dx(t, law, x) if e is None else coeff.mf_dx(t, law, x, e)
    out = grad * model.sigma.mf(t, law, x)
    return float(out) if np.ndim(x) == 0 and np.ndim(e if e is not None else 0) == 0 else out


def op_Lminus1(f, model: ModelSpec, t, law: LawView, x, e, f_mark=None):
    """f^X(t, x + c^X(t, x, e)) - f^X(t, x), both against the frozen law."""
    coeff = _as_coefficient(f)
    x = np.asarray(x, dtype=float)
    disp = model.c.mf(t, law, x, e)
    if f_mark is None:
        out = coeff.mf(t, law, x + disp) - coeff.mf(t, law, x)
    else:
        out = coeff.mf(t, law, x + disp, f_mark) - coeff.mf(t, law, x, f_mark)
    return float(out) if out.ndim == 0 else out


def op_L0(f, model: ModelSpec, t, law: LawView, x, e=None):
    """Generator part without the jump integral.

    d/ds E[f(s, beta_s, x)] at frozen x (drift, diffusion and jump motion of
    the law particles all contribute) plus (d_x f)^X b^X plus
    (1/2)(d_xx f)^X (sigma^X)^2.
    """
    coeff = _as_coefficient(f)
    missing = coeff.missing(("d_x", "d_xx", "dfds"))
    if missing:
        raise ModelCapabilityError(
            f"L0 needs {missing} on {type(coeff).__name__}"
        )
    drivers = law.drivers(model, t)
    x = np.asarray(x, dtype=float)
    if e is None:
        dfds = coeff.dfds(t, law, x, drivers)
        grad = coeff.mf_dx(t, law, x)
        hess = coeff.mf_dxx(t, law, x)
    else:
        dfds = coeff.dfds(t, law, x, e, drivers)
        grad = coeff.mf_dx(t, law, x, e)
        hess = coeff.mf_dxx(t, law, x, e)
    sig = model.sigma.mf(t, law, x)
    out = dfds + grad * model.b.mf(t, law, x) + 0.5 * hess * sig * sig
    return float(out) if out.ndim == 0 else out


def op_L0_tilde(f, model: ModelSpec, t, law: LawView, x, e=None):
    """L0 plus the lambda-integral of L_e^-1 f (fixed-node quadrature over F)."""
    base = op_L0(f, model, t, law, x, e=e)
    if model.intensity == 0:
        return base
    marks = model.marks
    if marks.quad_nodes is None:
        raise ModelCapabilityError(
            f"mark law {marks.label} declares no quadrature nodes"
        )
    coeff = _as_coefficient(f)
    x = np.asarray(x, dtype=float)
    acc = np.zeros(np.shape(base))
    for node, w in zip(marks.quad_nodes, marks.quad_weights):
        disp = model.c.mf(t, law, x, node)
        if e is None:
            jumped = coeff.mf(t, law, x + disp) - coeff.mf(t, law, x)
        else:
            jumped = coeff.mf(t, law, x + disp, e) - coeff.mf(t, law, x, e)
        acc = acc + w * jumped
    out = base + model.intensity * acc
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# built-in problems
# ---------------------------------------------------------------------------


def identity_coefficient() -> LawPolyCoefficient:
    """f(t, x', x) = x, with the full derivative suite."""
    return LawPolyCoefficient(
        p0=TXFunc(
            fn=lambda t, x: np.asarray(x, dtype=float) + 0.0,
            d_t=_zero_tx,
            d_x=_const_tx(1.0),
            d_xx=_zero_tx,
        )
    )


def _signed_pow(x, p):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** p


def _signed_pow_d2(x, p):
    # second derivative of the odd extension; the removable singularity at
    # zero is assigned the value 0
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = p * (p - 1.0) * np.sign(x) * ax ** (p - 2.0)
    return np.where(ax == 0.0, 0.0, raw)


def example1(
    a: float = 1.25,
    b: float = 0.75,
    c: float = 0.25,
    intensity: float = 1.0,
    marks: MarkDistribution | None = None,
) -> ModelSpec:
    """Linear benchmark: drift a(E[X]+x), diffusion b x, jump c e (E[X]+x)."""
    if marks is None:
        marks = MarkDistribution.uniform(-0.5, 0.5)
    drift = LawPolyCoefficient(
        p0=TXFunc(lambda t, x: a * np.asarray(x, float), _zero_tx, _const_tx(a), _zero_tx),
        p1=tx_const(a),
    )
    diffusion = LawPolyCoefficient(
        p0=TXFunc(lambda t, x: b * np.asarray(x, float), _zero_tx, _const_tx(b), _zero_tx),
    )
    jump = AffineMarkCoefficient(
        slope=LawPolyCoefficient(
            p0=TXFunc(lambda t, x: c * np.asarray(x, float), _zero_tx, _const_tx(c), _zero_tx),
            p1=tx_const(c),
        )
    )
    return ModelSpec(
        name="example1",
        b=drift,
        sigma=diffusion,
        c=jump,
        intensity=intensity,
        marks=marks,
        params={"a": a, "b": b, "c": c},
    )


def example2(
    intensity: float = 1.0,
    marks: MarkDistribution | None = None,
) -> ModelSpec:
    """Nonlinear benchmark with a 5/3-power drift.

    The fractional power is evaluated as the odd extension
    sign(x)|x|^(5/3) so trajectories that cross zero stay real-valued.
    """
    if marks is None:
        marks = MarkDistribution.uniform(-0.5, 0.5)
    lam2 = intensity * intensity
    kappa = 1.0 / (2.0 * (1.0 + lam2))
    p = 5.0 / 3.0
    drift = LawPolyCoefficient(
        p0=TXFunc(
            fn=lambda t, x: _signed_pow(x, p),
            d_t=_zero_tx,
            d_x=lambda t, x: p * np.abs(np.asarray(x, float)) ** (p - 1.0),
            d_xx=lambda t, x: _signed_pow_d2(x, p),
        ),
        p1=tx_const(2.0 * lam2),
    )
    diffusion = LawPolyCoefficient(p1=tx_const(0.5))
    jump = AffineMarkCoefficient(
        slope=LawPolyCoefficient(
            p0=TXFunc(lambda t, x: kappa * np.asarray(x, float), _zero_tx, _const_tx(kappa), _zero_tx),
            p2=tx_const(kappa),
        )
    )
    return ModelSpec(
        name="example2",
        b=drift,
        sigma=diffusion,
        c=jump,
        intensity=intensity,
        marks=marks,
        params={},
    )


_BUILTINS = {"example1": example1, "example2": example2}


def make_model(name: str, intensity: float, marks: MarkDistribution | None = None, **params) -> ModelSpec:
    """Instantiate a built-in model by name with parameter overrides."""
    if name not in _BUILTINS:
        raise ValueError(f"unknown model '{name}' (have: {sorted(_BUILTINS)})")
    builder = _BUILTINS[name]
    if name == "example1":
        return builder(intensity=intensity, marks=marks, **params)
    if params:
        raise ValueError(f"model '{name}' takes no extra parameters, got {sorted(params)}")
    return builder(intensity=intensity, marks=marks)
