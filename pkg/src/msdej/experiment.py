"""Convergence-study orchestration.

A run couples every resolution to one shared set of noise realizations:
the law ensemble and each error replication get their own PathBundle, the
reference solution is the same scheme on the 2**r fine grid of those same
bundles, and each coarse N reads exact restrictions of the stored paths.
Strong error is the mean absolute coupled difference at T; weak error is
the absolute mean of the coupled difference.

When the reference is the moment oracle (example1 only), the coupled fine
solution still provides the variance-reduced estimate of E[X_N] - m1(T)
(the raw sample mean cannot resolve order-2 bias at realistic sample
counts); the oracle anchors it, and the reference-vs-oracle gap is
reported in the metadata together with the raw per-row gaps.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .meanfield import ParticleEnsemble, PropagationError, propagate_law, propagate_targets
from .model import ModelCapabilityError, ModelSpec, make_model, _fsum_mean
from .random_driver import (
    ROLE_ERR,
    ROLE_LAW,
    MarkDistribution,
    coarsen,
    rng_stream,
    sample_bundle,
)
from .schemes import SCHEMES, validate_scheme


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class DivergenceError(RuntimeError):
    """Too many replications diverged, or the law ensemble did (exit code 3)."""


_MODES = ("strong", "weak", "both")
_FORMATS = ("csv", "report")
_REFERENCES = ("fine_grid", "moment_oracle")
_DIVERGENCE_BUDGET = 1e-3
_CHUNK = 1000


@dataclass
class ExperimentConfig:
    model: str
    steps_list: list[int]
    params: dict = field(default_factory=dict)
    T: float = 1.0
    intensity: float = 1.0
    marks: MarkDistribution = field(default_factory=lambda: MarkDistribution.uniform(-0.5, 0.5))
    x0: float = 0.1
    X0: float | None = None
    M_law: int = 500
    M_err: int = 500
    seed: int = 0
    scheme: str = "euler"
    mode: str = "both"
    reference: str = "fine_grid"
    fine_exponent: int = 12
    output: str | None = None
    fmt: str = "csv"
    workers: int = 1

    def __post_init__(self):
        if self.X0 is None:
            self.X0 = self.x0

    def validate(self) -> None:
        if self.model not in ("example1", "example2"):
            raise ConfigError(f"unknown model '{self.model}'")
        if not self.steps_list:
            raise ConfigError("steps list is empty")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme '{self.scheme}' (have: {SCHEMES})")
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got '{self.mode}'")
        if self.fmt not in _FORMATS:
            raise ConfigError(f"format must be one of {_FORMATS}, got '{self.fmt}'")
        if self.reference not in _REFERENCES:
            raise ConfigError(f"reference must be one of {_REFERENCES}")
        if self.reference == "moment_oracle" and self.model != "example1":
            raise ConfigError("moment_oracle reference is only available for example1")
        if self.T <= 0:
            raise ConfigError(f"T must be > 0, got {self.T}")
        if self.intensity < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.intensity}")
        if self.M_law < 1 or self.M_err < 1:
            raise ConfigError("M_law and M_err must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not (1 <= self.fine_exponent <= 24):
            raise ConfigError(f"fine_exponent out of range: {self.fine_exponent}")
        n_fine = 2**self.fine_exponent
        for n in self.steps_list:
            if n < 1 or n_fine % n != 0:
                raise ConfigError(
                    f"steps value {n} does not divide 2**{self.fine_exponent}"
                )
        if sorted(set(self.steps_list)) != self.steps_list:
            raise ConfigError("steps must be strictly increasing and unique")

    def echo(self) -> list[tuple[str, str]]:
        """Canonical key=value serialization (used by the report format)."""
        pairs = [("model", self.model)]
        for key in sorted(self.params):
            pairs.append((key, _fmt_num(self.params[key])))
        pairs += [
            ("lambda", _fmt_num(self.intensity)),
            ("mark", self.marks.label),
            ("T", _fmt_num(self.T)),
            ("x0", _fmt_num(self.x0)),
            ("X0", _fmt_num(self.X0)),
            ("steps", ",".join(str(n) for n in self.steps_list)),
            ("M_law", str(self.M_law)),
            ("M_err", str(self.M_err)),
            ("seed", str(self.seed)),
            ("scheme", self.scheme),
            ("mode", self.mode),
            ("reference", self.reference),
            ("fine_exponent", str(self.fine_exponent)),
            ("workers", str(self.workers)),
        ]
        return pairs


def _fmt_num(v: float) -> str:
    return repr(float(v))


_CONFIG_KEYS = {
    "model", "a", "b", "c", "lambda", "mark", "T", "x0", "X0", "steps",
    "M_law", "M_err", "seed", "scheme", "mode", "reference", "fine_exponent",
    "output", "format", "workers",
}


def _parse_mark(text: str) -> MarkDistribution:
    text = text.strip()
    if text.startswith("uniform(") and text.endswith(")"):
        inner = text[len("uniform("):-1]
        parts = inner.split(",")
        if len(parts) == 2:
            try:
                return MarkDistribution.uniform(float(parts[0]), float(parts[1]))
            except ValueError as exc:
                raise ConfigError(f"bad mark distribution '{text}': {exc}") from exc
    raise ConfigError(f"bad mark distribution '{text}' (expected uniform(a,b))")


def parse_config(text: str) -> ExperimentConfig:
    """Parse the line-based ``key = value`` config format.

    Blank lines and lines starting with '#' are ignored; unknown keys are
    errors.  See the README for the key reference.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{stripped}'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        raw[key] = value

    if "model" not in raw:
        raise ConfigError("missing required key 'model'")
    if "steps" not in raw:
        raise ConfigError("missing required key 'steps'")

    def _float(key, default=None):
        if key not in raw:
            return default
        try:
            return float(raw[key])
        except ValueError as exc:
            raise ConfigError(f"key '{key}': not a number: '{raw[key]}'") from exc

    def _int(key, default=None):
        if key not in raw:
            return default
        try:
            return int(raw[key])
        except ValueError as exc:
            raise ConfigError(f"key '{key}': not an integer: '{raw[key]}'") from exc

    try:
        steps = [int(tok) for tok in raw["steps"].replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"key 'steps': expected integers, got '{raw['steps']}'") from exc

    params = {}
    for key in ("a", "b", "c"):
        if key in raw:
            params[key] = _float(key)
    model = raw["model"]
    if model != "example1" and params:
        raise ConfigError(
            f"parameters {sorted(params)} are only valid for example1"
        )

    reference = raw.get("reference", "fine_grid")
    fine_exponent = _int("fine_exponent", 12)
    if reference.startswith("fine_grid(") and reference.endswith(")"):
        try:
            fine_exponent = int(reference[len("fine_grid("):-1])
        except ValueError as exc:
            raise ConfigError(f"bad reference '{reference}'") from exc
        reference = "fine_grid"

    cfg = ExperimentConfig(
        model=model,
        steps_list=steps,
        params=params,
        T=_float("T", 1.0),
        intensity=_float("lambda", 1.0),
        marks=_parse_mark(raw["mark"]) if "mark" in raw else MarkDistribution.uniform(-0.5, 0.5),
        x0=_float("x0", 0.1),
        X0=_float("X0"),
        M_law=_int("M_law", 500),
        M_err=_int("M_err", 500),
        seed=_int("seed", 0),
        scheme=raw.get("scheme", "euler"),
        mode=raw.get("mode", "both"),
        reference=reference,
        fine_exponent=fine_exponent,
        output=raw.get("output"),
        fmt=raw.get("format", "csv"),
        workers=_int("workers", 1),
    )
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# moment oracle for example1
# ---------------------------------------------------------------------------


def moment_oracle_example1(t: float, params: dict, marks: MarkDistribution | None = None):
    """First and second moment of the linear benchmark at time t.

    With centered marks (E[e] = 0, E[e^2] = mu2) the moments close:

        m1' = 2 a m1
        m2' = 2 a (m1^2 + m2) + b^2 m2 + lam c^2 mu2 (3 m1^2 + m2)

    (apply the jump-diffusion chain rule to x and x^2 and average; the odd
    mark moment kills every term linear in e).  Integrated with the
    classical 4th-order Runge-Kutta method at step 1e-5.
    """
    if marks is None:
        marks = MarkDistribution.uniform(-0.5, 0.5)
    if not marks.label.startswith("uniform(") or marks.mean != 0.0:
        raise ValueError(
            f"moment oracle supports centered uniform marks only, got {marks.label}"
        )
    a = float(params["a"])
    b = float(params["b"])
    c = float(params["c"])
    lam = float(params.get("lam", params.get("lambda", 0.0)))
    x0 = float(params["x0"])
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    mu2 = marks.second_moment
    m1, m2 = x0, x0 * x0
    if t == 0:
        return m1, m2

    jump_c = lam * c * c * mu2

    def rhs(y1, y2):
        d1 = 2.0 * a * y1
        d2 = 2.0 * a * (y1 * y1 + y2) + b * b * y2 + jump_c * (3.0 * y1 * y1 + y2)
        return d1, d2

    n = max(1, math.ceil(t / 1e-5))
    h = t / n
    for _ in range(n):
        k1 = rhs(m1, m2)
        k2 = rhs(m1 + 0.5 * h * k1[0], m2 + 0.5 * h * k1[1])
        k3 = rhs(m1 + 0.5 * h * k2[0], m2 + 0.5 * h * k2[1])
        k4 = rhs(m1 + h * k3[0], m2 + h * k3[1])
        m1 += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        m2 += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    return m1, m2


# ---------------------------------------------------------------------------
# error estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorRow:
    steps: int
    strong_error: float
    strong_se: float
    weak_error: float
    weak_se: float


@dataclass(frozen=True)
class ErrorTable:
    rows: list[ErrorRow]
    cr_strong: float | None
    cr_weak: float | None
    metadata: dict


def fit_rate(rows, horizon: float = 1.0) -> float:
    """Least-squares slope of log(error) against log(dt), dt = T/N."""
    rows = list(rows)
    if len(rows) < 2:
        raise ValueError("rate fit needs at least two (N, error) rows")
    ns = np.array([r[0] for r in rows], dtype=float)
    errs = np.array([r[1] for r in rows], dtype=float)
    if np.any(errs <= 0):
        raise ValueError("rate fit needs positive errors")
    slope = np.polyfit(np.log(horizon / ns), np.log(errs), 1)[0]
    return float(slope)


def _make_bundles(cfg: ExperimentConfig, role: int, indices) -> list:
    if role == ROLE_LAW:
        return [
            sample_bundle(cfg.intensity, cfg.T, cfg.marks, cfg.fine_exponent,
                          rng_stream(cfg.seed, ROLE_LAW, 0, j))
            for j in indices
        ]
    return [
        sample_bundle(cfg.intensity, cfg.T, cfg.marks, cfg.fine_exponent,
                      rng_stream(cfg.seed, ROLE_ERR, i, 0))
        for i in indices
    ]


def _assert_coupling(bundle, coarse_n: int, fine_n: int) -> None:
    """Coarse increments must be exact sums of fine ones; same jump stream."""
    coarse = coarsen(bundle, coarse_n)
    fine = coarsen(bundle, fine_n)
    ratio = fine_n // coarse_n
    fine_dw = np.array([c.dw for c in fine])
    for k, ctx in enumerate(coarse):
        total = ctx.dw
        parts = fine_dw[k * ratio: (k + 1) * ratio]
        if abs(total - math.fsum(parts)) > 1e-12 * max(1.0, abs(total)):
            raise AssertionError(f"coarse/fine Brownian coupling broken at step {k}")
    n_coarse = sum(len(c.jumps) for c in coarse)
    n_fine = sum(len(c.jumps) for c in fine)
    if n_coarse != n_fine or n_coarse != bundle.jumps.count:
        raise AssertionError("coarse/fine jump streams disagree")


def estimate_errors(cfg: ExperimentConfig) -> ErrorTable:
    """Run the coupled convergence study described by ``cfg``."""
    t_start = time.perf_counter()
    cfg.validate()
    model = make_model(cfg.model, intensity=cfg.intensity, marks=cfg.marks, **cfg.params)
    try:
        validate_scheme(model, cfg.scheme)
    except ModelCapabilityError as exc:
        raise ConfigError(str(exc)) from exc

    fine_n = 2**cfg.fine_exponent
    law_bundles = _make_bundles(cfg, ROLE_LAW, range(cfg.M_law))
    _assert_coupling(law_bundles[0], cfg.steps_list[0], fine_n)
    ensemble = ParticleEnsemble.from_initial(cfg.x0, law_bundles)
    try:
        law_fine = propagate_law(model, cfg.scheme, ensemble, fine_n)
        law_coarse = {
            n: propagate_law(model, cfg.scheme, ensemble, n) for n in cfg.steps_list
        }
    except PropagationError as exc:
        raise DivergenceError(f"law ensemble diverged: {exc}") from exc

    oracle_m1 = None
    if cfg.reference == "moment_oracle":
        oracle_m1, _ = moment_oracle_example1(
            cfg.T,
            {**model.params, "lam": cfg.intensity, "x0": cfg.x0},
            cfg.marks,
        )

    def run_chunk(indices):
        bundles = _make_bundles(cfg, ROLE_ERR, indices)
        fine_finals = propagate_targets(model, cfg.scheme, law_fine, cfg.X0, bundles, fine_n)
        coarse_finals = {
            n: propagate_targets(model, cfg.scheme, law_coarse[n], cfg.X0, bundles, n)
            for n in cfg.steps_list
        }
        return fine_finals, coarse_finals

    chunks = [range(lo, min(lo + _CHUNK, cfg.M_err)) for lo in range(0, cfg.M_err, _CHUNK)]
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(ch) for ch in chunks]

    fine_finals = np.concatenate([r[0] for r in results])
    coarse_finals = {
        n: np.concatenate([r[1][n] for r in results]) for n in cfg.steps_list
    }

    mask = np.isfinite(fine_finals)
    for n in cfg.steps_list:
        mask &= np.isfinite(coarse_finals[n])
    n_used = int(mask.sum())
    diverged = cfg.M_err - n_used
    if diverged:
        frac = diverged / cfg.M_err
        if frac > _DIVERGENCE_BUDGET:
            raise DivergenceError(
                f"{diverged}/{cfg.M_err} replications diverged "
                f"({100 * frac:.2f}% > {100 * _DIVERGENCE_BUDGET}%)"
            )
        warnings.warn(
            f"excluded {diverged} diverged replication(s) out of {cfg.M_err}",
            RuntimeWarning,
            stacklevel=2,
        )
    if n_used < 2:
        raise DivergenceError("fewer than two usable replications")

    fine_used = fine_finals[mask]
    rows = []
    raw_oracle_gaps = {}
    for n in cfg.steps_list:
        d = coarse_finals[n][mask] - fine_used
        abs_d = np.abs(d)
        strong = _fsum_mean(abs_d)
        strong_se = float(np.std(abs_d, ddof=1)) / math.sqrt(n_used)
        weak = abs(_fsum_mean(d))
        weak_se = float(np.std(d, ddof=1)) / math.sqrt(n_used)
        rows.append(ErrorRow(n, strong, strong_se, weak, weak_se))
        if oracle_m1 is not None:
            raw_oracle_gaps[n] = abs(_fsum_mean(coarse_finals[n][mask]) - oracle_m1)

    cr_strong = cr_weak = None
    if cfg.mode in ("strong", "both"):
        try:
            cr_strong = fit_rate([(r.steps, r.strong_error) for r in rows], cfg.T)
        except ValueError:
            cr_strong = None
    if cfg.mode in ("weak", "both"):
        try:
            cr_weak = fit_rate([(r.steps, r.weak_error) for r in rows], cfg.T)
        except ValueError:
            cr_weak = None

    metadata = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "replications_used": n_used,
        "replications_diverged": diverged,
        "runtime_s": time.perf_counter() - t_start,
    }
    if oracle_m1 is not None:
        ref_gap = _fsum_mean(fine_used) - oracle_m1
        metadata["oracle_m1"] = oracle_m1
        metadata["reference_oracle_gap"] = ref_gap
        metadata["reference_oracle_gap_se"] = float(np.std(fine_used, ddof=1)) / math.sqrt(n_used)
        metadata["raw_oracle_gaps"] = raw_oracle_gaps
    return ErrorTable(rows=rows, cr_strong=cr_strong, cr_weak=cr_weak, metadata=metadata)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _csv_num(v: float | None) -> str:
    return "NA" if v is None else f"{v:.12e}"


def render(table: ErrorTable, fmt: str) -> str:
    """Serialize an ErrorTable; csv output is byte-stable for a fixed seed."""
    if fmt == "csv":
        lines = ["N,strong_error,strong_se,weak_error,weak_se"]
        for r in table.rows:
            lines.append(
                f"{r.steps},{_csv_num(r.strong_error)},{_csv_num(r.strong_se)},"
                f"{_csv_num(r.weak_error)},{_csv_num(r.weak_se)}"
            )
        lines.append(f"CR_strong,{_csv_num(table.cr_strong)}")
        lines.append(f"CR_weak,{_csv_num(table.cr_weak)}")
        return "\n".join(lines) + "\n"
    if fmt == "report":
        md = table.metadata
        lines = ["# msdej convergence report", "", "## config"]
        lines += [f"{k} = {v}" for k, v in md["config"]]
        lines += [
            "",
            f"replications_used = {md['replications_used']}",
            f"replications_diverged = {md['replications_diverged']}",
            f"runtime_s = {md['runtime_s']:.3f}",
        ]
        if "oracle_m1" in md:
            lines += [
                "",
                "## oracle anchor",
                f"oracle_m1 = {md['oracle_m1']:.12e}",
                f"reference_oracle_gap = {md['reference_oracle_gap']:.6e}",
                f"reference_oracle_gap_se = {md['reference_oracle_gap_se']:.6e}",
            ]
            lines += [
                f"raw_oracle_gap[N={n}] = {gap:.6e}"
                for n, gap in md["raw_oracle_gaps"].items()
            ]
        lines += ["", "## errors", "N strong_error strong_se weak_error weak_se"]
        for r in table.rows:
            lines.append(
                f"{r.steps} {r.strong_error:.6e} {r.strong_se:.6e} "
                f"{r.weak_error:.6e} {r.weak_se:.6e}"
            )
        lines += [
            "",
            f"CR_strong = {'NA' if table.cr_strong is None else f'{table.cr_strong:.4f}'}",
            f"CR_weak = {'NA' if table.cr_weak is None else f'{table.cr_weak:.4f}'}",
        ]
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown format '{fmt}'")


def emit(table: ErrorTable, path, fmt: str = "csv"):
    """Write the rendered table to ``path``; returns the path."""
    text = render(table, fmt)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write table to '{path}': {exc}") from exc
    return Path(path)
