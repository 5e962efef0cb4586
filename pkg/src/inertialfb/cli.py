"""Experiment runner for the imaging benchmarks.

Subcommands::

    inertialfb run CONFIG [--key value ...]
    inertialfb compare CONFIG_A CONFIG_B [--out DIR] [--key value ...]
    inertialfb alpha-curve --eps E --grid N [--out FILE]

Configs are INI files with sections ``[problem]``, ``[solver]``, ``[stop]``
and ``[output]``; every key can be overridden with ``--key value``.
Exit status is 0 on success, 2 for an invalid configuration and 3 when
the iterates blow up (the trace written so far is kept).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Optional

import numpy as np

from .imaging import (
    Kernel,
    box_kernel,
    build_deconv,
    build_rof_dual,
    build_rof_saddle,
    conv_op,
    delta_kernel,
    energies,
    grad_op,
    motion_kernel,
    synthetic_image,
    add_noise,
)
from .linops import Metric, block_pd_check, diagonal, op_norm_estimate
from .operators import project_dual_ball
from .pgm import read_pgm, write_pgm
from .primal_dual import (
    PDConfig,
    alpha_bound_pd,
    check_theorem3,
    check_theorem4,
    diag_precond,
    ipdfb,
    scalar_steps_from_lemma,
)
from .splitting import (
    SCHEDULE_KINDS,
    AlphaSchedule,
    check_theorem1,
    check_theorem2,
    inertial_fb,
)

__all__ = [
    "ConfigError",
    "NumericalBlowUp",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "compare_experiments",
    "emit_alpha_curve",
    "deconv_reference",
    "main",
]

PROBLEMS = ("rof-dual-fista", "rof-saddle-pd", "deconv-explicit", "deconv-splitdual")
TRACE_FIELDS = ("k", "alpha", "primal", "dual", "gap", "residual_m", "e_k", "err_sum", "ms")
GRAD_NORM = math.sqrt(8.0)


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


class NumericalBlowUp(RuntimeError):
    """Non-finite iterates (exit status 3)."""


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# section -> key -> (type, default).  Keys are unique across sections so
# that ``--key value`` is unambiguous.
SCHEMA = {
    "problem": {
        "kind": (str, "rof-saddle-pd"),
        "image": (str, "synthetic"),
        "size": (int, 64),
        "lambda": (float, 10.0),
        "noise_sigma": (float, 0.1),
        "seed": (int, 0),
        "kernel": (str, "motion"),
        "kernel_size": (int, 7),
        "kernel_angle": (float, 30.0),
        "boundary": (str, "replicate"),
        "reference_iters": (int, 10000),
        "reference_r": (float, 100.0),
    },
    "solver": {
        "alpha_mode": (str, "constant"),
        "alpha": (float, 0.0),
        "c": (float, 1e4),
        "eps": (float, 1e-6),
        "ramp": (int, 100),
        "rho": (float, 1.0),
        "ratio": (float, 1.0),
        "step_scale": (float, 0.99),
        "fb_step": (float, 0.125),
        "gamma": (float, 1.0),
        "delta": (float, 1.0),
        "r": (float, 1.0),
        "s": (float, 1.0),
        "precondition": (_bool, True),
    },
    "stop": {
        "tol": (float, 1e-12),
        "k_max": (int, 2000),
        "gap_threshold": (float, 1e-4),
        "gap_relative": (_bool, True),
        "stop_at_threshold": (_bool, False),
        "log_stride": (int, 1),
    },
    "output": {
        "dir": (str, "out"),
        "trace": (str, "trace.csv"),
        "result": (str, "result.pgm"),
        "summary": (str, "summary.json"),
        "bits": (int, 8),
        "timing": (_bool, False),
        "reference_cache": (str, ""),
    },
}
KEY_SECTION = {k: sec for sec, keys in SCHEMA.items() for k in keys}
assert len(KEY_SECTION) == sum(map(len, SCHEMA.values())), "config keys must be unique"


@dataclass
class ExperimentConfig:
    """Validated experiment parameters, grouped as in the config file."""

    problem: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    stop: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        """Build from ``{section: {key: value}}``; missing keys take defaults."""
        parts = {}
        for sec, keys in SCHEMA.items():
            given = dict(values.get(sec, {}))
            unknown = set(given) - set(keys)
            if unknown:
                raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")
            parts[sec] = {}
            for key, (typ, default) in keys.items():
                raw = given.get(key, default)
                try:
                    parts[sec][key] = typ(raw)
                except (TypeError, ValueError):
                    raise ConfigError(f"[{sec}] {key} = {raw!r} is not a valid {typ.__name__}") from None
        extra = set(values) - set(SCHEMA)
        if extra:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        p, s, st, o = self.problem, self.solver, self.stop, self.output
        if p["kind"] not in PROBLEMS:
            raise ConfigError(f"problem kind must be one of {', '.join(PROBLEMS)}")
        if p["size"] < 2:
            raise ConfigError("size must be at least 2")
        if not p["lambda"] > 0:
            raise ConfigError(f"lambda = {p['lambda']} must be positive")
        if p["noise_sigma"] < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if p["kernel"] not in ("motion", "box", "delta"):
            raise ConfigError("kernel must be motion, box or delta")
        if p["kernel_size"] < 1:
            raise ConfigError("kernel_size must be positive")
        if p["boundary"] not in ("replicate", "zero"):
            raise ConfigError("boundary must be replicate or zero")
        if p["reference_iters"] < 1 or p["reference_r"] <= 0:
            raise ConfigError("reference_iters and reference_r must be positive")
        if s["alpha_mode"] not in SCHEDULE_KINDS:
            raise ConfigError(f"alpha_mode must be one of {', '.join(SCHEDULE_KINDS)}")
        if not 0.0 <= s["alpha"] < 1.0:
            raise ConfigError(f"alpha = {s['alpha']} must lie in [0, 1)")
        if s["c"] <= 0 or s["ramp"] < 1:
            raise ConfigError("c must be positive and ramp >= 1")
        if not s["eps"] > 0:
            raise ConfigError("eps must be positive")
        if not 0.0 < s["rho"] <= 2.0:
            raise ConfigError(f"rho = {s['rho']} must lie in (0, 2]")
        if s["rho"] != 1.0 and (s["alpha_mode"] != "constant" or s["alpha"] != 0.0):
            raise ConfigError("over-relaxation (rho != 1) requires alpha_mode = constant with alpha = 0")
        if s["ratio"] <= 0 or s["step_scale"] <= 0 or s["fb_step"] <= 0:
            raise ConfigError("ratio, step_scale and fb_step must be positive")
        for key in ("gamma", "delta"):
            if not 0.0 < s[key] < 2.0:
                raise ConfigError(f"{key} = {s[key]} must lie in (0, 2)")
        if s["r"] <= 0:
            raise ConfigError("r must be positive")
        if not 0.0 <= s["s"] <= 2.0:
            raise ConfigError(f"s = {s['s']} must lie in [0, 2]")
        if st["tol"] < 0 or st["k_max"] < 1 or st["log_stride"] < 1 or st["gap_threshold"] < 0:
            raise ConfigError("tol, gap_threshold must be >= 0; k_max, log_stride >= 1")
        if o["bits"] not in (8, 16):
            raise ConfigError("bits must be 8 or 16")

    def path(self, key: str) -> str:
        return os.path.join(self.output["dir"], self.output[key])

    def schedule(self, gamma: Optional[float] = None, delta: Optional[float] = None) -> AlphaSchedule:
        s = self.solver
        try:
            return AlphaSchedule(
                kind=s["alpha_mode"], alpha=s["alpha"], c=s["c"], eps=s["eps"],
                gamma=gamma, delta=delta, ramp=s["ramp"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _read_ini(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return {sec: dict(parser.items(sec)) for sec in parser.sections()}


def load_config(path: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read an INI config and apply ``{key: value}`` overrides.

    Relative image and output paths are taken relative to the current
    directory, not the config file.
    """
    values = _read_ini(path)
    for key, val in (overrides or {}).items():
        sec = KEY_SECTION.get(key)
        if sec is None:
            raise ConfigError(f"unknown option --{key}")
        values.setdefault(sec, {})[key] = val
    return ExperimentConfig.from_dict(values)


# ---------------------------------------------------------------------------
# problem instances


@dataclass
class Instance:
    clean: np.ndarray
    f: np.ndarray
    kernel: Optional[Kernel] = None
    H: object = None
    reference: Optional[float] = None


def _kernel(p: dict) -> Kernel:
    if p["kernel"] == "motion":
        return motion_kernel(p["kernel_size"], p["kernel_angle"])
    if p["kernel"] == "box":
        return box_kernel(p["kernel_size"], p["kernel_size"])
    return delta_kernel(1)


def _load_image(p: dict) -> np.ndarray:
    if p["image"] == "synthetic":
        return synthetic_image(p["size"])
    try:
        img = read_pgm(p["image"])
    except OSError as exc:
        raise ConfigError(f"cannot read image {p['image']}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    n = p["size"]
    if min(img.shape) < n:
        raise ConfigError(f"image {p['image']} is {img.shape[0]}x{img.shape[1]}, smaller than size = {n}")
    r0 = (img.shape[0] - n) // 2
    c0 = (img.shape[1] - n) // 2
    return img[r0 : r0 + n, c0 : c0 + n].copy()


def _instance_key(p: dict, f: np.ndarray) -> str:
    h = hashlib.sha256(np.ascontiguousarray(f).tobytes())
    for key in ("lambda", "kernel", "kernel_size", "kernel_angle", "boundary", "reference_iters", "reference_r"):
        h.update(repr(p[key]).encode())
    return h.hexdigest()


def deconv_reference(f, h: Kernel, lam: float, boundary: str = "replicate", iters: int = 10000, r: float = 100.0):
    """Reference minimizer and energy of the deconvolution problem.

    Runs ``iters`` iterations of the explicit variant with the largest
    admissible constant extrapolation factor.
    """
    prob = build_deconv(f, h, lam, "explicit", boundary)
    st = scalar_steps_from_lemma(GRAD_NORM, prob.L_Q, 0.0, 1.0, 1.0, r)
    alpha = alpha_bound_pd(1.0, 1.0)
    cfg = PDConfig(st.tau, st.sigma, AlphaSchedule("constant", alpha))
    res = ipdfb(prob, cfg, np.asarray(f, float).ravel(), None, tol=0.0, max_iter=iters)
    u = res.x.reshape(np.shape(f))
    H = conv_op(*np.shape(f), h, boundary)
    return u, energies(u, None, f, lam, "deconv", H=H).primal


def build_instance(cfg: ExperimentConfig) -> Instance:
    """Clean image, observed data and (for deconvolution) the reference energy."""
    p = cfg.problem
    clean = _load_image(p)
    if p["kind"].startswith("rof"):
        return Instance(clean, add_noise(clean, p["noise_sigma"], p["seed"]))
    h = _kernel(p)
    H = conv_op(*clean.shape, h, p["boundary"])
    f = add_noise(H.apply(clean.ravel()).reshape(clean.shape), p["noise_sigma"], p["seed"])
    inst = Instance(clean, f, h, H)
    cache = cfg.output["reference_cache"]
    key = _instance_key(p, f)
    if cache and os.path.exists(cache):
        with np.load(cache) as z:
            if str(z["key"]) == key:
                inst.reference = float(z["energy"])
                return inst
    _, inst.reference = deconv_reference(f, h, p["lambda"], p["boundary"], p["reference_iters"], p["reference_r"])
    if cache:
        os.makedirs(os.path.dirname(os.path.abspath(cache)), exist_ok=True)
        np.savez(cache, key=key, energy=inst.reference)
    return inst


# ---------------------------------------------------------------------------
# solver setup


@dataclass
class Setup:
    """Everything the run loop needs, plus the checker outcomes."""

    kind: str
    checks: dict
    alpha_cap: float
    steps: dict
    run: object = None  # callable(callback) -> result
    image_of: object = None  # callable(state) -> (u, p)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _pd_basic_check(tau, sigma, K, L_Q: float, L_P: float, K_norm: Optional[float], tol: float = 0.0):
    """``M - 1/2 diag(L_Q, L_P)`` positive definite; raises ConfigError otherwise."""
    if np.ndim(tau) == 0 and np.ndim(sigma) == 0:
        a, b = 1.0 / tau - 0.5 * L_Q, 1.0 / sigma - 0.5 * L_P
        val = K_norm**2 / (a * b) if a > 0 and b > 0 else math.inf
        if L_Q == 0 and L_P == 0:
            msg = f"step-size condition violated: tau*sigma*||K||^2 = {_fmt(tau * sigma * K_norm**2)} (must be < 1)"
        else:
            msg = (
                "step-size condition violated: ||K||^2 / ((1/tau - L_Q/2)(1/sigma - L_P/2)) = "
                f"{_fmt(val)} (must be < 1)"
            )
        if not val < 1.0:
            raise ConfigError(msg)
        return
    n, m = K.shape[1], K.shape[0]
    a1 = diagonal(np.broadcast_to(1.0 / np.asarray(tau, float) - 0.5 * L_Q, (n,)))
    a2 = diagonal(np.broadcast_to(1.0 / np.asarray(sigma, float) - 0.5 * L_P, (m,)))
    try:
        nrm = block_pd_check(a1, a2, K).norm
    except ValueError as exc:
        raise ConfigError(f"step-size condition violated: {exc}") from None
    if nrm > 1.0 + tol:
        raise ConfigError(
            f"step-size condition violated: ||Sigma^1/2 K T^1/2|| = {_fmt(nrm)} (must be <= 1)"
        )


def _setup(cfg: ExperimentConfig, inst: Instance) -> Setup:
    p, s, st = cfg.problem, cfg.solver, cfg.stop
    kind, lam, f = p["kind"], p["lambda"], inst.f
    shape = f.shape

    if kind == "rof-dual-fista":
        pair = build_rof_dual(f, lam)
        dim = pair.dim
        metric = Metric.identity(dim)
        step = s["fb_step"]
        L = pair.B.L
        c1 = check_theorem1(metric, L, step)
        if not c1.ok:
            raise ConfigError(
                f"step-size condition violated: fb_step * L / 2 = {_fmt(step * 4.0)} (must be < 1)"
            )
        gamma = step * 8.0
        sched = cfg.schedule(gamma=gamma if gamma < 2 else None)
        cap = sched.cap()
        c2 = bool(cap < 1 and check_theorem2(metric, L, step, cap, s["eps"]))
        setup = Setup(kind, {"theorem1": bool(c1.ok), "theorem2": c2}, cap, {"lambda_step": step})

        def run(callback):
            return inertial_fb(pair, metric, step, np.zeros(dim), sched, st["tol"], st["k_max"], callback)

        setup.run = run
        setup.image_of = lambda state: (pair.recover(state.x_curr), state.x_curr)
        return setup

    if kind == "rof-saddle-pd":
        prob = build_rof_saddle(f, lam)
        tau = math.sqrt(s["ratio"] * s["step_scale"] / 8.0)
        sigma = math.sqrt(s["step_scale"] / (8.0 * s["ratio"]))
        _pd_basic_check(tau, sigma, prob.K, 0.0, 0.0, GRAD_NORM)
        # normalized steps are zero when Q = P* = 0; any gamma in (0, 2) works
        sched = cfg.schedule(gamma=s["gamma"], delta=s["delta"])
        cap = sched.cap()
        x0, y0 = f.ravel().copy(), np.zeros(prob.dim_y)
    elif kind == "deconv-explicit":
        prob = build_deconv(f, inst.kernel, lam, "explicit", p["boundary"])
        st_ = scalar_steps_from_lemma(GRAD_NORM, prob.L_Q, 0.0, s["gamma"], s["delta"], s["r"])
        tau, sigma = st_.tau, st_.sigma
        _pd_basic_check(tau, sigma, prob.K, prob.L_Q, 0.0, GRAD_NORM)
        sched = cfg.schedule(gamma=s["gamma"])
        cap = sched.cap()
        x0, y0 = f.ravel().copy(), np.zeros(prob.dim_y)
    else:
        prob = build_deconv(f, inst.kernel, lam, "split-dual", p["boundary"])
        if s["precondition"]:
            try:
                st_ = diag_precond(prob.K, None, None, s["gamma"], s["delta"], s["r"], s["s"], fill=1.0)
            except (ValueError, RuntimeError) as exc:
                raise ConfigError(str(exc)) from None
            tau, sigma = st_.tau, st_.sigma
            _pd_basic_check(tau, sigma, prob.K, 0.0, 0.0, None, tol=1e-9)
        else:
            k_norm = op_norm_estimate(prob.K)
            st_ = scalar_steps_from_lemma(k_norm, 0.0, 0.0, s["gamma"], s["delta"], s["r"])
            # the lemma steps sit exactly on the boundary when L_Q = L_P = 0
            tau, sigma = st_.tau * s["step_scale"], st_.sigma
            _pd_basic_check(tau, sigma, prob.K, 0.0, 0.0, k_norm)
        sched = cfg.schedule(gamma=s["gamma"], delta=s["delta"])
        cap = sched.cap()
        x0, y0 = f.ravel().copy(), np.zeros(prob.dim_y)

    try:
        pdcfg = PDConfig(tau, sigma, sched, s["rho"], s["eps"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    alpha_chk = cap if cap < 1 else None
    if pdcfg.preconditioned:
        ok = alpha_chk is not None and check_theorem4(prob, tau, sigma, alpha_chk, s["eps"])
        checks = {"theorem4": bool(ok)}
    else:
        K_norm = GRAD_NORM if kind != "deconv-splitdual" else None
        ok = alpha_chk is not None and check_theorem3(prob, pdcfg, alpha_chk, K_norm, s["eps"])
        checks = {"theorem3": bool(ok)}
    if s["rho"] != 1.0:
        # relaxation is outside the inertial convergence theory
        checks["relaxation_covered"] = False

    def summary_steps(v):
        v = np.asarray(v, float)
        return float(v) if v.ndim == 0 else {"min": float(v.min()), "max": float(v.max())}

    setup = Setup(kind, checks, cap, {"tau": summary_steps(tau), "sigma": summary_steps(sigma)})

    def run(callback):
        return ipdfb(prob, pdcfg, x0, y0, st["tol"], st["k_max"], callback)

    setup.run = run
    npd = grad_op(*shape).dim_out
    setup.image_of = lambda state: (state.x_curr.reshape(shape), state.y_curr[:npd])
    return setup


# ---------------------------------------------------------------------------
# running


def _energies(cfg: ExperimentConfig, inst: Instance, u, p):
    lam = cfg.problem["lambda"]
    if cfg.problem["kind"].startswith("rof"):
        # over-relaxed dual iterates can leave the ball; the projection keeps
        # the dual value a valid lower bound
        return energies(u, project_dual_ball(p), inst.f, lam, "denoise")
    return energies(u, None, inst.f, lam, "deconv", H=inst.H, reference=inst.reference)


def _row_text(row: dict) -> list:
    out = []
    for key in TRACE_FIELDS:
        v = row[key]
        out.append(str(v) if key == "k" else repr(float(v)))
    return out


def run_experiment(cfg: ExperimentConfig, instance: Optional[Instance] = None) -> dict:
    """Run one experiment; writes trace CSV, images and a JSON summary.

    Returns the summary record.  Raises :class:`ConfigError` for invalid
    parameters and :class:`NumericalBlowUp` when the iterates stop being
    finite (after flushing the trace).
    """
    inst = build_instance(cfg) if instance is None else instance
    setup = _setup(cfg, inst)
    st, out = cfg.stop, cfg.output
    os.makedirs(out["dir"], exist_ok=True)

    u0, p0 = setup.image_of(_initial_state(cfg, inst))
    e0 = _energies(cfg, inst, u0, p0)
    gap0 = e0.gap
    thr = st["gap_threshold"] * gap0 if st["gap_relative"] else st["gap_threshold"]
    timing = out["timing"]
    t0 = time.perf_counter()
    info_state = {"hit": None, "last": e0, "min_gap": gap0 if np.isfinite(gap0) else math.inf, "blowup": None}

    fh = open(cfg.path("trace"), "w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_FIELDS)

    def callback(state, info):
        u, p = setup.image_of(state)
        k = state.k
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            info_state["blowup"] = k
            return True
        e = _energies(cfg, inst, u, p)
        info_state["last"] = e
        if not np.isfinite(e.primal):
            info_state["blowup"] = k
            return True
        info_state["min_gap"] = min(info_state["min_gap"], e.gap) if np.isfinite(e.gap) else info_state["min_gap"]
        if info_state["hit"] is None and e.gap < thr:
            info_state["hit"] = k
        if k % st["log_stride"] == 0:
            ms = (time.perf_counter() - t0) * 1e3 if timing else math.nan
            row = dict(
                k=k, alpha=info["alpha"], primal=e.primal, dual=e.dual, gap=e.gap,
                residual_m=info["residual"], e_k=info["e_k"], err_sum=state.err_sum, ms=ms,
            )
            writer.writerow(_row_text(row))
        return bool(st["stop_at_threshold"] and info_state["hit"] is not None)

    try:
        res = setup.run(callback)
    finally:
        fh.close()
    finite = np.all(np.isfinite(res.state.x_curr))
    if info_state["blowup"] is not None or getattr(res, "diverged", False) or not finite:
        raise NumericalBlowUp(
            f"non-finite iterate at k = {info_state['blowup'] or res.iterations}; trace kept in {cfg.path('trace')}"
        )

    u, _ = setup.image_of(res.state)
    write_pgm(cfg.path("result"), u, out["bits"])
    root, ext = os.path.splitext(cfg.path("result"))
    write_pgm(f"{root}_input{ext}", inst.f, out["bits"])

    last = info_state["last"]
    failed = [k for k, v in setup.checks.items() if not v]
    summary = {
        "problem": setup.kind,
        "status": "experimental" if failed else "validated",
        "failed_checks": failed,
        "checks": setup.checks,
        "alpha_cap": setup.alpha_cap,
        "steps": setup.steps,
        "iterations": int(res.iterations),
        "converged": bool(res.converged),
        "gap0": float(gap0),
        "threshold": float(thr),
        "iterations_to_threshold": info_state["hit"],
        "final": {"primal": last.primal, "dual": last.dual, "gap": last.gap},
        "reference_energy": inst.reference,
        "err_sum": float(res.state.err_sum),
    }
    with open(cfg.path("summary"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _initial_state(cfg: ExperimentConfig, inst: Instance):
    """Object with the attributes ``image_of`` reads, at k = 0."""

    s = SimpleNamespace()
    f = inst.f.ravel()
    npd = grad_op(*inst.f.shape).dim_out
    if cfg.problem["kind"] == "rof-dual-fista":
        s.x_curr = np.zeros(npd)
    else:
        s.x_curr = f.copy()
        ny = npd if cfg.problem["kind"] != "deconv-splitdual" else npd + f.size
        s.y_curr = np.zeros(ny)
    return s


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def compare_experiments(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Paired runs on one shared problem instance.

    Both configs must describe the same instance; only the solver kind
    may differ within one family (denoising or deconvolution).  With ``out_dir`` the two
    runs write into ``out_dir/a`` and ``out_dir/b`` instead of their own
    output directories.
    """
    pa, pb = cfg_a.problem, cfg_b.problem
    diff = sorted(k for k in pa if k != "kind" and pa[k] != pb[k])
    if diff:
        raise ConfigError(f"compare needs the same problem instance; [problem] differs in: {', '.join(diff)}")
    if pa["kind"].split("-")[0] != pb["kind"].split("-")[0]:
        raise ConfigError(f"cannot compare {pa['kind']} with {pb['kind']}: different problems")
    if out_dir is not None:
        cfg_a.output = dict(cfg_a.output, dir=os.path.join(out_dir, "a"))
        cfg_b.output = dict(cfg_b.output, dir=os.path.join(out_dir, "b"))
    elif os.path.abspath(cfg_a.output["dir"]) == os.path.abspath(cfg_b.output["dir"]):
        raise ConfigError("both configs write to the same output directory; pass --out")
    inst = build_instance(cfg_a)
    sa = run_experiment(cfg_a, inst)
    sb = run_experiment(cfg_b, inst)
    ka, kb = sa["iterations_to_threshold"], sb["iterations_to_threshold"]
    if ka is None and kb is None:
        faster = None
    elif kb is None or (ka is not None and ka < kb):
        faster = "a"
    elif ka is None or kb < ka:
        faster = "b"
    else:
        faster = "tie"
    result = {"a": sa, "b": sb, "faster": faster}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "compare.json"), "w") as fh:
            json.dump(_jsonable(result), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result


def emit_alpha_curve(eps: float, grid: int, path=None) -> np.ndarray:
    """``(gamma, alpha(gamma))`` on ``gamma_i = 2 i / (grid + 1)``, ``i = 1..grid``.

    Written as two whitespace-separated columns to ``path`` (a file name or
    an open text stream) when given.
    """
    if grid < 1:
        raise ConfigError("grid must be >= 1")
    gammas = 2.0 * np.arange(1, grid + 1) / (grid + 1)
    upper = 1.0 - 0.5 * gammas[-1]
    if not 0.0 <= eps <= upper:
        raise ConfigError(f"eps = {eps} outside [0, {upper:.6g}] for gamma = {gammas[-1]:.6g}")
    a = 4.0 + 2.0 * eps
    # same stable form as alpha_max_scalar, vectorized over the grid
    data = np.column_stack([gammas, 1.0 - a / (np.sqrt(9.0 - a * gammas) + 3.0)])
    if path is not None:
        lines = ["# gamma alpha"] + [f"{g!r} {a!r}" for g, a in data.tolist()]
        text = "\n".join(lines) + "\n"
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w") as fh:
                fh.write(text)
    return data


# ---------------------------------------------------------------------------
# command line


def _split_overrides(extra: list) -> dict:
    """``['--key', 'value', '--other=v']`` -> ``{'key': 'value', 'other': 'v'}``."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, val = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"option {tok} needs a value")
            key, val = tok[2:], extra[i + 1]
            i += 2
        key = key.replace("-", "_")
        if key not in KEY_SECTION:
            raise ConfigError(f"unknown option --{key}")
        out[key] = val
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inertialfb", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one experiment; --key value overrides a config key")
    r.add_argument("config")
    c = sub.add_parser("compare", help="paired runs of two configs on one problem instance")
    c.add_argument("config_a")
    c.add_argument("config_b")
    c.add_argument("--out", default=None, help="write runs to OUT/a and OUT/b")
    a = sub.add_parser("alpha-curve", help="tabulate the extrapolation bound alpha(gamma)")
    a.add_argument("--eps", type=float, default=1e-6)
    a.add_argument("--grid", type=int, default=199)
    a.add_argument("--out", default=None, help="output file (default: stdout)")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    args, extra = ap.parse_known_args(argv)
    try:
        if args.cmd == "alpha-curve":
            if extra:
                raise ConfigError(f"unexpected arguments: {' '.join(extra)}")
            emit_alpha_curve(args.eps, args.grid, args.out if args.out else sys.stdout)
            return 0
        overrides = _split_overrides(extra)
        if args.cmd == "run":
            summary = run_experiment(load_config(args.config, overrides))
            print(_one_line(summary))
            return 0
        res = compare_experiments(
            load_config(args.config_a, overrides), load_config(args.config_b, overrides), args.out
        )
        print("a: " + _one_line(res["a"]))
        print("b: " + _one_line(res["b"]))
        print(f"faster: {res['faster']}")
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalBlowUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def _one_line(s: dict) -> str:
    k = s["iterations_to_threshold"]
    return (
        f"{s['problem']} [{s['status']}] iterations={s['iterations']} "
        f"to_threshold={'not reached' if k is None else k} final_gap={s['final']['gap']:.6g}"
    )


if __name__ == "__main__":
    sys.exit(main())
