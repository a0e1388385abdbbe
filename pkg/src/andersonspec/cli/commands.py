"""Subcommand implementations; each returns a :class:`ResultEnvelope`."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import blockmodel, duality, transfer
from ..anderson import (
    AndersonConfig,
    build_anderson,
    dos_histogram,
    first_complex_xi,
    hatano_exponent,
    hatano_wings_and_loops,
    loop_point_cloud,
    thouless_exponent,
)
from ..blockmodel import BoundaryFactor, random_model
from ..errors import NoPlateau, NumericalError, VerificationFailure
from ..spectral import counting_curve, extract_breakpoints, lyapunov_curve
from .output import ResultEnvelope, Table, provenance


def run_tasks(fn, items: list, workers: int) -> list:
    """Ordered map over ``items``; a process pool when ``workers > 1``."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _anderson(config: dict, seed: int, w: float | None = None) -> AndersonConfig:
    mdl = config["model"]
    return AndersonConfig(tuple(mdl["dims"]), mdl["w"] if w is None else w, mdl["distribution"],
                          mdl["delta"], seed)


def _energy(config: dict) -> complex:
    return complex(config["energy"]["re"], config["energy"]["im"])


def _mean_se(values) -> tuple[float, float]:
    arr = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    return float(arr.mean()), se


# --------------------------------------------------------------------------
# spectrum


def _spectrum_task(args):
    config, seed = args
    bc = config["boundary"]
    bf = BoundaryFactor(bc["xi"], bc["phi"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cloud = loop_point_cloud(_anderson(config, seed), bf, bc["phi_steps"], bc["xi_values"])
    return cloud, [str(w.message) for w in caught]


def cmd_spectrum(config: dict) -> ResultEnvelope:
    seeds = config["model"]["seeds"]
    results = run_tasks(_spectrum_task, [(config, s) for s in seeds], config["numerics"]["workers"])
    table = Table(["re", "im", "xi", "phi", "seed"])
    loops, notes = {}, []
    for seed, (cloud, caught) in zip(seeds, results):
        for row in zip(cloud.re, cloud.im, cloud.xi, cloud.phi, cloud.seed):
            table.add(*row)
        if cloud.loop_count is not None:
            loops[str(seed)] = cloud.loop_count
        notes.extend(caught)
    return ResultEnvelope("spectrum", {"points": table}, provenance(config),
                          {"loop_counts": loops, "warnings": notes})


# --------------------------------------------------------------------------
# exponents / lyapunov


def _curve_task(args):
    config, seed, basis = args
    model = build_anderson(_anderson(config, seed))
    num = config["numerics"]
    eps = _energy(config)
    if basis == "H":
        curve = counting_curve(model, eps, num["xi_max"], num["grid_step"], num["n_angles"], num["tol"])
    else:
        xi_max = num["xi_max"]
        grid = None if xi_max is None else np.arange(int(math.floor(xi_max / num["grid_step"] + 1e-9)) + 1) * num["grid_step"]
        curve = lyapunov_curve(model, eps, grid, num["n_angles"], num["tol"], grid_step=num["grid_step"])
    try:
        report = extract_breakpoints(curve, model.m, num["refine"])
        status = "ok"
    except NoPlateau as exc:
        report, status = None, f"no-plateau: {exc}"
    return curve, report, status


def _curve_command(config: dict, basis: str, name: str) -> ResultEnvelope:
    seeds = config["model"]["seeds"]
    results = run_tasks(_curve_task, [(config, s, basis) for s in seeds], config["numerics"]["workers"])
    curve_t = Table(["seed", "xi", "g", "n_angles", "stalled"])
    bp_t = Table(["seed", "xi", "jump"])
    ens_t = Table(["seed", "xi_min", "mean_positive", "status"])
    diag = {}
    for seed, (curve, report, status) in zip(seeds, results):
        for x, g, n, st in zip(curve.xi_grid, curve.g_values, curve.n_angles, curve.stalled):
            curve_t.add(seed, float(x), float(g), int(n), bool(st))
        if report is None:
            ens_t.add(seed, math.nan, float(curve.g_values[0]), status)
            continue
        for x, j in report.breakpoints:
            bp_t.add(seed, x, j)
        ens_t.add(seed, report.xi_min, report.mean_positive, status)
        diag[str(seed)] = report.diagnostics
    rows = [r for r in ens_t.rows if r[3] == "ok"]
    xm, xs = _mean_se(r[1] for r in rows)
    pm, ps = _mean_se(r[2] for r in rows)
    summary = Table(["quantity", "mean", "stderr", "samples"])
    summary.add("xi_min", xm, xs, len(rows))
    summary.add("mean_positive", pm, ps, len(rows))
    tables = {"curve": curve_t, "breakpoints": bp_t, "ensemble": ens_t, "summary": summary}
    return ResultEnvelope(name, tables, provenance(config), {"per_seed": diag, "basis": basis})


def cmd_exponents(config: dict) -> ResultEnvelope:
    return _curve_command(config, "H", "exponents")


def cmd_lyapunov(config: dict) -> ResultEnvelope:
    return _curve_command(config, "K", "lyapunov")


# --------------------------------------------------------------------------
# hatano


def _hatano_task(args):
    config, seed, w = args
    return hatano_exponent(_energy(config), _anderson(config, seed, w))


def _xi_c_task(args):
    config, seed = args
    h = config["hatano"]
    model = build_anderson(_anderson(config, seed))
    return first_complex_xi(model, config["boundary"]["phi"], h["xi_c_max"], h["xi_c_grid"])


def cmd_hatano(config: dict) -> ResultEnvelope:
    seeds = config["model"]["seeds"]
    h = config["hatano"]
    workers = config["numerics"]["workers"]
    eps = _energy(config)
    tables: dict[str, Table] = {}
    diag: dict = {}
    one_d = len(config["model"]["dims"]) == 1

    xi_c = run_tasks(_xi_c_task, [(config, s) for s in seeds], workers)
    xc_t = Table(["seed", "xi_c"])
    for s, v in zip(seeds, xi_c):
        xc_t.add(s, v)
    tables["xi_c"] = xc_t
    diag["xi_c_mean"], diag["xi_c_stderr"] = _mean_se(xi_c)
    if not one_d:
        diag["note"] = "only the first-complex-xi scan applies beyond one dimension"
        return ResultEnvelope("hatano", tables, provenance(config), diag)

    w_values = h["w_values"] or [config["model"]["w"]]
    tasks = [(config, s, w) for w in w_values for s in seeds]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        values = run_tasks(_hatano_task, tasks, workers)
    exp_t = Table(["w", "seed", "exponent"])
    sweep_t = Table(["w", "mean", "stderr", "samples"])
    for (_, s, w), v in zip(tasks, values):
        exp_t.add(w, s, v)
    for w in w_values:
        vals = [v for (_, _, ww), v in zip(tasks, values) if ww == w]
        mean, se = _mean_se(vals)
        sweep_t.add(w, mean, se, len(vals))
    tables["exponents"] = exp_t
    tables["w_sweep"] = sweep_t

    base = _anderson(config, seeds[0])
    wl = hatano_wings_and_loops(base, config["boundary"]["xi"], config["boundary"]["phi"])
    spec_t = Table(["kind", "re", "im"])
    for e in wl.wings:
        spec_t.add("wing", float(e), 0.0)
    for e in wl.loop:
        spec_t.add("loop", float(e.real), float(e.imag))
    tables["wings_loop"] = spec_t
    diag["wings"] = int(wl.wings.size)
    diag["loop_points"] = int(wl.loop.size)
    diag["wing_bound_ok"] = wl.wing_bound_ok
    diag["wings_resolved"] = wl.wings_resolved
    diag["loop_resolved"] = wl.loop_resolved
    diag["loop_level_defect"] = wl.loop_level_defect
    diag["loop_level_ok"] = wl.loop_level_ok

    summary = Table(["method", "value", "stderr"])
    mean, se = _mean_se(values[: len(seeds)])
    summary.add("hatano_exponent", mean, se)
    if eps.imag == 0:
        dos = dos_histogram(base, h["realizations"], h["bins"])
        summary.add("thouless", thouless_exponent(dos, eps.real), math.nan)
    if h["oracle_length"] > 0:
        ora = [transfer.lyapunov_oracle(_anderson(config, s), eps, h["oracle_length"]).positive[0] for s in seeds]
        mean, se = _mean_se(ora)
        summary.add("lyapunov_oracle", mean, se)
    tables["summary"] = summary
    return ResultEnvelope("hatano", tables, provenance(config), diag)


# --------------------------------------------------------------------------
# dos


def cmd_dos(config: dict) -> ResultEnvelope:
    d = config["dos"]
    cfg = _anderson(config, config["model"]["seeds"][0])
    rng = tuple(d["range"]) if "range" in d else None
    hist = dos_histogram(cfg, d["realizations"], d["bins"], rng)
    table = Table(["lo", "hi", "density"])
    for lo, hi, rho in zip(hist.edges[:-1], hist.edges[1:], hist.density):
        table.add(float(lo), float(hi), float(rho))
    diag = {"integral": hist.integral(), "realizations": hist.realizations}
    eps = _energy(config)
    if eps.imag == 0:
        diag["thouless_exponent"] = thouless_exponent(hist, eps.real)
    return ResultEnvelope("dos", {"histogram": table}, provenance(config), diag)


# --------------------------------------------------------------------------
# verify

VERIFY_THRESHOLDS = {
    "duality": 1e-8,
    "eigenvalue_duality": 1e-6,
    "k_duality": 1e-8,
    "m_k_relation": 1e-8,
    "theta_q": 1e-7,
    "symplectic": 1e-8,
    "j_symmetry": 1e-12,
    "s3_symmetry": 1e-12,
    "k_inverse_spectrum": 1e-7,
    "hermitian_unit_circle": 1e-12,
}


def verify_suite(master_seed: int, instances: int) -> dict[str, float]:
    """Worst residual per named check over a reproducible random sweep."""
    rng = np.random.default_rng(master_seed)
    worst = dict.fromkeys(VERIFY_THRESHOLDS, 0.0)

    def bump(name, value):
        worst[name] = max(worst[name], float(value))

    for _ in range(instances):
        n, m = int(rng.integers(3, 7)), int(rng.integers(1, 4))
        model = random_model(rng, n, m, unitary_corner=True)
        eps = complex(rng.normal(), rng.normal())
        s = math.exp(rng.uniform(math.log(0.5), 6.0)) * np.exp(1j * rng.uniform(0, 2 * math.pi))
        bump("duality", duality.duality_residual(model, eps, s))
        bump("eigenvalue_duality", duality.eigenvalue_duality_defect(model, s))
        t = math.exp(rng.uniform(-2, 2)) * np.exp(1j * rng.uniform(0, 2 * math.pi))
        bump("k_duality", duality.k_duality_residual(model, eps, t))
        bump("m_k_relation", duality.mk_residual(model, eps, t))
        bump("theta_q", duality.theta_q_residual(model, eps))
        T = transfer.build_transfer(model, eps)
        scale = max(1.0, float(np.max(np.abs(T.matrix))) ** 2)
        bump("symplectic", max(transfer.symplectic_residuals(T)) / scale)
        r_j, r_s, dist = duality.symmetry_residuals(duality.DoubledModel(model), t)
        bump("j_symmetry", r_j)
        bump("s3_symmetry", r_s)
        bump("k_inverse_spectrum", dist)
        h = blockmodel.realize_h(model, BoundaryFactor(0.0, rng.uniform(0, 2 * math.pi)))
        bump("hermitian_unit_circle", np.max(np.abs(h - h.conj().T)))
    return worst


def cmd_verify(config: dict) -> ResultEnvelope:
    v = config["verify"]
    worst = verify_suite(v["master_seed"], v["instances"])
    table = Table(["check", "max_residual", "threshold", "passed"])
    failed = []
    for name, value in worst.items():
        ok = value < VERIFY_THRESHOLDS[name]
        table.add(name, value, VERIFY_THRESHOLDS[name], ok)
        if not ok:
            failed.append(name)
    return ResultEnvelope("verify", {"checks": table}, provenance(config), {"failed": failed})


def verification_failure(env: ResultEnvelope) -> VerificationFailure | None:
    """First failing check of a verify envelope, if any."""
    for name, value, threshold, ok in env.tables["checks"].rows:
        if not ok:
            return VerificationFailure(name, value, threshold)
    return None


COMMAND_TABLE = {
    "spectrum": cmd_spectrum,
    "exponents": cmd_exponents,
    "lyapunov": cmd_lyapunov,
    "hatano": cmd_hatano,
    "verify": cmd_verify,
    "dos": cmd_dos,
}

__all__ = ["COMMAND_TABLE", "NumericalError", "run_tasks", "verification_failure", "verify_suite"]
