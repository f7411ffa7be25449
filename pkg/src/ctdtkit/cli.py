"""Declarative experiment runner emitting deterministic CSV artifacts.

Configs are TOML files with a versioned ``schema`` field and a ``kind``
that must match the chosen subcommand.  All numeric output is written
with 17 significant digits so re-running an identical config and seed
reproduces every file byte for byte.  Exit codes: 0 on success
(divergence findings included), 2 for config problems, 3 for numeric
failures such as non-converging iterations.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np
import tomli

from . import __version__
from .certify import (
    GainConstants,
    certificate_lti_dtc,
    certificate_rm,
    certificate_smallgain,
    lti_constants,
    sampling_bound_Tn,
    scalar_instability_threshold,
    scalar_sample_multiplier,
    small_gain_holds,
)
from .mpc import (
    condense,
    dare_solve,
    double_integrator_problem,
    gradient_map_lipschitz,
    make_suboptimal_ctdt,
    rm_lognorm_contour,
    unconstrained_gain,
)
from .norms import log_norm_2_weighted, spectral_abscissa
from .simulate import _box_boundary_grid, empirical_decay_rate, simulate_batch
from .systems import LtiSystem, make_lti_ctdt, zoh_discretize

KINDS = (
    "certify",
    "simulate",
    "mpc-closedform",
    "mpc-suboptimal",
    "contour",
    "example1",
    "sweep",
)


class ConfigError(Exception):
    """Invalid or incomplete experiment configuration."""


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def _req(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing field {where}.{key}")
    return table[key]


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {where} must be a number")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"field {where} must be an integer")
    return value


def _as_matrix(value, where: str) -> np.ndarray:
    try:
        mat = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {where} must be a matrix (list of rows)") from exc
    if mat.ndim != 2:
        raise ConfigError(f"field {where} must be a matrix (list of rows)")
    return mat


def _as_vector(value, where: str) -> np.ndarray:
    try:
        vec = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {where} must be a list of numbers") from exc
    if vec.ndim != 1:
        raise ConfigError(f"field {where} must be a list of numbers")
    return vec


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    if _req(cfg, "schema", "config") != 1:
        raise ConfigError("field config.schema must be 1")
    kind = _req(cfg, "kind", "config")
    if kind not in KINDS:
        raise ConfigError(f"field config.kind must be one of {', '.join(KINDS)}")
    return cfg


def _config_sha256(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_manifest(path: str, manifest: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _lti_from_config(cfg: dict) -> LtiSystem:
    block = _req(cfg, "system", "config")
    return LtiSystem(
        A=_as_matrix(_req(block, "A", "system"), "system.A"),
        B=_as_matrix(_req(block, "B", "system"), "system.B"),
        C=_as_matrix(_req(block, "C", "system"), "system.C"),
        D=_as_matrix(_req(block, "D", "system"), "system.D"),
    )


def _gains_from_config(cfg: dict) -> GainConstants:
    cert = cfg.get("certify", {})
    if "gains" in cert:
        tab = cert["gains"]
        rm_rate = tab.get("rm_rate")
        return GainConstants(
            lip_x_f=_as_float(_req(tab, "lip_x_f", "certify.gains"), "certify.gains.lip_x_f"),
            lip_z_f=_as_float(_req(tab, "lip_z_f", "certify.gains"), "certify.gains.lip_z_f"),
            oslip_x_f=_as_float(
                _req(tab, "oslip_x_f", "certify.gains"), "certify.gains.oslip_x_f"
            ),
            lip_x_G=_as_float(_req(tab, "lip_x_G", "certify.gains"), "certify.gains.lip_x_G"),
            lip_z_G=_as_float(_req(tab, "lip_z_G", "certify.gains"), "certify.gains.lip_z_G"),
            rm_rate=None if rm_rate is None else _as_float(rm_rate, "certify.gains.rm_rate"),
        )
    if "system" in cfg:
        return lti_constants(_lti_from_config(cfg))
    raise ConfigError("missing field certify.gains (or a system block to derive it)")


def _mpc_from_config(cfg: dict):
    block = _req(cfg, "mpc", "config")
    delta = _as_float(block.get("delta", 0.2), "mpc.delta")
    horizon = _as_int(block.get("horizon", 5), "mpc.horizon")
    gamma = _as_float(block.get("gamma", 0.0), "mpc.gamma")
    lb = _as_vector(block.get("lb", [-10.0, -3.0]), "mpc.lb")
    ub = _as_vector(block.get("ub", [10.0, 3.0]), "mpc.ub")
    if "A" in block or "B" in block:
        A = _as_matrix(_req(block, "A", "mpc"), "mpc.A")
        B = _as_matrix(_req(block, "B", "mpc"), "mpc.B")
        Ad, Bd = zoh_discretize(A, B, delta)
        Q = _as_matrix(block.get("Q", np.eye(A.shape[0]).tolist()), "mpc.Q")
        R = _as_matrix(block.get("R", np.eye(B.shape[1]).tolist()), "mpc.R")
        from .mpc import MpcProblem

        P = dare_solve(Ad, Bd, Q, R)
        return MpcProblem(
            ct_A=A, ct_B=B, Ad=Ad, Bd=Bd, horizon=horizon, Q=Q, R=R, P=P,
            gamma=gamma, lb=lb, ub=ub,
        )
    return double_integrator_problem(
        delta=delta, horizon=horizon, gamma=gamma, lb=tuple(lb), ub=tuple(ub)
    )


def _initial_conditions(cfg: dict, n_x: int, n_z: int, seed: int):
    """Resolve the initial-condition spec to (x0, z0, per-run seed) rows."""
    run = _req(cfg, "run", "config")
    spec = _req(run, "initial", "run")
    kind = _req(spec, "kind", "run.initial")
    if kind == "random":
        count = _as_int(_req(spec, "count", "run.initial"), "run.initial.count")
        out = []
        for k in range(count):
            rng = np.random.default_rng(seed + k)
            v = rng.uniform(0.0, 1.0, n_x)
            out.append((v / np.linalg.norm(v), np.zeros(n_z), seed + k))
        return out
    if kind == "explicit":
        x0s = _as_matrix(_req(spec, "x0", "run.initial"), "run.initial.x0")
        z0s = _as_matrix(_req(spec, "z0", "run.initial"), "run.initial.z0")
        if x0s.shape[0] != z0s.shape[0]:
            raise ConfigError("field run.initial.x0 and run.initial.z0 differ in length")
        return [(x0s[k], z0s[k], seed) for k in range(x0s.shape[0])]
    if kind == "boundary":
        box = _as_matrix(_req(spec, "box", "run.initial"), "run.initial.box")
        if box.shape != (n_x, 2):
            raise ConfigError("field run.initial.box must list [lo, hi] per state")
        density = _as_int(spec.get("density", 11), "run.initial.density")
        z0 = _as_vector(spec.get("z0", np.zeros(n_z).tolist()), "run.initial.z0")
        pts = _box_boundary_grid(box[:, 0], box[:, 1], density)
        return [(pts[k], z0.copy(), seed) for k in range(pts.shape[0])]
    raise ConfigError("field run.initial.kind must be random, explicit, or boundary")


def _run_block(cfg: dict):
    run = _req(cfg, "run", "config")
    return {
        "n": _as_int(_req(run, "n", "run"), "run.n"),
        "T": _as_float(_req(run, "T", "run"), "run.T"),
        "t_end": _as_float(_req(run, "t_end", "run"), "run.t_end"),
        "substeps": _as_int(run.get("substeps", 100), "run.substeps"),
        "update_at_zero": bool(run.get("update_at_zero", False)),
    }


def _traj_csv_rows(traj):
    sample_set = frozenset(int(i) for i in traj.sample_indices)
    for row in range(traj.times.size):
        cells = [_fmt(traj.times[row])]
        cells.extend(_fmt(v) for v in traj.x_samples[row])
        cells.extend(_fmt(v) for v in traj.z_samples[row])
        cells.append("1" if row in sample_set else "0")
        yield cells


def _traj_header(n_x: int, n_z: int) -> str:
    names = ["t"]
    names.extend(f"x{i + 1}" for i in range(n_x))
    names.extend(f"z{i + 1}" for i in range(n_z))
    names.append("is_sample")
    return ",".join(names)


def _simulate_and_summarize(sys_obj, ics, run, prefix, out_dir, threads):
    trajs = simulate_batch(
        sys_obj,
        [(x0, z0) for x0, z0, _ in ics],
        run["t_end"],
        substeps=run["substeps"],
        update_at_zero=run["update_at_zero"],
        threads=threads,
    )
    outputs = []
    summary_rows = []
    run_rows = []
    for k, traj in enumerate(trajs):
        name = f"{prefix}_run{k:03d}.csv"
        _write_csv(
            os.path.join(out_dir, name),
            _traj_header(sys_obj.n_x, sys_obj.n_z),
            _traj_csv_rows(traj),
        )
        outputs.append(name)
        if traj.diverged:
            rate = math.nan
        else:
            try:
                rate = empirical_decay_rate(traj)
            except ValueError:
                rate = math.nan
        summary_rows.append(
            [str(k), str(ics[k][2]), _fmt(rate), "1" if traj.diverged else "0"]
        )
        run_rows.append(
            {
                "run": k,
                "seed": ics[k][2],
                "decay_rate": None if math.isnan(rate) else rate,
                "diverged": bool(traj.diverged),
            }
        )
    summary_name = f"{prefix}_summary.csv"
    _write_csv(
        os.path.join(out_dir, summary_name), "run,seed,decay_rate,diverged", summary_rows
    )
    outputs.append(summary_name)
    return trajs, outputs, run_rows


def _box_exit_count(trajs, x_box) -> int:
    lo, hi = x_box
    exits = 0
    for traj in trajs:
        inside = np.all((traj.x_samples >= lo - 1e-9) & (traj.x_samples <= hi + 1e-9))
        if not inside or traj.diverged:
            exits += 1
    return exits


def cmd_certify(cfg, out_dir, prefix, seed, threads):
    g = _gains_from_config(cfg)
    cert = cfg.get("certify", {})
    n_values = [
        _as_int(v, "certify.n_values") for v in cert.get("n_values", [1, 2, 5, 10])
    ]
    T_values = [
        _as_float(v, "certify.T_values") for v in cert.get("T_values", [0.01, 0.1, 1.0])
    ]
    try:
        sg = small_gain_holds(g)
    except ValueError:
        sg = False
    lti = _lti_from_config(cfg) if "system" in cfg else None

    rho_rows = []
    for n in n_values:
        for T in T_values:
            built = []
            if sg:
                built.append(certificate_smallgain(g, n, T))
            if g.rm_rate is not None and g.lip_z_G < 1.0:
                built.append(certificate_rm(g, n, T))
            if lti is not None:
                try:
                    built.append(certificate_lti_dtc(lti, n, T))
                except ValueError:
                    pass
            for c in built:
                rho_rows.append(
                    [
                        c.kind,
                        str(n),
                        _fmt(T),
                        _fmt(c.spectral_radius),
                        "1" if c.is_stable else "0",
                        _fmt(c.decay_rate if c.decay_rate is not None else math.nan),
                        _fmt(
                            c.transient_prefactor
                            if c.transient_prefactor is not None
                            else math.nan
                        ),
                    ]
                )
    tn_table = {}
    if g.rm_rate is not None and g.lip_z_G < 1.0:
        for n in n_values:
            tn_table[n] = sampling_bound_Tn(g, n)

    outputs = []
    rho_name = f"{prefix}_rho.csv"
    _write_csv(
        os.path.join(out_dir, rho_name),
        "kind,n,T,rho,stable,decay_rate,prefactor",
        rho_rows,
    )
    outputs.append(rho_name)
    if tn_table:
        tn_name = f"{prefix}_tn.csv"
        _write_csv(
            os.path.join(out_dir, tn_name),
            "n,T_n",
            ([str(n), _fmt(v)] for n, v in sorted(tn_table.items())),
        )
        outputs.append(tn_name)

    report = [
        f"small-gain condition: {'holds' if sg else 'fails'}",
        "gains: "
        + ", ".join(
            f"{k}={_fmt(v)}"
            for k, v in (
                ("lip_x_f", g.lip_x_f),
                ("lip_z_f", g.lip_z_f),
                ("oslip_x_f", g.oslip_x_f),
                ("lip_x_G", g.lip_x_G),
                ("lip_z_G", g.lip_z_G),
            )
        )
        + (f", rm_rate={_fmt(g.rm_rate)}" if g.rm_rate is not None else ""),
    ]
    for n, v in sorted(tn_table.items()):
        report.append(f"certified period bound: T({n}) = {_fmt(v)}")
    report_name = f"{prefix}_report.txt"
    with open(os.path.join(out_dir, report_name), "w", newline="\n") as fh:
        fh.write("\n".join(report) + "\n")
    outputs.append(report_name)
    print("\n".join(report))
    summary = {
        "small_gain": sg,
        "sampling_bounds": {str(n): v for n, v in sorted(tn_table.items())},
        "certificates": len(rho_rows),
    }
    return outputs, summary


def cmd_simulate(cfg, out_dir, prefix, seed, threads):
    lti = _lti_from_config(cfg)
    run = _run_block(cfg)
    sys_obj = make_lti_ctdt(lti, n=run["n"], T=run["T"])
    ics = _initial_conditions(cfg, sys_obj.n_x, sys_obj.n_z, seed)
    trajs, outputs, run_rows = _simulate_and_summarize(
        sys_obj, ics, run, prefix, out_dir, threads
    )
    diverged = sum(1 for t in trajs if t.diverged)
    print(f"{len(trajs)} runs, {diverged} diverged")
    return outputs, {"runs": run_rows, "diverged": diverged}


def cmd_mpc_suboptimal(cfg, out_dir, prefix, seed, threads):
    prob = _mpc_from_config(cfg)
    run = _run_block(cfg)
    step = cfg.get("mpc", {}).get("step")
    sys_obj = make_suboptimal_ctdt(
        prob, n=run["n"], T=run["T"],
        step=None if step is None else _as_float(step, "mpc.step"),
    )
    ics = _initial_conditions(cfg, sys_obj.n_x, sys_obj.n_z, seed)
    trajs, outputs, run_rows = _simulate_and_summarize(
        sys_obj, ics, run, prefix, out_dir, threads
    )
    summary = {"runs": run_rows, "diverged": sum(1 for t in trajs if t.diverged)}
    run_cfg = cfg.get("run", {})
    if "x_box" in run_cfg:
        box = _as_matrix(run_cfg["x_box"], "run.x_box")
        exits = _box_exit_count(trajs, (box[:, 0], box[:, 1]))
        summary["box_exits"] = exits
        print(f"box exits: {exits}")
    print(f"{len(trajs)} runs, {summary['diverged']} diverged")
    return outputs, summary


def cmd_mpc_closedform(cfg, out_dir, prefix, seed, threads):
    prob = _mpc_from_config(cfg)
    if prob.gamma != 0.0:
        raise ConfigError("field mpc.gamma must be 0 for the closed-form loop")
    K, a_cl = unconstrained_gain(prob)
    cost = condense(prob)
    step = cost.default_step()
    rows = []
    for i in range(prob.P.shape[0]):
        for j in range(prob.P.shape[1]):
            rows.append([f"P_{i + 1}{j + 1}", _fmt(prob.P[i, j])])
    for i in range(a_cl.shape[0]):
        for j in range(a_cl.shape[1]):
            rows.append([f"A_cl_{i + 1}{j + 1}", _fmt(a_cl[i, j])])
    mu_2p = log_norm_2_weighted(a_cl, prob.P)
    alpha = spectral_abscissa(a_cl)
    rows.append(["lognorm_P_A_cl", _fmt(mu_2p)])
    rows.append(["abscissa_A_cl", _fmt(alpha)])
    rows.append(["hessian_modulus", _fmt(cost.mu)])
    rows.append(["hessian_smoothness", _fmt(cost.ell)])
    rows.append(["default_step", _fmt(step)])
    rows.append(["update_lipschitz", _fmt(gradient_map_lipschitz(cost, step))])
    name = f"{prefix}_closedform.csv"
    _write_csv(os.path.join(out_dir, name), "name,value", rows)
    print(f"lognorm_P(A_cl) = {_fmt(mu_2p)}, abscissa = {_fmt(alpha)}")
    return [name], {"lognorm_P_A_cl": mu_2p, "abscissa_A_cl": alpha}


def cmd_contour(cfg, out_dir, prefix, seed, threads):
    block = _req(cfg, "contour", "config")
    gammas = [_as_float(v, "contour.gammas") for v in _req(block, "gammas", "contour")]

    def axis(key):
        spec = _as_vector(_req(block, key, "contour"), f"contour.{key}")
        if spec.size != 3:
            raise ConfigError(f"field contour.{key} must be [lo, hi, count]")
        return np.linspace(spec[0], spec[1], int(spec[2]))

    x1 = axis("x1")
    x2 = axis("x2")
    fd_step = _as_float(block.get("fd_step", 0.01), "contour.fd_step")
    outputs = []
    summary = {}
    base = cfg.get("mpc", {})
    for gamma in gammas:
        cfg_g = dict(cfg)
        cfg_g["mpc"] = dict(base)
        cfg_g["mpc"]["gamma"] = gamma
        prob = _mpc_from_config(cfg_g)
        grid = rm_lognorm_contour(prob, x1, x2, fd_step=fd_step, threads=threads)
        rows = []
        for i in range(x1.size):
            for j in range(x2.size):
                rows.append([_fmt(x1[i]), _fmt(x2[j]), _fmt(grid[i, j])])
        name = f"{prefix}_contour_gamma{gamma:g}.csv"
        _write_csv(os.path.join(out_dir, name), "x1,x2,mu", rows)
        outputs.append(name)
        finite = grid[np.isfinite(grid)]
        summary[f"gamma_{gamma:g}"] = {
            "cells": int(grid.size),
            "failed": int(np.size(grid) - finite.size),
            "nonnegative": int(np.sum(finite >= 0.0)),
        }
        print(f"gamma={gamma:g}: {finite.size}/{grid.size} cells, "
              f"{int(np.sum(finite >= 0.0))} nonnegative")
    return outputs, summary


def cmd_example1(cfg, out_dir, prefix, seed, threads):
    block = cfg.get("example1", {})
    a = _as_float(block.get("a", 1.0), "example1.a")
    b = _as_float(block.get("b", 1.0), "example1.b")
    c = _as_float(block.get("c", -3.0), "example1.c")
    d = _as_float(block.get("d", 0.0), "example1.d")
    n = _as_int(block.get("n", 1), "example1.n")
    T_values = [
        _as_float(v, "example1.T_values")
        for v in block.get("T_values", [0.5, 0.9, 1.0, 1.2])
    ]
    t_end = _as_float(block.get("t_end", 12.0), "example1.t_end")
    substeps = _as_int(block.get("substeps", 100), "example1.substeps")
    x0 = _as_float(block.get("x0", 1.0), "example1.x0")
    lti = LtiSystem(
        A=np.array([[a]]), B=np.array([[b]]), C=np.array([[c]]), D=np.array([[d]])
    )
    rows = []
    for T in T_values:
        mult = scalar_sample_multiplier(a, b, c, d, T)
        sys_obj = make_lti_ctdt(lti, n=n, T=T)
        traj = simulate_batch(
            sys_obj, [(np.array([x0]), np.zeros(1))], t_end, substeps=substeps,
            threads=1,
        )[0]
        xs = traj.x_samples[traj.sample_indices][:, 0]
        # skip the first interval: it still holds the initial z
        ratios = xs[2:] / xs[1:-1]
        measured = float(np.mean(ratios)) if ratios.size else math.nan
        rows.append(
            [
                _fmt(T),
                _fmt(mult),
                _fmt(measured),
                "1" if traj.diverged else "0",
            ]
        )
    name = f"{prefix}_example1.csv"
    _write_csv(os.path.join(out_dir, name), "T,multiplier,measured_ratio,diverged", rows)
    summary = {}
    try:
        threshold = scalar_instability_threshold(a, b, c, d)
        summary["instability_threshold"] = threshold
        print(f"instability threshold: T = {_fmt(threshold)}")
    except ValueError:
        summary["instability_threshold"] = None
    return [name], summary


def cmd_sweep(cfg, out_dir, prefix, seed, threads):
    block = _req(cfg, "sweep", "config")
    T_start = _as_float(_req(block, "T_start", "sweep"), "sweep.T_start")
    T_stop = _as_float(_req(block, "T_stop", "sweep"), "sweep.T_stop")
    T_step = _as_float(_req(block, "T_step", "sweep"), "sweep.T_step")
    if T_step <= 0 or T_stop < T_start:
        raise ConfigError("field sweep.T_step must be positive and T_stop >= T_start")
    count = _as_int(block.get("count", 5), "sweep.count")
    t_end = _as_float(block.get("t_end", 400.0), "sweep.t_end")
    substeps = _as_int(block.get("substeps", 10), "sweep.substeps")
    n = _as_int(block.get("n", 1), "sweep.n")
    prob = _mpc_from_config(cfg) if "mpc" in cfg else double_integrator_problem()
    ics = []
    for k in range(count):
        rng = np.random.default_rng(seed + k)
        v = rng.uniform(0.0, 1.0, prob.n_x)
        ics.append((v / np.linalg.norm(v), np.zeros(prob.n_z)))
    rows = []
    first_diverging = None
    T = T_start
    while T <= T_stop + 1e-12:
        sys_obj = make_suboptimal_ctdt(prob, n=n, T=float(T))
        trajs = simulate_batch(sys_obj, ics, t_end, substeps=substeps, threads=threads)
        n_div = sum(1 for t in trajs if t.diverged)
        rates = []
        for t in trajs:
            if not t.diverged:
                try:
                    rates.append(empirical_decay_rate(t))
                except ValueError:
                    pass
        max_rate = max(rates) if rates else math.nan
        rows.append([_fmt(T), str(n_div), _fmt(max_rate)])
        if n_div > 0 and first_diverging is None:
            first_diverging = float(T)
        T = T + T_step
    name = f"{prefix}_sweep.csv"
    _write_csv(os.path.join(out_dir, name), "T,diverged_runs,max_decay_rate", rows)
    if first_diverging is None:
        print("no divergence within the swept range")
    else:
        print(f"first diverging period: T = {_fmt(first_diverging)}")
    return [name], {"first_diverging_T": first_diverging}


_COMMANDS = {
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "mpc-closedform": cmd_mpc_closedform,
    "mpc-suboptimal": cmd_mpc_suboptimal,
    "contour": cmd_contour,
    "example1": cmd_example1,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctdtkit",
        description="certify and simulate sampled interconnections of CT plants and DT updates",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in KINDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="parallel runs or grid cells")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg["kind"] != args.command:
            raise ConfigError(
                f"field config.kind is {cfg['kind']!r} but the subcommand is {args.command!r}"
            )
        seed = args.seed
        if seed is None:
            seed = cfg.get("run", {}).get("seed", cfg.get("seed", 0))
            seed = _as_int(seed, "run.seed")
        prefix = cfg.get("output", {}).get("prefix", cfg["kind"].replace("-", "_"))
        os.makedirs(args.out, exist_ok=True)
        outputs, summary = _COMMANDS[args.command](
            cfg, args.out, prefix, seed, max(1, args.threads)
        )
        manifest = {
            "kind": cfg["kind"],
            "config_sha256": _config_sha256(args.config),
            "seed": seed,
            "version": __version__,
            "outputs": outputs,
            "summary": summary,
        }
        manifest_name = f"{prefix}_manifest.json"
        _write_manifest(os.path.join(args.out, manifest_name), manifest)
        print(f"wrote {len(outputs) + 1} files to {args.out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
