"""Experiment runner: seeded pipelines from a JSON config to on-disk artifacts.

Every subcommand resolves its configuration the same way (defaults, then
config file, then flags), hashes the scientific part of it, runs serially,
and writes its artifacts plus a manifest.json into the output directory.
Passing a previously emitted manifest as --config reruns that pipeline; in
serial mode the artifacts come back byte-identical, which is the
reproducibility contract the tests pin down.

Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures (lost contraction, escaped support, oracle residuals).
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import analysis, reports
from .eig import (
    DENSE_LIMIT,
    build_start_valleys,
    dense_oracle,
    inexact_block_iteration,
    pinvit,
    shift_invert_oracle,
)
from .errors import ConfigError, NumericalError
from .fem import (
    SubgridSpec,
    assemble,
    build_cutoff,
    cell_mass,
    dump_system,
    mass_norm,
    system_digest,
)
from .potential import (
    GridSpec,
    analyze_geometry,
    gen_domino,
    gen_iid,
    gen_periodic,
    gen_planted,
    gen_tensor,
    make_rng,
    save_field,
)
from .schwarz import build_preconditioner, compose_smoother, estimate_contraction

OUT_ROOT_ENV = "SCHRODLOC_OUT"

DEFAULTS = {
    "field": {
        "kind": "iid",
        "d": 1,
        "inv_eps": 64,
        "alpha": 1.0,
        "beta": None,  # resolved to 8/eps^2
        "p_beta": 0.5,
        "p_alpha": 0.4,
        "widths": [2],
        "level_decay": 0.5,
        "max_level": 4,
    },
    "field_b": None,
    "subgrid": {"m": 4},
    "preconditioner": {"mode": "adaptive", "c_stable": 1.0, "target_gamma": 0.5},
    "iteration": {"K": None, "tol": 1e-3, "steps": 8},
    "analysis": {
        "n_ev": 6,
        "k_max": 10,
        "k_gap_max": 8,
        "gap_target": 0.5,
        "samples": 50,
        "schedule": "linear",
        "source_cell": None,
        "centers": "auto",
        "friedrichs_mode": "smooth",
        "state_index": 0,
    },
    "seed": 0,
}

FIELD_KINDS = ("periodic", "iid", "tensor", "planted", "domino")


# ---------------------------------------------------------------------------
# config plumbing


def _type_name(x):
    return type(x).__name__


def _check(cond, path, msg):
    if not cond:
        raise ConfigError("config %s: %s" % (path, msg))


def _merge_section(base, given, path):
    if given is None:
        return copy.deepcopy(base)
    _check(isinstance(given, dict), path, "expected an object, got %s" % _type_name(given))
    merged = copy.deepcopy(base)
    for key, val in given.items():
        _check(key in base, "%s.%s" % (path, key), "unknown key")
        merged[key] = val
    return merged


def resolve_config(raw) -> dict:
    """Apply defaults, validate types and ranges, fill derived values."""
    _check(isinstance(raw, dict), "<root>", "config must be a JSON object")
    known = {"field", "field_b", "subgrid", "preconditioner", "iteration", "analysis", "seed", "out"}
    for key in raw:
        _check(key in known, key, "unknown section")
    cfg = {
        "field": _merge_section(DEFAULTS["field"], raw.get("field"), "field"),
        "subgrid": _merge_section(DEFAULTS["subgrid"], raw.get("subgrid"), "subgrid"),
        "preconditioner": _merge_section(
            DEFAULTS["preconditioner"], raw.get("preconditioner"), "preconditioner"
        ),
        "iteration": _merge_section(DEFAULTS["iteration"], raw.get("iteration"), "iteration"),
        "analysis": _merge_section(DEFAULTS["analysis"], raw.get("analysis"), "analysis"),
        "seed": raw.get("seed", DEFAULTS["seed"]),
    }
    if raw.get("field_b") is not None:
        cfg["field_b"] = _merge_section(DEFAULTS["field"], raw["field_b"], "field_b")
        for key in ("d", "inv_eps"):
            cfg["field_b"][key] = cfg["field"][key]
    else:
        cfg["field_b"] = None
    _validate(cfg)
    return cfg


def _validate(cfg):
    f = cfg["field"]
    _check(f["kind"] in FIELD_KINDS, "field.kind", "must be one of %s" % (FIELD_KINDS,))
    _check(isinstance(f["d"], int) and 1 <= f["d"] <= 3, "field.d", "must be 1, 2 or 3")
    _check(
        isinstance(f["inv_eps"], int) and f["inv_eps"] >= 2,
        "field.inv_eps",
        "must be an integer >= 2",
    )
    if f["beta"] is None:
        f["beta"] = 8.0 * f["inv_eps"] ** 2
    for name in ("alpha", "beta"):
        _check(isinstance(f[name], (int, float)), "field.%s" % name, "must be a number")
    _check(0 <= f["alpha"] < f["beta"], "field.alpha", "need 0 <= alpha < beta")
    for name in ("p_beta", "p_alpha"):
        _check(
            isinstance(f[name], (int, float)) and 0 < f[name] < 1,
            "field.%s" % name,
            "must lie in (0,1)",
        )
    _check(
        isinstance(f["widths"], list)
        and f["widths"]
        and all(isinstance(w, int) and w >= 1 for w in f["widths"]),
        "field.widths",
        "must be a non-empty list of positive integers",
    )
    if cfg["field_b"] is not None and cfg["field_b"]["beta"] is None:
        cfg["field_b"]["beta"] = 8.0 * cfg["field_b"]["inv_eps"] ** 2
    s = cfg["subgrid"]
    _check(isinstance(s["m"], int) and s["m"] >= 1, "subgrid.m", "must be a positive integer")
    p = cfg["preconditioner"]
    _check(p["mode"] in ("adaptive", "theoretical"), "preconditioner.mode", "adaptive or theoretical")
    _check(
        isinstance(p["target_gamma"], (int, float)) and 0 < p["target_gamma"] < 1,
        "preconditioner.target_gamma",
        "must lie in (0,1)",
    )
    it = cfg["iteration"]
    if it["K"] is not None:
        _check(isinstance(it["K"], int) and it["K"] >= 1, "iteration.K", "must be a positive integer")
    _check(
        isinstance(it["tol"], (int, float)) and 0 < it["tol"] < 1,
        "iteration.tol",
        "must lie in (0,1)",
    )
    _check(
        isinstance(it["steps"], int) and it["steps"] >= 1,
        "iteration.steps",
        "must be a positive integer",
    )
    a = cfg["analysis"]
    for name in ("n_ev", "k_max", "k_gap_max", "samples", "state_index"):
        lo = 0 if name == "state_index" else 1
        _check(
            isinstance(a[name], int) and a[name] >= lo,
            "analysis.%s" % name,
            "must be an integer >= %d" % lo,
        )
    _check(a["schedule"] in ("linear", "quadratic"), "analysis.schedule", "linear or quadratic")
    _check(
        a["friedrichs_mode"] in ("smooth", "white"),
        "analysis.friedrichs_mode",
        "smooth or white",
    )
    _check(
        0 < a["gap_target"] <= 1,
        "analysis.gap_target",
        "must lie in (0,1]",
    )
    _check(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed", "must be a non-negative integer")


def build_field(fcfg, seed):
    grid = GridSpec(d=fcfg["d"], inv_eps=fcfg["inv_eps"], seed=seed)
    kind = fcfg["kind"]
    try:
        if kind == "periodic":
            return gen_periodic(grid, fcfg["alpha"], fcfg["beta"])
        if kind == "iid":
            return gen_iid(grid, fcfg["alpha"], fcfg["beta"], fcfg["p_beta"])
        if kind == "tensor":
            return gen_tensor(grid, fcfg["alpha"], fcfg["beta"], fcfg["p_alpha"])
        if kind == "planted":
            return gen_planted(grid, fcfg["alpha"], fcfg["beta"], fcfg["widths"])
        return gen_domino(grid, fcfg["alpha"], fcfg["beta"], fcfg["level_decay"], fcfg["max_level"])
    except ValueError as exc:
        raise ConfigError("field construction failed: %s" % exc)


def _assemble_from(cfg, field=None):
    field = build_field(cfg["field"], cfg["seed"]) if field is None else field
    sub = SubgridSpec(grid=field.grid, m=cfg["subgrid"]["m"])
    return field, assemble(field, sub)


def _oracle(sys, n_ev):
    if sys.n <= DENSE_LIMIT:
        return dense_oracle(sys, n_ev)
    return shift_invert_oracle(sys, n_ev)


def _preconditioner(cfg, sys, stats=None):
    p = cfg["preconditioner"]
    prec = build_preconditioner(
        sys, mode=p["mode"], stats=stats, c_stable=p["c_stable"], seed=cfg["seed"] + 7
    )
    return prec


# ---------------------------------------------------------------------------
# subcommands

_ARTIFACTS: list = []


def _emit(outdir, name):
    _ARTIFACTS.append(name)
    return str(Path(outdir) / name)


def cmd_gen(cfg, outdir, h):
    field = build_field(cfg["field"], cfg["seed"])
    save_field(field, _emit(outdir, "field.json"))
    vals = field.values()
    reports.svg_heatmap(
        _emit(outdir, "field.svg"),
        vals if field.grid.d <= 2 else vals[0],
        "potential field (%s)" % field.kind,
        h,
    )


def cmd_geometry(cfg, outdir, h):
    field = build_field(cfg["field"], cfg["seed"])
    stats = analyze_geometry(field)
    rec = {
        "kind": field.kind,
        "d": stats.d,
        "max_width": stats.max_width,
        "cube_overlap": stats.cube_overlap,
        "n_maximal_cubes": len(stats.maximal_cubes),
        "width_counts": {str(k): v for k, v in sorted(stats.width_counts.items())},
        "anisotropy": {str(k): v for k, v in sorted(stats.anisotropy.items())},
        "n_valleys": None if stats.valleys is None else len(stats.valleys),
        "config_hash": h,
    }
    reports.write_json(_emit(outdir, "geometry.json"), rec)
    if stats.valleys is not None:
        rows = [
            (i, " ".join(map(str, v.anchor)), " ".join(map(str, v.sides)), v.min_side)
            for i, v in enumerate(stats.valleys)
        ]
        reports.write_csv(
            _emit(outdir, "valleys.csv"),
            ["index", "anchor", "sides", "min_side"],
            rows,
            "cell indices (eps units)",
            h,
        )


def cmd_assemble(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    rec = {
        "digest": system_digest(sys),
        "ndof": sys.n,
        "nnz": int(sys.A.nnz),
        "m": sys.sub.m,
        "h": sys.sub.h,
        "dumped_matrices": sys.n <= 5000,
        "config_hash": h,
    }
    reports.write_json(_emit(outdir, "assemble.json"), rec)
    if sys.n <= 5000:
        dump_system(sys, outdir)
        _ARTIFACTS.extend(["A.txt", "K.txt", "M.txt", "MV.txt", "system.json"])


def cmd_oracle(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    spec = _oracle(sys, cfg["analysis"]["n_ev"])
    rows = [(i, spec.values[i], spec.residuals[i]) for i in range(len(spec.values))]
    reports.write_csv(
        _emit(outdir, "spectrum.csv"),
        ["index", "eigenvalue", "residual"],
        rows,
        "eigenvalue: energy (1/length^2); residual: relative",
        h,
    )
    reports.svg_scatter(
        _emit(outdir, "spectrum.svg"),
        [("E_k (%s)" % spec.method, np.arange(1, len(spec.values) + 1), spec.values, "circle")],
        "spectrum head (%s)" % field.kind,
        h,
    )


def _start_vector(cfg, field, sys):
    """Lowest valley mode when the field decomposes, else seeded noise."""
    stats = analyze_geometry(field)
    if stats.valleys:
        block = build_start_valleys(sys, stats, 1)
        return block.vectors[:, 0], stats
    rng = make_rng(cfg["seed"] + 101)
    v = rng.standard_normal(sys.n)
    return v / mass_norm(sys, v), stats


def cmd_pinvit(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    spec = _oracle(sys, 2)
    v0, stats = _start_vector(cfg, field, sys)
    prec = _preconditioner(cfg, sys, stats)
    smoother = compose_smoother(prec, sys, cfg["preconditioner"]["target_gamma"])
    state = pinvit(
        sys, smoother, spec.values[0], v0, cfg["iteration"]["steps"], u1=spec.vectors[:, 0]
    )
    hist = state.history
    rows = [
        (
            k + 1,
            hist["rayleigh"][k],
            hist["err"][k + 1],
            hist["rate"][k],
            hist["support_cells"][k],
        )
        for k in range(cfg["iteration"]["steps"])
    ]
    reports.write_csv(
        _emit(outdir, "pinvit.csv"),
        ["step", "rayleigh", "energy_error", "rate", "support_cells"],
        rows,
        "rayleigh: energy; error: energy norm; support: eps-cells",
        h,
    )
    reports.svg_line(
        _emit(outdir, "pinvit.svg"),
        [("|||v-u1|||", np.arange(0, len(hist["err"])), np.asarray(hist["err"]), "circle")],
        "pinvit energy error",
        h,
        log_y=True,
    )
    reports.write_json(
        _emit(outdir, "pinvit.json"),
        {
            "e1": spec.values[0],
            "k_inner": smoother.k_inner,
            "gamma_est": prec.gamma_est,
            "final_error": hist["err"][-1],
            "config_hash": h,
        },
    )


def cmd_block(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    stats = analyze_geometry(field)
    a = cfg["analysis"]
    n_need = max(a["k_gap_max"] + 1, (cfg["iteration"]["K"] or 1) + 1)
    spec = _oracle(sys, n_need)
    K = cfg["iteration"]["K"]
    if K is None:
        K = analysis.gap_scan(spec, a["k_gap_max"], a["gap_target"]).chosen_k
    gap = spec.gap_ratio(K)
    tol = cfg["iteration"]["tol"]
    if gap >= 1.0 - 1e-9:
        raise NumericalError("spectral gap E1/E%d = %.6f is degenerate" % (K + 1, gap))
    k_outer = max(1, int(math.ceil(math.log(1.0 / tol) / math.log(1.0 / gap))))
    if k_outer > 1000:
        raise NumericalError(
            "gap %.4f needs %d outer steps for tol %.1e; pick a larger K" % (gap, k_outer, tol)
        )
    start = build_start_valleys(sys, stats, K, oracle=spec)
    prec = _preconditioner(cfg, sys, stats)
    smoother = compose_smoother(prec, sys, gap ** k_outer)
    v_tilde, state = inexact_block_iteration(
        sys, smoother, spec.values[0], start, tol, gap, u1=spec.vectors[:, 0], k_outer=k_outer
    )
    hist = state.history
    rows = [
        (k + 1, hist["err"][k + 1], hist["rate"][k], hist["support_cells"][k])
        for k in range(k_outer)
    ]
    reports.write_csv(
        _emit(outdir, "block.csv"),
        ["step", "energy_error", "rate", "support_cells"],
        rows,
        "error: energy norm of combined iterate vs u1; support: eps-cells",
        h,
    )
    reports.write_json(
        _emit(outdir, "block.json"),
        {
            "K": K,
            "gap": gap,
            "k_outer": k_outer,
            "k_inner": smoother.k_inner,
            "c_inv_norm": start.c_inv_norm,
            "err0": hist["err"][0],
            "final_error": hist["err"][-1],
            "config_hash": h,
        },
    )


def cmd_green_decay(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    prec = _preconditioner(cfg, sys, analyze_geometry(field))
    estimate_contraction(prec, sys)
    a = cfg["analysis"]
    cell = a["source_cell"]
    if cell is None:
        cell = [field.grid.inv_eps // 2] * field.grid.d
    res = analysis.green_decay(sys, prec, tuple(cell), a["k_max"])
    prof = res.profile
    rows = [
        (
            int(prof.radii[i]),
            prof.annulus_energies[i],
            res.rel_errors[i],
            (res.gamma_est or 1.0) ** (i + 1),
        )
        for i in range(len(prof.radii))
    ]
    reports.write_csv(
        _emit(outdir, "green.csv"),
        ["radius_cells", "annulus_energy", "iteration_rel_error", "gamma_pow_k"],
        rows,
        "energy norms; radius in eps-cells",
        h,
    )
    reports.svg_line(
        _emit(outdir, "green.svg"),
        [
            ("annulus |||u|||", prof.radii, np.maximum(prof.annulus_energies, 1e-300), "circle"),
            ("rel iter error", prof.radii, np.maximum(res.rel_errors, 1e-300), "cross"),
        ],
        "green's function decay",
        h,
        log_y=True,
    )
    reports.write_json(
        _emit(outdir, "green.json"),
        {
            "source_cell": list(cell),
            "annulus_rate": prof.fitted_rate,
            "annulus_r2": prof.fit_quality,
            "iteration_rate": res.error_rate,
            "gamma_est": res.gamma_est,
            "config_hash": h,
        },
    )


def cmd_eigen_decay(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    a = cfg["analysis"]
    spec = _oracle(sys, a["state_index"] + 1)
    state = spec.vectors[:, a["state_index"]]
    centers = a["centers"]
    if isinstance(centers, list):
        centers = [tuple(c) for c in centers]
    prof = analysis.eigen_decay(sys, state, centers, a["k_max"], schedule=a["schedule"])
    rows = [
        (k + 1, int(prof.radii[k]), prof.annulus_energies[k]) for k in range(len(prof.radii))
    ]
    reports.write_csv(
        _emit(outdir, "decay.csv"),
        ["step", "radius_cells", "annulus_energy"],
        rows,
        "energy norm outside radius; radius in eps-cells",
        h,
    )
    reports.write_json(
        _emit(outdir, "decay.json"),
        {
            "state_index": a["state_index"],
            "eigenvalue": spec.values[a["state_index"]],
            "centers": [list(c) for c in prof.centers],
            "rate": prof.fitted_rate,
            "r2": prof.fit_quality,
            "degenerate": prof.degenerate,
            "schedule": a["schedule"],
            "config_hash": h,
        },
    )
    mass = cell_mass(sys, state)
    reports.svg_heatmap(
        _emit(outdir, "state.svg"),
        mass if field.grid.d <= 2 else mass[mass.shape[0] // 2],
        "state %d cell mass" % a["state_index"],
        h,
    )
    reports.svg_line(
        _emit(outdir, "decay.svg"),
        [
            (
                "annulus energy",
                np.arange(1, len(prof.radii) + 1),
                np.maximum(prof.annulus_energies, 1e-300),
                "circle",
            )
        ],
        "eigenstate decay",
        h,
        log_y=True,
    )


def cmd_gap_scan(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    a = cfg["analysis"]
    spec = _oracle(sys, max(a["n_ev"], a["k_gap_max"] + 1))
    rep = analysis.gap_scan(spec, a["k_gap_max"], a["gap_target"])
    rows = [(k + 1, rep.gaps[k]) for k in range(len(rep.gaps))]
    reports.write_csv(
        _emit(outdir, "gaps.csv"), ["K", "gap_E1_over_EK1"], rows, "dimensionless ratios", h
    )
    reports.write_json(
        _emit(outdir, "gaps.json"),
        {
            "chosen_k": rep.chosen_k,
            "gap": rep.gap,
            "target": rep.target,
            "met_target": rep.met_target,
            "head": list(rep.head),
            "config_hash": h,
        },
    )


def cmd_friedrichs(cfg, outdir, h):
    field, sys = _assemble_from(cfg)
    stats = analyze_geometry(field)
    cutoff = build_cutoff(field, sys.sub)
    a = cfg["analysis"]
    rep = analysis.friedrichs_ratio(
        sys,
        cutoff,
        a["samples"],
        max_width=stats.max_width,
        seed=cfg["seed"] + 23,
        mode=a["friedrichs_mode"],
    )
    rows = [(i, rep.ratios[i]) for i in range(len(rep.ratios))]
    reports.write_csv(
        _emit(outdir, "friedrichs.csv"), ["sample", "ratio"], rows, "length units", h
    )
    reports.write_json(
        _emit(outdir, "friedrichs.json"),
        {
            "max_ratio": rep.max_ratio,
            "mean_ratio": rep.mean_ratio,
            "eps": rep.eps,
            "max_width": rep.max_width,
            "normalized_max": rep.normalized,
            "skipped": rep.skipped,
            "mode": rep.mode,
            "max_gradient": cutoff.max_gradient,
            "config_hash": h,
        },
    )


def cmd_spectra_compare(cfg, outdir, h):
    field_a = build_field(cfg["field"], cfg["seed"])
    bcfg = cfg["field_b"]
    if bcfg is None:
        bcfg = dict(cfg["field"], kind="periodic")
    field_b = build_field(bcfg, cfg["seed"] + 1)
    comp = analysis.spectra_compare(field_a, field_b, cfg["subgrid"]["m"], cfg["analysis"]["n_ev"])
    rows = [
        (i + 1, comp.values_a[i], comp.values_b[i]) for i in range(comp.n_ev)
    ]
    reports.write_csv(
        _emit(outdir, "spectra.csv"),
        ["index", "E_%s" % comp.kind_a, "E_%s" % comp.kind_b],
        rows,
        "energy (1/length^2)",
        h,
    )
    idx = np.arange(1, comp.n_ev + 1)
    reports.svg_scatter(
        _emit(outdir, "spectra.svg"),
        [
            (comp.kind_b, idx, comp.values_b, "circle"),
            (comp.kind_a, idx, comp.values_a, "cross"),
        ],
        "spectra: %s vs %s" % (comp.kind_a, comp.kind_b),
        h,
    )


def cmd_fig1(cfg, outdir, h):
    cmd_eigen_decay(cfg, outdir, h)
    field = build_field(cfg["field"], cfg["seed"])
    vals = field.values()
    reports.svg_heatmap(_emit(outdir, "potential.svg"), vals, "i.i.d. potential", h)


def cmd_fig2(cfg, outdir, h):
    cmd_spectra_compare(cfg, outdir, h)
    field_a, sys_a = _assemble_from(cfg)
    spec = _oracle(sys_a, cfg["analysis"]["n_ev"])
    rep = analysis.gap_scan(spec, cfg["analysis"]["k_gap_max"], cfg["analysis"]["gap_target"])
    reports.write_json(
        _emit(outdir, "gaps_random.json"),
        {
            "chosen_k": rep.chosen_k,
            "gap": rep.gap,
            "met_target": rep.met_target,
            "config_hash": h,
        },
    )


FIG1_BASE = {
    "field": {"kind": "iid", "d": 2, "inv_eps": 64, "alpha": 1.0, "beta": 4.0 * 64 ** 2, "p_beta": 0.5},
    "subgrid": {"m": 2},
    "analysis": {"k_max": 12, "state_index": 0},
    "seed": 5,
}

FIG2_BASE = {
    "field": {"kind": "iid", "d": 1, "inv_eps": 256, "alpha": 1.0, "beta": 8.0 * 256 ** 2, "p_beta": 0.5},
    "field_b": {"kind": "periodic"},
    "subgrid": {"m": 2},
    "analysis": {"n_ev": 144, "k_gap_max": 16},
    "seed": 5,
}


COMMANDS = {
    "gen": cmd_gen,
    "geometry": cmd_geometry,
    "assemble": cmd_assemble,
    "oracle": cmd_oracle,
    "pinvit": cmd_pinvit,
    "block": cmd_block,
    "green-decay": cmd_green_decay,
    "eigen-decay": cmd_eigen_decay,
    "gap-scan": cmd_gap_scan,
    "friedrichs": cmd_friedrichs,
    "spectra-compare": cmd_spectra_compare,
    "fig1": cmd_fig1,
    "fig2": cmd_fig2,
}


def _load_raw_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s is not valid JSON: %s" % (path, exc))
    if isinstance(raw, dict) and "config" in raw and "subcommand" in raw:
        # a previously emitted manifest; rerun its pipeline
        return raw["config"], raw.get("out")
    return raw, None


def _resolve_out(args, raw_out, manifest_out, subcommand):
    out = args.out or raw_out or manifest_out
    root = os.environ.get(OUT_ROOT_ENV)
    if out is None:
        out = os.path.join("runs", subcommand)
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="schrodloc",
        description="seeded localization experiments on disorder potentials",
    )
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config file or a previously emitted manifest")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="requested worker count; execution is serial, 1 is the reproducibility mode",
    )
    parser.add_argument(
        "--full", action="store_true", help="fig1/fig2 at full subgrid resolution"
    )
    args = parser.parse_args(argv)

    try:
        raw, manifest_out = ({}, None)
        if args.config:
            raw, manifest_out = _load_raw_config(args.config)
        if args.subcommand == "fig1":
            raw = _layer_base(FIG1_BASE, raw, full=args.full)
        elif args.subcommand == "fig2":
            raw = _layer_base(FIG2_BASE, raw, full=args.full)
        raw = dict(raw)
        raw_out = raw.pop("out", None)
        cfg = resolve_config(raw)
        if args.seed is not None:
            _check(args.seed >= 0, "--seed", "must be non-negative")
            cfg["seed"] = args.seed
        h = reports.config_hash({"subcommand": args.subcommand, **cfg})
        outdir = _resolve_out(args, raw_out, manifest_out, args.subcommand)
        os.makedirs(outdir, exist_ok=True)
        _ARTIFACTS.clear()
        COMMANDS[args.subcommand](cfg, outdir, h)
        manifest = {
            "subcommand": args.subcommand,
            "config": cfg,
            "config_hash": h,
            "out": str(outdir),
            "threads_effective": 1,
            "artifacts": sorted(set(_ARTIFACTS)),
        }
        reports.write_json(Path(outdir) / "manifest.json", manifest)
    except ConfigError as exc:
        print("config error: %s" % exc, file=_sys.stderr)
        return 2
    except ValueError as exc:
        print("config error: %s" % exc, file=_sys.stderr)
        return 2
    except NumericalError as exc:
        print("numerical failure: %s" % exc, file=_sys.stderr)
        return 3
    print("%s: wrote %d artifacts to %s (config %s)" % (
        args.subcommand, len(_ARTIFACTS) + 1, outdir, h
    ))
    return 0


def _layer_base(base, user, full=False):
    """Canned fig config, overlaid with any user-provided sections."""
    merged = copy.deepcopy(base)
    if full:
        merged["subgrid"] = {"m": 4}
        if "n_ev" in merged.get("analysis", {}):
            merged["analysis"]["n_ev"] = 160
    for key, val in user.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key].update(val)
        else:
            merged[key] = val
    return merged


if __name__ == "__main__":
    raise SystemExit(main())
