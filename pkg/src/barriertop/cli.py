"""Scenario runner.

One structured config file drives every run; subcommands dispatch to the
library and write CSV/JSON reports.  Outputs are deterministic given the
config and seed: every report embeds the config hash and tool version,
and only the leading comment line of a CSV carries a timestamp.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import backend_name
from .config import load_config
from .errors import NumericalError, ValidationError
from .models import (lattice_to_csv, linearize, model_from_spec,
                     resonance_lattice)
from .scenario import decaying_expansion, make_scenario

_SUBCOMMANDS = ("model", "lattice", "flow", "phase", "transition", "verify",
                "fbi")


def _stamp(cfg):
    return {"config_sha256": cfg.sha256, "tool_version": __version__,
            "seed": cfg.seed, "backend": backend_name()}


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def _csv_writer(path):
    fh = open(path, "w", newline="")
    fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
    return fh, csv.writer(fh)


def _build_scenario(cfg, h, z):
    model = model_from_spec(cfg["model"])
    sc = cfg["scenario"]
    sp = cfg["spectral"]
    return make_scenario(model, sc["epsilon"], h, complex(*z),
                         C0=sp["C0"], C1=sp["C1"], nu=sp["nu"],
                         domain_radius=sc["domain_radius"],
                         chart_tol=cfg["tolerances"]["chart_tol"],
                         eta_halfwidth=sc["eta_halfwidth"])


def cmd_model(cfg, outdir):
    model = model_from_spec(cfg["model"])
    lin = linearize(model)
    payload = {
        "report": "model",
        "kind": model.kind,
        "lambdas": model.lambdas.tolist(),
        "validity_radius": model.validity_radius,
        "linear_field": lin.F_p.tolist(),
        "eigenvalues": lin.eigenvalues.tolist(),
        "stable_graph": None if lin.stable_graph is None else lin.stable_graph.tolist(),
        "unstable_graph": None if lin.unstable_graph is None else lin.unstable_graph.tolist(),
        **_stamp(cfg),
    }
    _write_json(outdir / "model.json", payload)
    return payload


def cmd_lattice(cfg, outdir):
    model = model_from_spec(cfg["model"])
    h = cfg["spectral"]["h"][0]
    lat = resonance_lattice(model.lambdas, h, cfg["lattice"]["bound"])
    path = outdir / "lattice.csv"
    lattice_to_csv(lat, path)
    _write_json(outdir / "lattice.json",
                {"report": "lattice", "count": len(lat.points), **_stamp(cfg)})
    return {"count": len(lat.points)}


def cmd_flow(cfg, outdir):
    from .flow import flow_states, trajectory_to_csv

    model = model_from_spec(cfg["model"])
    fc = cfg["flow"]
    start = fc["start"]
    if start is None:
        lin = linearize(model)
        d = model.dim
        x0 = np.zeros(d)
        x0[0] = cfg["scenario"]["epsilon"]
        start = np.concatenate([x0, lin.stable_graph @ x0])
    start = np.asarray(start, dtype=float)
    times = np.linspace(0.0, fc["t_max"], int(fc["samples"]))
    times[0] = 0.0
    sample = flow_states(model, start, times, tol=cfg["tolerances"]["flow_tol"])
    trajectory_to_csv(sample, model, outdir / "trajectory.csv")
    ser = decaying_expansion(model, start, forward=True, t_max=fc["t_max"])
    payload = {"report": "flow", "exponents": ser.exponents.tolist(),
               "residual_rms": ser.residual_rms, **_stamp(cfg)}
    ser.to_json(outdir / "expansion.json")
    _write_json(outdir / "flow.json", payload)
    return payload


def cmd_phase(cfg, outdir):
    from .phases import evolve_phase

    h = cfg["spectral"]["h"][0]
    z = cfg["spectral"]["z"][0]
    sc = _build_scenario(cfg, h, z)
    fam = evolve_phase(sc, cfg["phase"]["eta_prime"],
                       t_max=cfg["phase"]["t_max"],
                       tol=cfg["tolerances"]["phase_tol"])
    payload = {
        "report": "phase",
        "t_grid": fam.t_grid.tolist(),
        "basis": [list(map(int, e)) for e in fam.basis],
        "coefficients": fam.coef.tolist(),
        "centers": fam.centers.tolist(),
        "radii": fam.radii.tolist(),
        "scale": fam.scale,
        "psi_tilde": fam.psi_tilde,
        "psi_tilde_fitted": fam.psi_tilde_fitted,
        "eikonal_t_residual": fam.eikonal_t_residual,
        "expansion_exponents": fam.expansion.exponents.tolist(),
        **_stamp(cfg),
    }
    _write_json(outdir / "phase.json", payload)
    return payload


def _transition_point(args):
    cfg_sections, h, z, x_targets, y_prime = args
    from .config import RunConfig

    cfg = RunConfig(raw=cfg_sections, sha256="", seed=0, sections=cfg_sections)
    sc = _build_scenario(cfg, h, z)
    from .transition import transition_symbol

    rows = []
    for x in x_targets:
        ev = transition_symbol(sc, x, y_prime)
        rows.append((h, z, list(x), ev.to_json()))
    return rows


def cmd_transition(cfg, outdir, jobs=1):
    from .transition import transition_symbol

    tr = cfg["transition"]
    sweeps = [(h, tuple(z)) for h in cfg["spectral"]["h"]
              for z in cfg["spectral"]["z"]]
    results = []
    if jobs > 1:
        work = [(cfg.sections, h, z, tr["x_targets"], tr["y_prime"])
                for h, z in sweeps]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for rows in ex.map(_transition_point, work):
                results.extend(rows)
    else:
        for h, z in sweeps:
            sc = _build_scenario(cfg, h, z)
            for x in tr["x_targets"]:
                ev = transition_symbol(sc, x, tr["y_prime"])
                results.append((h, z, list(x), ev.to_json()))
    fh, w = _csv_writer(outdir / "transition.csv")
    with fh:
        w.writerow(["h", "z_re", "z_im", "x", "d0_re", "d0_im",
                    "badset_margin"])
        for h, z, x, rec in results:
            w.writerow([repr(float(h)), repr(float(z[0])), repr(float(z[1])),
                        ";".join(repr(float(v)) for v in x),
                        repr(float(rec["d0_re"])), repr(float(rec["d0_im"])),
                        repr(float(rec["badset_margin"]))])
    _write_json(outdir / "transition.json",
                {"report": "transition", "count": len(results),
                 "evaluations": [rec for *_, rec in results], **_stamp(cfg)})
    return {"count": len(results)}


def cmd_verify(cfg, outdir):
    from .oracle1d import compare_transition, scaled_resonances

    model = model_from_spec(cfg["model"])
    if model.dim != 1:
        raise ValidationError("verify runs on one-dimensional models")
    vf = cfg["verify"]
    h0 = cfg["spectral"]["h"][0]
    sc = _build_scenario(cfg, h0, (0.0, 0.0))
    rep = compare_transition(sc, vf["z_scaled"], vf["h_list"],
                             x_target=vf["x_target"],
                             z_in_units_of_lambda_h=True,
                             csv_path=outdir / "oracle_compare.csv")
    lam = float(model.lambdas[0])
    res_match = []
    for h in vf["resonance_h"]:
        res = scaled_resonances(lam, h, vf["resonance_count"])
        lat = resonance_lattice([lam], h, abs(res[-1]) * 1.3 + h * lam)
        errs = [abs(r - lat.points[k]) / abs(lat.points[k])
                for k, r in enumerate(res)]
        res_match.append({"h": h, "max_rel_err": max(errs)})
    payload = {
        "report": "verify",
        "oracle_rows": rep["rows"],
        "loglog_slope": rep["loglog_slope"],
        "resonance_match": res_match,
        **_stamp(cfg),
    }
    _write_json(outdir / "verify.json", payload)
    return payload


def cmd_fbi(cfg, outdir):
    from .microlocal import (ComplementRegion, TubeRegion, fbi_transform,
                             frequency_mass)
    from .oracle1d import assemble_crossing_solution

    model = model_from_spec(cfg["model"])
    if model.dim != 1:
        raise ValidationError("fbi subcommand runs on one-dimensional models")
    fb = cfg["fbi"]
    h = cfg["spectral"]["h"][0]
    sc = _build_scenario(cfg, h, (0.0, 0.0))
    dx = np.sqrt(h) / 6
    xg = np.linspace(-1.2, 1.2, int(np.ceil(2.4 / dx)))
    u = assemble_crossing_solution(sc, xg)
    xa = np.linspace(*fb["x_axis"][:2], int(fb["x_axis"][2]))
    xia = np.linspace(*fb["xi_axis"][:2], int(fb["xi_axis"][2]))
    tu = fbi_transform(u, xa, xia)
    lam = float(model.lambdas[0])
    tube = TubeRegion([lambda x: lam * x / 2, lambda x: -lam * x / 2],
                      fb["tube_thickness"], x_bound=fb["mass_x_bound"])

    class _Within:
        def mask(self, pts):
            return np.abs(pts[..., 0]) <= fb["mass_x_bound"]

        def bounds(self):
            return None, None

    inside = frequency_mass(tu, tube)
    outside = frequency_mass(tu, ComplementRegion(tube, within=_Within()))
    tu.save_csv(outdir / "fbi_grid.csv")
    payload = {"report": "fbi", "mass_in_tube": inside,
               "mass_outside_tube": outside, "state_mass": u.norm_l2() ** 2,
               **_stamp(cfg)}
    _write_json(outdir / "fbi.json", payload)
    return payload


def run(subcommand, config_path, out=None, jobs=1, verbose=False):
    """Dispatch a subcommand; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        outdir = Path(out if out is not None else cfg["output_dir"])
        outdir.mkdir(parents=True, exist_ok=True)
        np.random.seed(cfg.seed)
        if subcommand == "model":
            payload = cmd_model(cfg, outdir)
        elif subcommand == "lattice":
            payload = cmd_lattice(cfg, outdir)
        elif subcommand == "flow":
            payload = cmd_flow(cfg, outdir)
        elif subcommand == "phase":
            payload = cmd_phase(cfg, outdir)
        elif subcommand == "transition":
            payload = cmd_transition(cfg, outdir, jobs=jobs)
        elif subcommand == "verify":
            payload = cmd_verify(cfg, outdir)
        elif subcommand == "fbi":
            payload = cmd_fbi(cfg, outdir)
        else:
            print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
            return 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        try:
            _write_json(Path(out or ".") / "error.json", record)
        except OSError:
            pass
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    if verbose:
        json.dump(payload, sys.stdout, indent=1, sort_keys=True, default=str)
        print()
    return 0


def main(argv=None):
    p = argparse.ArgumentParser(prog="barriertop",
                                description="hyperbolic fixed point toolkit")
    p.add_argument("subcommand", choices=_SUBCOMMANDS)
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--verbose", action="store_true")
    args = p.parse_args(argv)
    return run(args.subcommand, args.config, out=args.out, jobs=args.jobs,
               verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
