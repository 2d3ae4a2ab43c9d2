"""Batch front end: model loading, experiment subcommands, deterministic
manifests, CSV/SVG emission.

Exit codes: 0 all assertions passed, 1 assertion failure, 2 usage error.
Config precedence is flags > config file > defaults; every resolved value is
echoed into the manifest. ``--jobs`` sets the parallelism degree where a
subcommand supports it (fixed-size work chunks keep outputs identical for
any degree); other subcommands record it and run sequentially.
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .cells import CellCovering, cell_decomposition_check, sample_negative_pairs
from .constants import ConstantsBundle, desk_bundle
from .entropy import entropy_estimate
from .errors import FoliationLabError
from .manifest import RunManifest, write_csv, write_slope_svg
from .mesh import build_initial_covering, build_mesh, neighbor_count, reach_transversal
from .metric import escape_to_fringe, poincare_length, r_sing
from .models import ChartPoint, FlowPath, SingularityModel, flow, model_from_dict, model_to_dict
from .refine import initial_family, projection_pipeline_check, run_refinement
from .trees import build_motion_tree, cutoff_tree, local_inclusion_check, verify_tree_coverage

PRESETS = {
    "lin.json": {"kind": "linearizable", "lambda": [-1.0, 0.0], "label": "lin"},
    "lin2.json": {"kind": "linearizable", "lambda": [2.0, 1.0], "label": "lin2"},
    "pd.json": {"kind": "poincare_dulac", "m": 1, "mu": [0.25, 0.0], "label": "pd"},
    "bb.json": {"kind": "briot_bouquet", "alpha": 1.0, "q": 0, "k": 1,
                "f": [[1, 1, 0.3, 0.0]], "label": "bb"},
}


def _load_model(path) -> SingularityModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def _parse_complex(tok: str) -> complex:
    return complex(tok.replace(" ", "").replace("i", "j"))


def _fmt(c: complex) -> str:
    if abs(c.imag) < 1e-12:
        return f"{c.real:.12g}"
    return f"{c.real:.12g}{c.imag:+.12g}i"


def _finish(ctx, out, manifest: RunManifest, passed: bool):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.save(out / f"{manifest.command}_manifest.json")
    if not passed:
        click.echo(f"{manifest.command}: FAIL", err=True)
        sys.exit(1)
    click.echo(f"{manifest.command}: ok")


@click.group()
@click.version_option(__version__)
def main():
    """Chart-local numerical laboratory for singular foliations."""


@main.command("init-models")
@click.argument("directory", type=click.Path())
def init_models(directory):
    """Write the preset model files (lin/lin2/pd/bb) into DIRECTORY."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, body in PRESETS.items():
        (d / name).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {len(PRESETS)} model files to {d}")


@main.command("flow")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--z", "z_str", required=True, help="base point, e.g. 0.3,0.2")
@click.option("--t", "t_str", required=True, help="complex flow time")
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def flow_cmd(model_path, z_str, t_str, out, seed, jobs):
    """Evaluate the model flow at a point and time."""
    model = _load_model(model_path)
    toks = z_str.split(",")
    z = ChartPoint(_parse_complex(toks[0]), _parse_complex(toks[1]))
    t = _parse_complex(t_str)
    w = flow(model, z, t)
    click.echo(f"({_fmt(w.z1)}, {_fmt(w.z2)})")
    manifest = RunManifest.build("flow", {"z": z_str, "t": t_str, "jobs": jobs},
                                 model_to_dict(model), ConstantsBundle(), {"seed": seed})
    _finish(None, out, manifest, True)


@main.command("constants")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--grid-density", default=16, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def constants_cmd(model_path, grid_density, out, seed, jobs):
    """Estimate the chart constants of a model."""
    model = _load_model(model_path)
    bundle = desk_bundle(model, grid_density=grid_density)
    rows = [("name", "value", "source")]
    for name in ("C0", "C1", "C2", "C3", "C4"):
        prov = bundle.provenance.get(name, {}).get("source", "configured")
        rows.append((name, f"{getattr(bundle, name):.9g}", prov))
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    art = write_csv(outp / "constants.csv", rows)
    manifest = RunManifest.build("constants", {"grid_density": grid_density, "jobs": jobs},
                                 model_to_dict(model), bundle, {"seed": seed}, [str(art)])
    _finish(None, out, manifest, True)


def _cells_chunk(args):
    model_dict, kappa, seed, n_pairs, h = args
    model = model_from_dict(model_dict)
    bundle = desk_bundle(model)
    cov = CellCovering(kappa)
    rep = cell_decomposition_check(model, cov, bundle, pair_samples=n_pairs,
                                   path_samples=6, h=h, rng_seed=seed)
    return [(r.pair_id, r.cell_id, "|".join(r.labels), r.branch,
             f"{r.worst_margin:.6g}", "pass" if r.verdict else "fail") for r in rep.rows]


@main.command("cells")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--kappa", default=20.0, show_default=True)
@click.option("--pairs", default=100, show_default=True)
@click.option("--h", default=0.05, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def cells_cmd(model_path, kappa, pairs, h, out, seed, jobs):
    """Build the disk covering and run the cell-decomposition harness."""
    model = _load_model(model_path)
    bundle = desk_bundle(model)
    chunk = 25
    tasks = []
    done = 0
    while done < pairs:
        n = min(chunk, pairs - done)
        tasks.append((model_to_dict(model), kappa, seed + 1000 * len(tasks), n, h))
        done += n
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_cells_chunk, tasks))
    else:
        results = [_cells_chunk(t) for t in tasks]
    rows = [("pair_id", "cell_id", "labels", "branch", "worst_margin", "verdict")]
    n_pass = n_tot = 0
    for ci, rws in enumerate(results):
        for r in rws:
            rows.append((f"{ci}:{r[0]}",) + tuple(r[1:]))
            n_tot += 1
            n_pass += r[-1] == "pass"
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    art = write_csv(outp / "cells_report.csv", rows)
    passed = n_pass == n_tot
    click.echo(f"cells: {n_pass}/{n_tot} pairs pass")
    manifest = RunManifest.build("cells", {"kappa": kappa, "pairs": pairs, "h": h, "jobs": jobs},
                                 model_to_dict(model), bundle, {"seed": seed}, [str(art)])
    _finish(None, out, manifest, passed)


def _mesh_bundle(model):
    return desk_bundle(model, h1=16.8, C8=2.0, C5=0.265)


@main.command("mesh")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--r-sing", "r_sing_target", default=0.1, show_default=True)
@click.option("--reach-samples", default=100, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def mesh_cmd(model_path, r_sing_target, reach_samples, out, seed, jobs):
    """Build the transversal mesh and run the reach/neighbor checks."""
    model = _load_model(model_path)
    bundle = _mesh_bundle(model)
    R = math.log(math.log(r_sing_target) / math.log(bundle.eps / 4.0)) / bundle.C3
    mesh = build_mesh(model, R, bundle)
    rng = np.random.default_rng(seed)
    ok = 0
    worst = 0.0
    for _ in range(reach_samples):
        r = math.exp(rng.uniform(math.log(mesh.r0T), math.log(2 * bundle.rho)))
        z = ChartPoint(r * np.exp(1j * rng.uniform(0, 2 * math.pi)),
                       0.3 * r * np.exp(1j * rng.uniform(0, 2 * math.pi)))
        if rng.random() < 0.5:
            z = ChartPoint(z.z2, z.z1)
        try:
            rr = reach_transversal(model, z, mesh)
            ok += rr.on_transversal and rr.length <= bundle.hbar
            worst = max(worst, rr.length)
        except FoliationLabError:
            pass
    nr = neighbor_count(mesh, model, h1=bundle.h1, sample_density=2, rng_seed=seed)
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    (outp / "mesh_manifest.json").write_text(json.dumps(mesh.manifest(), indent=2, sort_keys=True) + "\n")
    rows = [("check", "value", "budget", "pass")]
    rows.append(("reach_ok", f"{ok}/{reach_samples}", f"lP<={bundle.hbar:.4g}",
                 "pass" if ok == reach_samples else "fail"))
    rows.append(("reach_worst_lP", f"{worst:.6g}", f"{bundle.hbar:.4g}",
                 "pass" if worst <= bundle.hbar else "fail"))
    rows.append(("neighbor_max", nr.max_count, nr.K_prime,
                 "pass" if nr.within_budget else "fail"))
    art = write_csv(outp / "mesh_report.csv", rows)
    passed = ok == reach_samples and nr.within_budget
    click.echo(f"mesh: reach {ok}/{reach_samples}, neighbor max {nr.max_count} <= K'={nr.K_prime}")
    manifest = RunManifest.build("mesh", {"r_sing": r_sing_target, "reach_samples": reach_samples,
                                          "jobs": jobs},
                                 model_to_dict(model), bundle, {"seed": seed},
                                 [str(art)])
    _finish(None, out, manifest, passed)


@main.command("holonomy")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def holonomy_cmd(model_path, out, seed, jobs):
    """Holonomy image fits and four-disk covers on a desk mesh."""
    from .cells import EDisk
    from .holonomy import QuasiRoundFit, four_disk_cover, holonomy_image, transversal_point

    model = _load_model(model_path)
    bundle = _mesh_bundle(model)
    R = math.log(math.log(0.1) / math.log(bundle.eps / 4.0)) / bundle.C3
    mesh = build_mesh(model, R, bundle)
    rows = [("case", "sigma", "pass")]
    passed = True
    src = mesh.transversal(0, 1, 1)
    dst = mesh.transversal(1, 1, 1)
    from .refine import _canonical_motion_nodes
    x = transversal_point(src, 0.3 * src.extent)
    nodes = _canonical_motion_nodes(model, x, dst, mesh)
    if nodes:
        d = EDisk(0.3 * src.extent, 0.05 * src.extent)
        fit = holonomy_image(model, FlowPath(x, tuple(nodes)), src, dst, d)
        ok = fit.sigma <= bundle.sigma1
        passed &= ok
        rows.append(("same-side", f"{fit.sigma:.9f}", "pass" if ok else "fail"))
    for sigma in (1.0, 1.015):
        fit = QuasiRoundFit(EDisk(0.1 + 0.05j, 0.02), sigma, 0)
        disks = four_disk_cover(fit)
        rng = np.random.default_rng(seed)
        witnesses = 0
        for _ in range(2000):
            a = rng.random() * 2 * math.pi
            r = fit.disk.radius / sigma * math.sqrt(rng.random())
            p = fit.disk.center + r * np.exp(1j * a)
            if not any(abs(p - dd.center) <= dd.radius for dd in disks):
                witnesses += 1
        ok = witnesses == 0
        passed &= ok
        rows.append((f"four-disk sigma={sigma}", f"{sigma}", "pass" if ok else "fail"))
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    art = write_csv(outp / "holonomy_report.csv", rows)
    manifest = RunManifest.build("holonomy", {"jobs": jobs}, model_to_dict(model),
                                 bundle, {"seed": seed}, [str(art)])
    _finish(None, out, manifest, passed)


@main.command("tree")
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--h1", default=0.3, show_default=True)
@click.option("--c8", default=2.0, show_default=True)
@click.option("--p", "p_override", default=None, type=int, help="branching (default 6 pi C8^2)")
@click.option("--depth", default=5, show_default=True)
@click.option("--node-cap", default=30000, show_default=True)
@click.option("--coverage-samples", default=20000, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def tree_cmd(model_path, h1, c8, p_override, depth, node_cap, coverage_samples, out, seed, jobs):
    """Build a motion tree and verify its coverage."""
    model = _load_model(model_path) if model_path else model_from_dict(PRESETS["lin.json"])
    over = {"h1": h1, "C8": c8, "C5": 0.265}
    bundle = desk_bundle(model, **over)
    if p_override:
        bundle = bundle.with_values(p=p_override)
    R = math.log(math.log(0.01) / math.log(bundle.eps / 4.0)) / bundle.C3
    mesh = build_mesh(model, R, bundle)
    t = mesh.transversal(mesh.N_a // 2, 1, 1)
    x = ChartPoint(t.coord, 0.3 * t.level)
    tree = build_motion_tree(model, mesh, x, R_desk=h1 + depth * bundle.hbar,
                             constants=bundle, H=depth, node_cap=node_cap)
    covered, witness, ncut = verify_tree_coverage(tree, coverage_samples, seed)
    verdict = "covered" if covered else f"witness at {witness.value}"
    click.echo(f"tree: {len(tree.nodes)} nodes, {ncut} cutoff, coverage {verdict}")
    rows = [("nodes", "expanded", "cutoff", "coverage")]
    rows.append((len(tree.nodes), len(tree.expanded), ncut, verdict))
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    art = write_csv(outp / "tree_report.csv", rows)
    manifest = RunManifest.build("tree", {"h1": h1, "C8": c8, "depth": depth,
                                          "node_cap": node_cap, "jobs": jobs},
                                 model_to_dict(model), bundle, {"seed": seed}, [str(art)])
    _finish(None, out, manifest, covered)


@main.command("refine")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--generations", default=3, show_default=True)
@click.option("--domain-samples", default=250, show_default=True)
@click.option("--kappa-init", default=4.0, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def refine_cmd(model_path, generations, domain_samples, kappa_init, out, seed, jobs):
    """Run the covering refinement and emit generation logs."""
    model = _load_model(model_path)
    bundle = desk_bundle(model, h1=0.55, C8=1.02, C5=1.873)
    R = math.log(math.log(0.05) / math.log(bundle.eps / 4.0)) / bundle.C3
    mesh = build_mesh(model, R, bundle)
    init = initial_family(mesh, kappa_init, model)
    run = run_refinement(mesh, model, init, generations, bundle,
                         domain_samples=domain_samples, rng_seed=seed, max_families=6)
    rows = [("generation", "max_cardinality", "growth_factor")]
    for g, c in enumerate(run.cardinality_log):
        gf = f"{run.growth_factors[g-1]:.4f}" if g >= 1 else ""
        rows.append((g, c, gf))
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    art = write_csv(outp / "refine_generations.csv", rows)
    click.echo(f"refine: cards {run.cardinality_log}, coverage {'ok' if run.coverage_ok else 'LOST'}, "
               f"fresh-rate {run.fresh_coverage_rate:.3f}, C9 logged {run.C9_logged:.3f}")
    manifest = RunManifest.build("refine", {"generations": generations,
                                            "domain_samples": domain_samples,
                                            "kappa_init": kappa_init, "jobs": jobs},
                                 model_to_dict(model), bundle, {"seed": seed}, [str(art)])
    _finish(None, out, manifest, run.coverage_ok)


@main.command("entropy")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--r-grid", default="1,2,3", show_default=True)
@click.option("--eps-grid", default="0.2,0.1", show_default=True)
@click.option("--budget", default=200, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def entropy_cmd(model_path, r_grid, eps_grid, budget, out, seed, jobs):
    """Entropy slope table over an (R, eps) grid, with CSV and SVG output."""
    model = _load_model(model_path)
    bundle = desk_bundle(model)
    Rs = [float(x) for x in r_grid.split(",")]
    epss = [float(x) for x in eps_grid.split(",")]
    rep = entropy_estimate(model, Rs, epss, sample_budget=budget, rng_seed=seed)
    problems = rep.validate()
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    art1 = write_csv(outp / "entropy_grid.csv", rep.csv_rows())
    art2 = write_slope_svg(outp / "entropy_slopes.svg", rep)
    click.echo(f"entropy: max slope {rep.max_slope:.4f}; invariants "
               f"{'ok' if not problems else problems}")
    manifest = RunManifest.build("entropy", {"R_grid": r_grid, "eps_grid": eps_grid,
                                             "budget": budget, "jobs": jobs},
                                 model_to_dict(model), bundle, {"seed": seed},
                                 [str(art1), str(art2)])
    _finish(None, out, manifest, not problems)


@main.command("verify-all")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--quick/--full", default=True, show_default=True)
@click.option("--jobs", default=1, show_default=True)
@click.pass_context
def verify_all(ctx, model_path, out, seed, quick, jobs):
    """Run the lemma-indexed desk suite end to end (reduced sizes with --quick)."""
    pairs = 30 if quick else 100
    budget = 120 if quick else 300
    failures = []
    for name, cmd, kwargs in [
        ("cells", cells_cmd, {"kappa": 10.0, "pairs": pairs, "h": 0.05}),
        ("mesh", mesh_cmd, {"r_sing_target": 0.1, "reach_samples": 40 if quick else 200}),
        ("holonomy", holonomy_cmd, {}),
        ("tree", tree_cmd, {"h1": 0.3, "c8": 2.0, "depth": 4 if quick else 6,
                            "node_cap": 8000 if quick else 50000,
                            "coverage_samples": 8000 if quick else 50000}),
        ("refine", refine_cmd, {"generations": 2 if quick else 6,
                                "domain_samples": 150 if quick else 400}),
        ("entropy", entropy_cmd, {"r_grid": "1,2", "eps_grid": "0.2,0.1", "budget": budget}),
    ]:
        sub = Path(out) / name
        try:
            ctx.invoke(cmd, model_path=model_path, out=str(sub), seed=seed, jobs=jobs, **kwargs)
        except SystemExit as e:
            if e.code:
                failures.append(name)
        except FoliationLabError as e:
            click.echo(f"{name}: error {e}", err=True)
            failures.append(name)
    if failures:
        click.echo(f"verify-all: FAILURES in {failures}", err=True)
        sys.exit(1)
    click.echo("verify-all: all checks passed")


if __name__ == "__main__":
    main()
