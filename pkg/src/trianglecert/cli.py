"""Command-line front end.

Every command writes its numerical outputs (JSON/CSV) plus, unless --no-plot
is given, a rendered figure, into --out, together with a manifest recording
the full configuration, seeds and content hashes.  Exit codes: 0 = completed
and classical-compatible/feasible, 10 = nonclassicality witnessed, 20 =
numerically ambiguous, anything else = error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dist import OutcomeDistribution
from .entropic import entropic_witness
from .errors import CapacityError, DomainError, StateError
from .events import (PipelineConfig, bulk_config, counts_to_distribution,
                     counts_to_json, load_events_csv, save_events_csv,
                     sixfold_coincidences, synthesize,
                     twofold_coincidences)
from .inflation import InflationProblem, assemble_lp, verify_certificate_streaming
from .lpsolve import solve_assembled
from .manifest import RunManifest, stamp_csv, stamp_json
from .oracle import OracleConfig, visibility_sweep
from .quantum import born_rule, fritz_model
from .witness import Certificate, certificate_from_lp, evaluate, poisson_mc_error

EXIT_OK = 0
EXIT_NONCLASSICAL = 10
EXIT_AMBIGUOUS = 20
EXIT_ERROR = 1


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _merge_config(args, argv):
    """Flag > config file > parser default: config entries apply only to
    options not explicitly present on the command line."""
    if not getattr(args, "config", None):
        return args
    overrides = json.loads(Path(args.config).read_text())
    argv = list(argv or [])
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        flag = "--" + key.replace("_", "-")
        given = any(tok == flag or tok.startswith(flag + "=") for tok in argv)
        if not given:
            setattr(args, attr, value)
    return args


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


OUTPUT_KEYS = {"out", "events_out", "cert_out", "no_plot", "verbose"}


def _manifest(args, command: str) -> RunManifest:
    items = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in {"func", "config"} and not k.startswith("_")
    }
    config = {k: v for k, v in items.items() if k not in OUTPUT_KEYS}
    out_opts = {k: v for k, v in items.items() if k in OUTPUT_KEYS}
    return RunManifest(command=command, config=config, output_options=out_opts,
                       seeds={"seed": getattr(args, "seed", 0)})


def _write(manifest: RunManifest, path: Path, text: str):
    path.write_text(text)
    manifest.record_output(path)


def _load_dist(path) -> OutcomeDistribution:
    return OutcomeDistribution.from_json(Path(path).read_text())


def _dist_for(args, manifest) -> OutcomeDistribution:
    if getattr(args, "dist", None):
        manifest.add_input(args.dist)
        return _load_dist(args.dist)
    return born_rule(fritz_model(args.visibility, args.anticorr))


def _parse_grid(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fritz(args, parser) -> int:
    out = _outdir(args)
    manifest = _manifest(args, "fritz")
    p = born_rule(fritz_model(args.visibility, args.anticorr))
    _write(manifest, out / "distribution.json", stamp_json(p.to_json(), manifest))
    if not args.no_plot:
        from .report import distribution_bars

        fig = distribution_bars(
            p.probabilities, out / "distribution.png",
            title=f"Fritz distribution (v_s={args.visibility}, eps={args.anticorr})",
            meta={"manifest_hash": manifest.hash})
        manifest.record_output(fig)
    manifest.write(out)
    nonzero = int((p.probabilities > 1e-12).sum())
    print(f"fritz: wrote {out / 'distribution.json'} ({nonzero} nonzero entries)")
    return EXIT_OK


def cmd_inflation_test(args, parser) -> int:
    out = _outdir(args)
    manifest = _manifest(args, "inflation-test")
    p = _dist_for(args, manifest)
    d = p.variables[0].cardinality
    problem = InflationProblem(d)
    seed_dist = None
    if args.seed_dist:
        manifest.add_input(args.seed_dist)
        seed_dist = _load_dist(args.seed_dist)
    assembled = assemble_lp(problem, p, args.mode, seed=seed_dist,
                            tolerance=args.tolerance,
                            allow_large=args.allow_large)
    result = solve_assembled(assembled)
    report = {
        "mode": args.mode,
        "d": d,
        "status": result.status,
        "objective": result.objective,
        "rows": assembled.n_rows,
        "columns": assembled.n_cols,
        "iterations": result.iterations,
        "runtime_s": round(result.runtime, 3),
    }
    code = EXIT_OK
    if result.status == "infeasible":
        cert = certificate_from_lp(assembled, result)
        ok, min_slack, y_dot_v = verify_certificate_streaming(
            problem, cert.values, assembled.v_full)
        if not ok:
            report["status"] = "ambiguous"
            code = EXIT_AMBIGUOUS
        else:
            V = evaluate(cert, p)
            report.update(V=V, margin=cert.margin, min_slack=min_slack)
            cert_path = Path(args.cert_out) if args.cert_out else out / "certificate.json"
            _write(manifest, cert_path,
                   stamp_json(cert.with_verification(min_slack, y_dot_v), manifest))
            if not args.no_plot:
                from .report import certificate_heatmap

                manifest.record_output(certificate_heatmap(
                    cert, out / "certificate.png",
                    meta={"manifest_hash": manifest.hash}))
            code = EXIT_NONCLASSICAL
    elif result.status == "ambiguous":
        code = EXIT_AMBIGUOUS
    _write(manifest, out / "inflation_report.json",
           stamp_json(json.dumps(report), manifest))
    manifest.write(out)
    print(f"inflation-test [{args.mode}, d={d}]: {report['status']}"
          + (f", V={report.get('V'):.6g}" if "V" in report else ""))
    return code


def cmd_entropic_test(args, parser) -> int:
    out = _outdir(args)
    manifest = _manifest(args, "entropic-test")
    p = _dist_for(args, manifest)
    rep = entropic_witness(p)
    doc = json.loads(rep.to_json())
    if args.counts:
        manifest.add_input(args.counts)
        from .events import counts_from_json

        counts = counts_from_json(Path(args.counts).read_text())
        rng = np.random.default_rng(args.seed)
        draws = rng.poisson(counts, size=(args.trials, counts.size)).astype(float)
        vals = []
        for row in draws:
            if row.sum() <= 0:
                continue
            q = OutcomeDistribution(p.variables, row / row.sum(), atol=1e-9)
            vals.append(entropic_witness(q).value)
        vals = np.asarray(vals)
        doc["mc"] = {
            "trials": int(vals.size),
            "stderr": float(vals.std(ddof=1)),
            "mean": float(vals.mean()),
            "sigmas_below_zero": float(-vals.mean() / vals.std(ddof=1))
            if vals.mean() < 0 else 0.0,
        }
    _write(manifest, out / "entropic_report.json",
           stamp_json(json.dumps(doc), manifest))
    manifest.write(out)
    print(f"entropic-test: E = {rep.value:.6f} (S_chsh={rep.s_chsh:.6f}, "
          f"theta={rep.theta:.6f})")
    return EXIT_NONCLASSICAL if rep.value < 0 else EXIT_OK


def cmd_ml_test(args, parser) -> int:
    out = _outdir(args)
    manifest = _manifest(args, "ml-test")
    p = _dist_for(args, manifest)
    base = OracleConfig(batch_size=args.batch, max_epochs=args.epochs,
                        patience=args.patience, learning_rate=args.lr,
                        seed=args.seed)
    grid = _parse_grid(args.grid)
    verbose = (lambda v, arch, m: print(f"  v={v:g} {arch}: mse={m:.2e}")) \
        if args.verbose else None
    sweep = visibility_sweep(p, grid, base, progress=verbose)
    _write(manifest, out / "ml_sweep.csv", stamp_csv(sweep.to_csv(), manifest))
    if not args.no_plot:
        from .report import ml_sweep_figure

        manifest.record_output(ml_sweep_figure(
            sweep, out / "ml_sweep.png", meta={"manifest_hash": manifest.hash}))
    manifest.write(out)
    knee = sweep.knee
    print("ml-test (advisory heuristic, not a certificate): "
          + (f"fit breaks down near v={knee:g}" if knee is not None
             else "no misfit knee found on the grid"))
    return EXIT_NONCLASSICAL if knee is not None else EXIT_OK


def _pipeline_config(args) -> PipelineConfig:
    if args.profile == "bulk":
        return bulk_config(duration_s=args.duration, seed=args.seed)
    return PipelineConfig(duration_s=args.duration, seed=args.seed)


def cmd_events_simulate(args, parser) -> int:
    out = _outdir(args)
    manifest = _manifest(args, "events-simulate")
    p = _dist_for(args, manifest)
    cfg = _pipeline_config(args)
    streams = synthesize(p, cfg)
    twofolds = twofold_coincidences(streams, cfg.w1_ps)
    sixfolds = sixfold_coincidences(twofolds, cfg.w2_ps)
    counts, dist = counts_to_distribution(sixfolds)
    if args.events_out:
        save_events_csv(streams, args.events_out,
                        comment=f"manifest_hash={manifest.hash}")
        manifest.record_output(args.events_out)
    _write(manifest, out / "counts.json", stamp_json(counts_to_json(counts), manifest))
    _write(manifest, out / "distribution.json", stamp_json(dist.to_json(), manifest))
    if not args.no_plot:
        from .report import distribution_bars

        manifest.record_output(distribution_bars(
            dist.probabilities, out / "distribution.png",
            title=f"reconstructed distribution ({len(sixfolds)} six-folds)",
            meta={"manifest_hash": manifest.hash}))
    manifest.write(out)
    print(f"events simulate: {len(sixfolds)} six-folds "
          f"({len(sixfolds) / cfg.duration_s:.1f} Hz)")
    return EXIT_OK


def cmd_events_analyze(args, parser) -> int:
    out = _outdir(args)
    manifest = _manifest(args, "events-analyze")
    manifest.add_input(args.events)
    streams = load_events_csv(args.events)
    w1_ps = int(round(args.w1 * 1000))
    w2_ps = int(round(args.w2 * 1_000_000))
    twofolds = twofold_coincidences(streams, w1_ps)
    sixfolds = sixfold_coincidences(twofolds, w2_ps)
    counts, dist = counts_to_distribution(sixfolds)
    _write(manifest, out / "counts.json", stamp_json(counts_to_json(counts), manifest))
    _write(manifest, out / "distribution.json", stamp_json(dist.to_json(), manifest))
    manifest.write(out)
    print(f"events analyze: {len(sixfolds)} six-folds at w1={args.w1} ns, "
          f"w2={args.w2} us")
    return EXIT_OK


def _certificate_for_sweep(args, manifest, p) -> Certificate:
    if args.cert:
        manifest.add_input(args.cert)
        return Certificate.from_json(Path(args.cert).read_text())
    seed_dist = born_rule(fritz_model(1.0, 0.0))
    problem = InflationProblem(4)
    assembled = assemble_lp(problem, p, "adapted", seed=seed_dist)
    result = solve_assembled(assembled)
    if result.status != "infeasible":
        raise StateError("could not derive a certificate for the sweep "
                         f"(LP status: {result.status}); pass --cert")
    return certificate_from_lp(assembled, result)


def cmd_sweep(args, parser) -> int:
    if args.kind == "visibility":
        return cmd_ml_test(args, parser)
    out = _outdir(args)
    manifest = _manifest(args, f"sweep-{args.kind}")
    p = _dist_for(args, manifest)
    cfg = _pipeline_config(args)
    streams = synthesize(p, cfg)
    grid = _parse_grid(args.grid) if args.grid else None
    rows = []
    if args.kind == "w1":
        grid = grid or [4.1, 50.0, 400.0, 1500.0, 5000.0]
        cert = _certificate_for_sweep(args, manifest, p)
        for w1_ns in grid:
            twofolds = twofold_coincidences(streams, int(round(w1_ns * 1000)))
            sixfolds = sixfold_coincidences(twofolds, cfg.w2_ps)
            counts, dist = counts_to_distribution(sixfolds)
            wit = poisson_mc_error(cert, counts, trials=args.trials, seed=args.seed)
            ent = entropic_witness(dist)
            rows.append((w1_ns, wit.value, wit.stderr, ent.value, len(sixfolds)))
        header = "w1_ns,V,V_stderr,E,n_sixfold"
    elif args.kind == "w2":
        # kept at or below the profile's generation window: the compressed
        # rates saturate (dead time) past it
        grid = grid or [1.25, 2.5, 5.0, 10.0, 20.0]
        cert = _certificate_for_sweep(args, manifest, p)
        twofolds = twofold_coincidences(streams, cfg.w1_ps)
        for w2_us in grid:
            sixfolds = sixfold_coincidences(twofolds, int(round(w2_us * 1_000_000)))
            counts, dist = counts_to_distribution(sixfolds)
            wit = poisson_mc_error(cert, counts, trials=args.trials, seed=args.seed)
            rows.append((w2_us, wit.value, wit.stderr, float("nan"), len(sixfolds)))
        header = "w2_us,V,V_stderr,E,n_sixfold"
    else:
        raise DomainError(f"unknown sweep kind {args.kind!r}")

    lines = [header] + [",".join(repr(x) for x in row) for row in rows]
    _write(manifest, out / f"sweep_{args.kind}.csv",
           stamp_csv("\n".join(lines) + "\n", manifest))
    if not args.no_plot:
        from .report import sweep_figure

        xs = [r[0] for r in rows]
        meta = {"manifest_hash": manifest.hash}
        manifest.record_output(sweep_figure(
            xs, [r[1] for r in rows], [r[2] for r in rows],
            out / f"sweep_{args.kind}_V.png",
            xlabel=f"{args.kind} window", ylabel="V", logx=True,
            title=f"inequality value vs {args.kind}", meta=meta))
        if args.kind == "w1":
            manifest.record_output(sweep_figure(
                xs, [r[3] for r in rows], None,
                out / "sweep_w1_E.png",
                xlabel="w1 window (ns)", ylabel="E", logx=True,
                title="entropic witness vs w1", meta=meta))
    manifest.write(out)
    print(f"sweep {args.kind}: {len(rows)} points, V ranges "
          f"{min(r[1] for r in rows):.4g} .. {max(r[1] for r in rows):.4g}")
    return EXIT_NONCLASSICAL if rows[0][1] < 0 else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(sp, dist_source=True):
    sp.add_argument("--out", default="runs/latest", help="output directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="JSON config file (flags take precedence)")
    sp.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    if dist_source:
        sp.add_argument("--dist", help="input OutcomeDistribution JSON")
        sp.add_argument("--visibility", type=float, default=1.0,
                        help="Fritz singlet visibility when --dist is absent")
        sp.add_argument("--anticorr", type=float, default=0.0,
                        help="Fritz classical anticorrelation probability")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trianglecert",
        description="Certify nonclassicality of distributions on the "
                    "triangle causal network.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fritz", help="write the (noisy) Fritz distribution")
    _add_common(sp, dist_source=False)
    sp.add_argument("--visibility", type=float, default=1.0)
    sp.add_argument("--anticorr", type=float, default=0.0)
    sp.set_defaults(func=cmd_fritz)

    sp = sub.add_parser("inflation-test",
                        help="second-order inflation LP compatibility test")
    _add_common(sp)
    sp.add_argument("--mode", choices=["full", "twirled", "adapted"],
                    default="adapted")
    sp.add_argument("--cert-out", help="certificate JSON path")
    sp.add_argument("--seed-dist", help="distribution guiding the adapted classes")
    sp.add_argument("--tolerance", type=float, default=None,
                    help="coefficient-class tolerance")
    sp.add_argument("--allow-large", action="store_true",
                    help="permit the full-mode matrix at quaternary cardinality")
    sp.set_defaults(func=cmd_inflation_test)

    sp = sub.add_parser("entropic-test", help="entropic witness E")
    _add_common(sp)
    sp.add_argument("--counts", help="counts JSON for Poissonian error bars")
    sp.add_argument("--trials", type=int, default=10_000)
    sp.set_defaults(func=cmd_entropic_test)

    sp = sub.add_parser("ml-test", help="neural-network compatibility oracle")
    _add_common(sp)
    sp.add_argument("--grid", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    sp.add_argument("--epochs", type=int, default=1200)
    sp.add_argument("--batch", type=int, default=2000)
    sp.add_argument("--patience", type=int, default=150)
    sp.add_argument("--lr", type=float, default=3e-3)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_ml_test)

    sp = sub.add_parser("events", help="time-tag pipeline")
    esub = sp.add_subparsers(dest="events_command", required=True)

    sim = esub.add_parser("simulate", help="synthesize event streams")
    _add_common(sim)
    sim.add_argument("--profile", choices=["default", "bulk"], default="default")
    sim.add_argument("--duration", type=float, default=1.0, help="seconds")
    sim.add_argument("--events-out", help="write raw events CSV here")
    sim.set_defaults(func=cmd_events_simulate)

    ana = esub.add_parser("analyze", help="reduce an event CSV to counts")
    _add_common(ana, dist_source=False)
    ana.add_argument("--events", required=True)
    ana.add_argument("--w1", type=float, default=4.1, help="two-fold window (ns)")
    ana.add_argument("--w2", type=float, default=20.0, help="six-fold window (us)")
    ana.set_defaults(func=cmd_events_analyze)

    sp = sub.add_parser("sweep", help="window / visibility sweeps")
    _add_common(sp)
    sp.add_argument("--kind", choices=["w1", "w2", "visibility"], required=True)
    sp.add_argument("--grid", default=None,
                    help="comma-separated grid (ns for w1, us for w2, v otherwise)")
    sp.add_argument("--profile", choices=["default", "bulk"], default="bulk")
    sp.add_argument("--duration", type=float, default=20.0)
    sp.add_argument("--cert", help="certificate JSON (else adapt one freshly)")
    sp.add_argument("--trials", type=int, default=2000)
    # ml flags reused by --kind visibility
    sp.add_argument("--epochs", type=int, default=1200)
    sp.add_argument("--batch", type=int, default=2000)
    sp.add_argument("--patience", type=int, default=150)
    sp.add_argument("--lr", type=float, default=3e-3)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args, sys.argv[1:] if argv is None else argv)
        return args.func(args, parser)
    except (DomainError, CapacityError, StateError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
