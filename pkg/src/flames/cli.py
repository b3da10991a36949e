"""Command-line entry points: event generation, model runs, bound
verification, complexity benchmarks, and the delayed-recall experiment.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
configuration error.  Every run writes one manifest next to its outputs;
all outputs except the manifest and benchmark timings byte-reproduce under
a fixed seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from . import analysis
from . import events as ev
from . import model as md
from . import reports
from .model import ConfigError


def _parse_geometry(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ConfigError(f"geometry: expected WxH, got {text!r}") from None


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _write_manifest(
    path: Path,
    command: str,
    seed: int,
    inputs: list[str],
    outputs: list[str],
    wall_time: float,
    config_path: str | None = None,
    extra: dict | None = None,
) -> None:
    doc = {
        "command": command,
        "config": config_path,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "version": __version__,
        "wall_time_s": round(wall_time, 6),
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"manifest: {path} (seed={seed})")


def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    geometry = _parse_geometry(args.geometry) if args.geometry else None
    if args.periodic is not None:
        stream = ev.generate_periodic(
            args.periodic, args.duration, args.channels, geometry=geometry
        )
    else:
        stream = ev.generate_poisson(
            args.poisson, args.duration, args.channels, seed=args.seed,
            geometry=geometry,
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(ev.serialize_events(stream))
    print(f"wrote {len(stream)} events to {out}")
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        command="gen",
        seed=args.seed,
        inputs=[],
        outputs=[str(out)],
        wall_time=time.perf_counter() - t0,
    )
    return 0


def _load_config(args) -> md.ModelConfig:
    overrides = {}
    if args.no_dendrite:
        overrides["no_dendrite"] = True
    if args.no_sa_hippo:
        overrides["no_sa_hippo"] = True
    if args.mode:
        overrides["mode"] = args.mode
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise FileNotFoundError(str(cfg_path))
        base = md.config_from_json(cfg_path.read_text())
        if overrides:
            base = dataclasses.replace(base, **overrides)
        return base
    return md.config_from_variant(args.variant, **overrides)


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    config = _load_config(args)
    input_path = Path(args.input)
    if not input_path.exists():
        raise FileNotFoundError(str(input_path))
    stream = ev.ingest_events(input_path.read_text())
    scores, diag = md.forward(config, stream, seed=args.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores_path = out_dir / "scores.csv"
    scores_path.write_text(
        "index,score\n"
        + "".join(f"{i},{float(s)!r}\n" for i, s in enumerate(scores))
    )
    diag_path = out_dir / "diagnostics.csv"
    flags = (
        f"# f_identity={int(diag.f_identity)}"
        f" dendrite_branches={diag.dendrite_branches}"
        f" mode={diag.mode}"
        f" input_batches={diag.input_batches}"
        f" front_spikes={diag.front_spikes}"
        f" envelope_certified={int(diag.envelope_certified)}\n"
    )
    diag_path.write_text(flags + diag.to_csv())
    outputs = [str(scores_path), str(diag_path)]
    if not args.no_figures:
        fig = reports.render_diagnostics_figure(diag, out_dir / "diagnostics.png")
        outputs.append(str(fig))
    cfg_path = out_dir / "config_resolved.json"
    cfg_path.write_text(md.config_to_json(config) + "\n")
    outputs.append(str(cfg_path))
    print(f"ran {config.variant} over {diag.input_batches} batches -> {scores_path}")
    _write_manifest(
        out_dir / "manifest.json",
        command="run",
        seed=args.seed,
        inputs=[str(input_path)],
        outputs=outputs,
        wall_time=time.perf_counter() - t0,
        config_path=args.config,
    )
    return 0


_SUITES = ("norm", "taylor", "lyapunov", "ultimate")


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    suites = _SUITES if args.suite == "all" else (args.suite,)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    all_reports = []
    for suite in suites:
        if suite == "norm":
            report = analysis.verify_norm_bound(
                order=args.n,
                trials=args.trials,
                horizon=args.horizon,
                s_inf=args.s_inf,
                seed=args.seed,
            )
        elif suite == "taylor":
            report = analysis.verify_taylor_bound(
                dims=(args.n,),
                trials=args.trials,
                seed=args.seed,
                fault_order_label=args.inject_fault == "taylor-order",
            )
        elif suite == "lyapunov":
            report = analysis.verify_lyapunov(trials=args.trials, seed=args.seed)
        else:
            report = analysis.verify_ultimate_bound(
                order=args.n,
                trials=args.trials,
                s_inf=args.s_inf,
                seed=args.seed,
            )
        path = out_dir / f"{report.name}.json"
        path.write_text(report.to_json() + "\n")
        outputs.append(str(path))
        if not args.no_figures:
            fig = reports.render_report_figure(
                report, out_dir / f"{report.name}.png"
            )
            outputs.append(str(fig))
        all_reports.append(report)
        print(
            f"{report.name}: trials={report.trials} violations={report.violations}"
            f" premise_violations={report.premise_violations}"
        )
    _write_manifest(
        out_dir / "manifest.json",
        command="verify",
        seed=args.seed,
        inputs=[],
        outputs=outputs,
        wall_time=time.perf_counter() - t0,
        extra={"suites": list(suites)},
    )
    return 0 if all(r.violations == 0 for r in all_reports) else 1


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    sizes = _parse_int_list(args.sizes)
    rows = analysis.bench_complexity(
        sizes=sizes, rank=args.rank, reps=args.reps, seed=args.seed
    )
    warning = None
    if args.reps < 31:
        warning = f"reps={args.reps} below the recommended 31; medians are noisy"
        print(f"warning: {warning}", file=sys.stderr)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "bench.csv"
    csv_path.write_text(analysis.bench_rows_to_csv(rows, warning=warning))
    outputs = [str(csv_path)]
    if not args.no_figures:
        fig = reports.render_bench_figure(rows, out_dir / "bench.png")
        outputs.append(str(fig))
    print(f"bench rows: {len(rows)} -> {csv_path}")
    _write_manifest(
        out_dir / "manifest.json",
        command="bench",
        seed=args.seed,
        inputs=[],
        outputs=outputs,
        wall_time=time.perf_counter() - t0,
    )
    return 0


def cmd_recall(args) -> int:
    t0 = time.perf_counter()
    delays = _parse_int_list(args.delays)
    rows = analysis.delayed_recall_experiment(
        delays=delays, trials=args.trials, seed=args.seed
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "recall.csv"
    csv_path.write_text(analysis.recall_rows_to_csv(rows))
    outputs = [str(csv_path)]
    if not args.no_figures:
        fig = reports.render_recall_figure(rows, out_dir / "recall.png")
        outputs.append(str(fig))
    for row in rows:
        print(
            f"delay={row['delay']}: kernel={row['acc_kernel']:.3f}"
            f" lif={row['acc_lif']:.3f}"
        )
    _write_manifest(
        out_dir / "manifest.json",
        command="recall",
        seed=args.seed,
        inputs=[],
        outputs=outputs,
        wall_time=time.perf_counter() - t0,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flames",
        description="Event-driven spiking state-space toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic event file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--periodic", type=float, metavar="PERIOD_S")
    group.add_argument("--poisson", type=float, metavar="RATE_HZ")
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--geometry", type=str, default=None, metavar="WxH")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run the model over an event file")
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--config", type=str, default=None)
    p.add_argument(
        "--variant", choices=("tiny", "small", "normal"), default="tiny"
    )
    p.add_argument("--no-dendrite", action="store_true")
    p.add_argument("--no-sa-hippo", action="store_true")
    p.add_argument("--mode", choices=("recurrent", "fft"), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run bound-verification suites")
    p.add_argument(
        "--suite", choices=_SUITES + ("all",), required=True
    )
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--s-inf", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument(
        "--inject-fault",
        choices=("taylor-order",),
        default=None,
        help="self-test hook: evaluate one series order below the bound label",
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="matvec complexity benchmark")
    p.add_argument("--sizes", type=str, default="128,256,512,1024")
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--reps", type=int, default=31)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("recall", help="delayed-recall memory experiment")
    p.add_argument("--delays", type=str, default="0,10,50")
    p.add_argument("--trials", type=int, default=240)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_recall)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("FLAMES_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 1
    except ev.EventFormatError as exc:
        print(f"event format error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
