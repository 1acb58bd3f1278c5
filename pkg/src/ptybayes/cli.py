"""Command-line surface.

Subcommands: simulate, sample, rpie, metrics, phantoms, benchmark.

Runs are configured by an INI-style file (``key = value`` under sections)
plus repeatable ``--set section.key=value`` overrides; overrides win. Every
command writes exactly one plain-text manifest next to its outputs holding
the fully resolved parameters, the input/output paths, the engine version,
and the wall clock; a manifest is itself a valid ``--config`` file, so
re-running from it reproduces the outputs bit-exactly (the manifest is the
only output that embeds timing).

All randomness flows from the three named seeds in ``[seeds]``
(data/chain/rpie); there is no ambient entropy.

Exit codes: 0 success; 2 argument/config parse failure; 3 file I/O or
format failure; 4 geometry/validation failure; 5 divergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import formats
from .errors import (ConfigError, DivergedError, FormatError, GeometryError,
                     ValidationError)
from .experiment import (ExperimentConfig, aggregate_rows, ingest_idx,
                         l2_error, make_disk_probe, make_phantom,
                         make_scan_plan, run_benchmark,
                         uncertainty_error_report, BENCHMARK_COLUMNS)
from .generator import load_model
from .inference import (ChainConfig, PosteriorEnsemble, init_latent,
                        run_chain)
from .physics import DiffractionStack, Probe, ScanPlan, simulate_dataset
from .rpie import RpieConfig, run_rpie

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_GEOMETRY = 4
EXIT_DIVERGED = 5

# section -> key -> (type, default); None default means "required when used"
_SCHEMA = {
    "geometry": {"object_side": (int, 64), "patch_side": (int, 16)},
    "probe": {"side": (int, 16), "radius": (float, 8.0),
              "amplitude": (float, 100.0), "path": (str, "")},
    "scan": {"overlap": (float, 0.05), "jitter": (int, 1)},
    "object": {"path": (str, "")},
    "noise": {"enabled": (bool, True)},
    "chain": {"step_size": (float, 1e-5), "n_iters": (int, 1000),
              "burn_in": (int, 500), "intensity_floor": (float, 1e-12),
              "init_iters": (int, 500), "init_step_size": (float, 1e-2),
              "sample_stride": (int, 100)},
    "rpie": {"alpha": (float, 0.05), "n_epochs": (int, 300),
             "init_path": (str, "")},
    "seeds": {"data": (int, 1), "chain": (int, 2), "rpie": (int, 3)},
    "benchmark": {"overlaps": (str, "0.05,0.2"), "amplitudes": (str, "100"),
                  "n_objects": (int, 10), "idx_path": (str, ""),
                  "model_path": (str, "")},
}
# manifest metadata sections are accepted (and ignored) on input
_META_SECTIONS = ("run", "inputs", "outputs")


def _coerce(section: str, key: str, raw: str):
    typ, _ = _SCHEMA[section][key]
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"parse error: [{section}] {key} = {raw!r}") from exc


def load_config(path: str | None, overrides=()) -> dict:
    """Resolve defaults, optional file values, then --set overrides."""
    resolved = {sec: {k: d for k, (_, d) in keys.items()}
                for sec, keys in _SCHEMA.items()}
    if path:
        parser = configparser.ConfigParser()
        try:
            with open(path, "r") as f:
                parser.read_file(f)
        except configparser.Error as exc:
            raise ConfigError(f"parse error in {path}: {exc}") from exc
        for section in parser.sections():
            if section in _META_SECTIONS:
                continue
            if section not in _SCHEMA:
                raise ConfigError(f"parse error: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"parse error: unknown key [{section}] {key}")
                resolved[section][key] = _coerce(section, key, raw)
    for item in overrides:
        target, _, raw = item.partition("=")
        section, _, key = target.partition(".")
        if not raw and "=" not in item:
            raise ConfigError(f"parse error: --set needs section.key=value, got {item!r}")
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"parse error: unknown option {target!r}")
        resolved[section][key] = _coerce(section, key, raw)
    return resolved


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_manifest(path, command: str, cfg: dict, inputs: dict, outputs: dict,
                   wall_clock: float, extra: dict | None = None) -> None:
    parser = configparser.ConfigParser()
    parser["run"] = {"command": command,
                     "engine_version": __version__,
                     "created": datetime.now(timezone.utc).isoformat(),
                     "wall_clock_s": _fmt(wall_clock)}
    if extra:
        for key, value in extra.items():
            parser["run"][key] = _fmt(value)
    parser["inputs"] = {k: str(v) for k, v in inputs.items()}
    parser["outputs"] = {k: str(v) for k, v in outputs.items()}
    for section, keys in cfg.items():
        parser[section] = {k: _fmt(v) for k, v in keys.items()}
    with open(path, "w") as f:
        parser.write(f)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _resolve_probe(cfg: dict, probe_path: str | None,
                   inputs: dict) -> Probe:
    path = probe_path or cfg["probe"]["path"]
    if path:
        fld, amplitude = formats.load_prbe(path)
        inputs["probe"] = path
        return Probe(field=fld, amplitude=amplitude)
    return make_disk_probe(cfg["probe"]["side"], cfg["probe"]["radius"],
                           cfg["probe"]["amplitude"])


def _load_dataset(path) -> tuple[DiffractionStack, ScanPlan]:
    anchors, patch_side, object_side, frames = formats.load_ptyd(path)
    plan = ScanPlan(anchors=anchors, patch_size=patch_side,
                    object_size=object_side)
    stack = DiffractionStack(frames=frames, plan_digest=plan.digest())
    stack.verify(plan)
    return stack, plan


def _chain_config(cfg: dict) -> ChainConfig:
    c = cfg["chain"]
    return ChainConfig(step_size=c["step_size"], n_iters=c["n_iters"],
                       burn_in=c["burn_in"], seed=cfg["seeds"]["chain"],
                       intensity_floor=c["intensity_floor"])


def _save_map_with_preview(directory: Path, stem: str, data, channel: str):
    formats.save_pmap(directory / f"{stem}.pmap", data, stem, channel)
    formats.save_pgm(directory / f"{stem}.pgm", data)
    return {stem: directory / f"{stem}.pmap",
            f"{stem}_preview": directory / f"{stem}.pgm"}


# ---------------------------------------------------------------------------
# Subcommands

def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = load_config(args.config, args.set or ())
    if not cfg["object"]["path"]:
        raise ConfigError("parse error: [object] path is required for simulate")
    truth = formats.load_pobj(cfg["object"]["path"])
    geom = cfg["geometry"]
    if truth.shape != (geom["object_side"], geom["object_side"]):
        raise GeometryError("geometry mismatch: object file does not match "
                            "[geometry] object_side")
    inputs = {"object": cfg["object"]["path"]}
    probe = _resolve_probe(cfg, None, inputs)
    if probe.side != geom["patch_side"]:
        raise GeometryError("geometry mismatch: probe side != patch_side")
    exp = ExperimentConfig(overlap_ratio=cfg["scan"]["overlap"],
                           probe_amplitude=probe.amplitude,
                           jitter=cfg["scan"]["jitter"],
                           object_side=geom["object_side"],
                           patch_side=geom["patch_side"])
    seed_data = cfg["seeds"]["data"]
    plan = make_scan_plan(exp, np.random.SeedSequence([seed_data, 0]))
    stack = simulate_dataset(truth, probe, plan,
                             np.random.SeedSequence([seed_data, 1]),
                             noise=cfg["noise"]["enabled"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats.save_ptyd(out, plan.anchors, plan.patch_size, plan.object_size,
                      stack.frames)
    probe_path = out.with_suffix(".prbe")
    formats.save_prbe(probe_path, probe.field, probe.amplitude)
    write_manifest(out.with_suffix(".manifest"), "simulate", cfg, inputs,
                   {"dataset": out, "probe": probe_path},
                   time.perf_counter() - t0,
                   extra={"n_positions": plan.n_positions,
                          "plan_digest": stack.plan_digest})
    print(f"simulate: wrote {out} ({plan.n_positions} positions)")
    return EXIT_OK


def cmd_sample(args) -> int:
    t0 = time.perf_counter()
    cfg = load_config(args.config, args.set or ())
    stack, plan = _load_dataset(args.data)
    inputs = {"dataset": args.data, "model": args.model}
    probe = _resolve_probe(cfg, args.probe, inputs)
    if probe.side != plan.patch_size:
        raise GeometryError("geometry mismatch: probe side != dataset patch size")
    model = load_model(args.model)
    if model.output_side != plan.object_size:
        raise GeometryError("geometry mismatch: generator output != object grid")
    chain_cfg = _chain_config(cfg)
    z0, init_obj = init_latent(model, cfg["chain"]["init_iters"],
                               cfg["chain"]["init_step_size"])
    ensemble = run_chain(z0, stack, probe, plan, model, chain_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    formats.save_pobj(out / "mean.pobj", ensemble.mean_object)
    outputs["mean"] = out / "mean.pobj"
    outputs.update(_save_map_with_preview(out, "mean_magnitude",
                                          np.abs(ensemble.mean_object),
                                          "magnitude"))
    outputs.update(_save_map_with_preview(out, "mean_phase",
                                          np.angle(ensemble.mean_object),
                                          "phase"))
    outputs.update(_save_map_with_preview(out, "std_magnitude",
                                          ensemble.std_magnitude, "magnitude"))
    outputs.update(_save_map_with_preview(out, "std_phase",
                                          ensemble.std_phase, "phase"))
    stride = max(cfg["chain"]["sample_stride"], 1)
    for i in range(0, ensemble.samples.shape[0], stride):
        name = f"sample_{chain_cfg.burn_in + i:05d}.pobj"
        formats.save_pobj(out / name, ensemble.samples[i])
        outputs[f"sample_{chain_cfg.burn_in + i:05d}"] = out / name
    trace_rows = [(k, ensemble.trace.log_likelihood[k],
                   ensemble.trace.grad_norm[k])
                  for k in range(chain_cfg.n_iters)]
    _write_csv(out / "trace.csv", ("iteration", "log_likelihood", "grad_norm"),
               trace_rows)
    outputs["trace"] = out / "trace.csv"
    write_manifest(out / "run.manifest", "sample", cfg, inputs, outputs,
                   time.perf_counter() - t0,
                   extra={"init_objective": init_obj,
                          "n_samples": ensemble.samples.shape[0]})
    print(f"sample: wrote {out} ({ensemble.samples.shape[0]} posterior samples)")
    return EXIT_OK


def cmd_rpie(args) -> int:
    t0 = time.perf_counter()
    cfg = load_config(args.config, args.set or ())
    stack, plan = _load_dataset(args.data)
    inputs = {"dataset": args.data}
    probe = _resolve_probe(cfg, args.probe, inputs)
    if probe.side != plan.patch_size:
        raise GeometryError("geometry mismatch: probe side != dataset patch size")
    init_obj = None
    if cfg["rpie"]["init_path"]:
        init_obj = formats.load_pobj(cfg["rpie"]["init_path"])
        inputs["init_object"] = cfg["rpie"]["init_path"]
    rpie_cfg = RpieConfig(alpha=cfg["rpie"]["alpha"],
                          n_epochs=cfg["rpie"]["n_epochs"],
                          seed=cfg["seeds"]["rpie"], init_object=init_obj)
    recon, misfit = run_rpie(stack, probe, plan, rpie_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    formats.save_pobj(out / "recon.pobj", recon)
    outputs["recon"] = out / "recon.pobj"
    outputs.update(_save_map_with_preview(out, "recon_magnitude",
                                          np.abs(recon), "magnitude"))
    outputs.update(_save_map_with_preview(out, "recon_phase",
                                          np.angle(recon), "phase"))
    _write_csv(out / "misfit.csv", ("epoch", "misfit"),
               [(e, misfit[e]) for e in range(len(misfit))])
    outputs["misfit"] = out / "misfit.csv"
    write_manifest(out / "run.manifest", "rpie", cfg, inputs, outputs,
                   time.perf_counter() - t0,
                   extra={"final_misfit": float(misfit[-1])})
    print(f"rpie: wrote {out} (final misfit {misfit[-1]:.6g})")
    return EXIT_OK


def cmd_metrics(args) -> int:
    t0 = time.perf_counter()
    truth = formats.load_pobj(args.truth)
    inputs = {"truth": args.truth}
    header = ["l2_error"]
    if args.ensemble:
        ens_dir = Path(args.ensemble)
        mean = formats.load_pobj(ens_dir / "mean.pobj")
        std_mag, _ = formats.load_pmap(ens_dir / "std_magnitude.pmap")
        std_phase, _ = formats.load_pmap(ens_dir / "std_phase.pmap")
        inputs["ensemble"] = ens_dir
        ensemble = PosteriorEnsemble(
            samples=np.empty((0,) + mean.shape, dtype=np.complex128),
            mean_object=mean, std_magnitude=std_mag, std_phase=std_phase)
        report = uncertainty_error_report(truth, ensemble)
        header += ["pearson_mag", "spearman_mag", "pearson_phase",
                   "spearman_phase"]
        row = [report.l2_error, report.pearson_mag, report.spearman_mag,
               report.pearson_phase, report.spearman_phase]
    elif args.recon:
        recon = formats.load_pobj(args.recon)
        inputs["recon"] = args.recon
        row = [l2_error(truth, recon)]
    else:
        raise ConfigError("parse error: metrics needs --recon or --ensemble")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, header, [row])
    write_manifest(out.with_suffix(".manifest"), "metrics",
                   load_config(None, ()), inputs, {"metrics": out},
                   time.perf_counter() - t0)
    print(",".join(header))
    print(",".join(_fmt(v) for v in row))
    return EXIT_OK


def cmd_phantoms(args) -> int:
    t0 = time.perf_counter()
    images = ingest_idx(args.idx)
    if len(images) < 2 * args.count:
        raise ValidationError(f"insufficient data: need {2 * args.count} "
                              f"images, found {len(images)}")
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(images))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for i in range(args.count):
        mag = images[order[2 * i]]
        phase = images[order[2 * i + 1]]
        phantom = make_phantom(mag, phase, side=args.side)
        path = out / f"phantom_{i:03d}.pobj"
        formats.save_pobj(path, phantom)
        outputs[f"phantom_{i:03d}"] = path
        for channel, values in (("magnitude", np.abs(phantom)),
                                ("phase", np.angle(phantom))):
            map_path = out / f"phantom_{i:03d}_{channel}.pmap"
            formats.save_pmap(map_path, values, f"phantom_{i:03d}_{channel}",
                              channel)
            outputs[f"phantom_{i:03d}_{channel}"] = map_path
    cfg = load_config(None, ())
    cfg["seeds"]["data"] = args.seed
    write_manifest(out / "run.manifest", "phantoms", cfg,
                   {"idx": args.idx}, outputs, time.perf_counter() - t0,
                   extra={"count": args.count, "side": args.side})
    print(f"phantoms: wrote {args.count} objects to {out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    t0 = time.perf_counter()
    cfg = load_config(args.config, args.set or ())
    bench = cfg["benchmark"]
    if not bench["idx_path"] or not bench["model_path"]:
        raise ConfigError("parse error: [benchmark] idx_path and model_path "
                          "are required")
    model = load_model(bench["model_path"])
    images = ingest_idx(bench["idx_path"])
    n_objects = bench["n_objects"]
    if len(images) < 2 * n_objects:
        raise ValidationError("insufficient data: IDX file too small for "
                              f"{n_objects} phantoms")
    seeds = (cfg["seeds"]["data"], cfg["seeds"]["chain"], cfg["seeds"]["rpie"])
    rng = np.random.default_rng(seeds[0])
    order = rng.permutation(len(images))
    side = cfg["geometry"]["object_side"]
    phantoms = [make_phantom(images[order[2 * i]], images[order[2 * i + 1]],
                             side=side)
                for i in range(n_objects)]
    try:
        overlaps = [float(v) for v in bench["overlaps"].split(",") if v.strip()]
        amplitudes = [float(v) for v in bench["amplitudes"].split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError("parse error: [benchmark] overlaps/amplitudes") from exc
    configs = [ExperimentConfig(overlap_ratio=o, probe_amplitude=a,
                                jitter=cfg["scan"]["jitter"],
                                object_side=side,
                                patch_side=cfg["geometry"]["patch_side"],
                                seeds=seeds)
               for o in overlaps for a in amplitudes]
    rpie_cfg = RpieConfig(alpha=cfg["rpie"]["alpha"],
                          n_epochs=cfg["rpie"]["n_epochs"], seed=seeds[2])
    rows = run_benchmark(configs, phantoms, model, rpie_cfg,
                         _chain_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "runs.csv", BENCHMARK_COLUMNS + ("error",),
               [row.values() + [row.error] for row in rows])
    aggregates = aggregate_rows(rows)
    agg_header = list(aggregates[0].keys()) if aggregates else ["overlap_ratio"]
    _write_csv(out / "aggregate.csv", agg_header,
               [[a[k] for k in agg_header] for a in aggregates])
    write_manifest(out / "run.manifest", "benchmark", cfg,
                   {"idx": bench["idx_path"], "model": bench["model_path"]},
                   {"runs": out / "runs.csv",
                    "aggregate": out / "aggregate.csv"},
                   time.perf_counter() - t0,
                   extra={"n_rows": len(rows)})
    print(f"benchmark: wrote {len(rows)} rows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptybayes",
        description="Ptychographic simulation, posterior sampling, and rPIE")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="INI config file (or a manifest)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("simulate", help="synthesize a diffraction dataset")
    add_common(p)
    p.add_argument("--out", required=True, help="output PTYD path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sample", help="posterior sampling over the prior")
    add_common(p)
    p.add_argument("--data", required=True, help="input PTYD dataset")
    p.add_argument("--model", required=True, help="generator PGEN file")
    p.add_argument("--probe", help="PRBE probe (defaults to [probe] config)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("rpie", help="iterative baseline reconstruction")
    add_common(p)
    p.add_argument("--data", required=True, help="input PTYD dataset")
    p.add_argument("--probe", help="PRBE probe (defaults to [probe] config)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_rpie)

    p = sub.add_parser("metrics", help="score a reconstruction or ensemble")
    p.add_argument("--truth", required=True, help="ground-truth POBJ")
    p.add_argument("--recon", help="reconstruction POBJ")
    p.add_argument("--ensemble", help="directory written by `sample`")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("phantoms", help="build complex phantoms from IDX images")
    p.add_argument("--idx", required=True, help="IDX image file")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", type=int, default=64)
    p.set_defaults(func=cmd_phantoms)

    p = sub.add_parser("benchmark", help="sweep conditions over many phantoms")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GeometryError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
