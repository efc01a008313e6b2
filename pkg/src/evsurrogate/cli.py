"""Command-line entry point: characterize, train, eval, simulate, bench, study.

Exit status is 0 on success, 1 when the configuration or an input file is
invalid, and 2 when the pipeline itself fails.  Every command writes its
results into ``--out`` together with ``effective_config.yaml`` (re-runnable
with ``--config``) and ``metadata.json`` (timestamps and wall-clock times, the
only run-dependent content).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import platform
import shutil
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dataset as D
from . import evalkit
from .circuits import CROSSBAR, LIF, CircuitSpec
from .config import ConfigError
from .models import BundleError, load_bundle, save_bundle, train_all
from .models.selection import ModelBundle, TrainingError, select_bundle

log = logging.getLogger("evsurrogate")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
COMMANDS = ("characterize", "train", "eval", "simulate", "bench", "study")


class InputError(ValueError):
    """A named input file is missing or inconsistent with the configuration."""


class Run:
    """Output staging for one command: files land in ``out`` only on success."""

    def __init__(self, cfg: dict, command: str) -> None:
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg["out"])
        self.stage = self.out / f".staging-{command}-{os.getpid()}"
        self.timings: dict[str, float] = {}
        self.extra: dict = {}

    def path(self, name: str) -> Path:
        return self.stage / name

    def __enter__(self) -> "Run":
        self.stage.mkdir(parents=True, exist_ok=True)
        self.started = datetime.now(timezone.utc)
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            shutil.rmtree(self.stage, ignore_errors=True)
            return False
        cfgmod.dump_config(self.cfg, self.path("effective_config.yaml"))
        meta = {
            "command": self.command,
            "started_utc": self.started.isoformat(),
            "finished_utc": datetime.now(timezone.utc).isoformat(),
            "wall_seconds": time.perf_counter() - self.t0,
            "timings": self.timings,
            "python": platform.python_version(),
            "numpy": np.__version__,
            **self.extra,
        }
        self.path("metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=float))
        for f in sorted(self.stage.iterdir()):
            os.replace(f, self.out / f.name)
        self.stage.rmdir()
        return False


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    return path


def _load_dataset(cfg: dict, spec: CircuitSpec, path: str | None) -> D.Dataset:
    p = _require(Path(path) if path else Path(cfg["out"]) / "events.csv", "dataset")
    side = p.with_name("spec.json")
    if side.is_file():
        stored = CircuitSpec.from_dict(json.loads(side.read_text()))
        if stored.fingerprint() != spec.fingerprint():
            raise InputError(f"dataset circuit {stored.fingerprint()} does not match configured circuit "
                             f"{spec.fingerprint()}")
    try:
        return D.import_csv(p, spec)
    except D.DatasetError as exc:
        raise InputError(f"{p}: {exc}") from None


def _load_bundle(cfg: dict, spec: CircuitSpec, path: str | None) -> ModelBundle:
    p = _require(Path(path) if path else Path(cfg["out"]) / "bundle.bin", "model bundle")
    try:
        return load_bundle(p, spec)
    except BundleError as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_characterize(cfg: dict, args) -> None:
    spec = cfgmod.circuit_spec(cfg)
    g = cfg["generation"]
    with Run(cfg, "characterize") as run:
        t = time.perf_counter()
        events = D.characterize_events(spec, g["n_runs"], g["n_steps"], g["alpha"], g["parallelism"],
                                       cfgmod.seed_for(cfg["seed"], "generation"))
        ds = D.build_dataset(events, cfgmod.seed_for(cfg["seed"], "split"), spec)
        run.timings["characterize"] = time.perf_counter() - t
        D.export_csv(ds, run.path("events.csv"))
        run.path("spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True))
        counts = ds.kind_counts()
        with open(run.path("event_counts.csv"), "w") as fh:
            fh.write("kind,count\n" + "".join(f"{k},{counts.get(k, 0)}\n" for k in D.KINDS))
        log.info("characterized %d runs: %s", g["n_runs"], counts)


def _training_base(cfg: dict) -> dict:
    t = cfg["training"]
    return {"mlp": {"max_epochs": t["mlp_max_epochs"]}, "gbt": {"n_trees": t["gbt_trees"]}}


def cmd_train(cfg: dict, args) -> None:
    spec = cfgmod.circuit_spec(cfg)
    ds = _load_dataset(cfg, spec, args.dataset)
    t = cfg["training"]
    with Run(cfg, "train") as run:
        t0 = time.perf_counter()
        cands = train_all(spec, ds.view("train"), ds.view("val"), list(t["families"]), t["grids"],
                          _training_base(cfg), seed=cfgmod.seed_for(cfg["seed"], "training"))
        run.timings["train"] = time.perf_counter() - t0
        bundle = select_bundle(cands, spec)
        save_bundle(bundle, run.path("bundle.bin"), timings=False)
        for fam in t["families"]:
            models = {p: next(c for c in cands[p] if c.family == fam) for p in cands}
            save_bundle(ModelBundle(bundle.fingerprint, spec, models), run.path(f"family_{fam}.bin"),
                        timings=False)
        evalkit.write_training_report(bundle.report, run.path("training_report.csv"), timings=False)
        run.extra["train_seconds"] = {f"{r['predictor']}/{r['family']}": r["train_seconds"] for r in bundle.report}
        log.info("selected: %s", {p: m.family for p, m in bundle.models.items()})


def cmd_eval(cfg: dict, args) -> None:
    spec = cfgmod.circuit_spec(cfg)
    bundle = _load_bundle(cfg, spec, args.bundle)
    ds = _load_dataset(cfg, spec, args.dataset)
    bundle_dir = Path(args.bundle).parent if args.bundle else Path(cfg["out"])
    cands: dict[str, list] = {p: [] for p in bundle.models}
    family_files = sorted(bundle_dir.glob("family_*.bin"))
    for f in family_files:
        try:
            fb = load_bundle(f, spec)
        except BundleError as exc:
            raise InputError(str(exc)) from None
        for p, m in fb.models.items():
            cands[p].append(m)
    if not family_files:
        cands = {p: [m] for p, m in bundle.models.items()}
    test = ds.view("test")
    with Run(cfg, "eval") as run:
        selected = {p: m.family for p, m in bundle.models.items()}
        rows = evalkit.metrics_table(spec, cands, test, selected)
        evalkit.write_metrics_csv(rows, run.path("metrics.csv"))
        if spec.kind == LIF:
            acc = evalkit.spike_accuracy(spec, bundle["M_O"], test)
            run.path("spike_accuracy.csv").write_text(f"metric,value\nspike_accuracy,{acc!r}\n")


def _digits(cfg: dict):
    from .netsim.digits import load_digits_split

    n = cfg["simulation"]["n_images"]
    Xtr, ytr, Xte, yte = load_digits_split(n_test=max(300, n), seed=cfgmod.seed_for(cfg["seed"], "digits") % 2**32)
    return Xtr, ytr, Xte[:n], yte[:n]


def cmd_simulate(cfg: dict, args) -> None:
    from .netsim import ann, snn

    spec = cfgmod.circuit_spec(cfg)
    s = cfg["simulation"]
    need = CROSSBAR if s["workload"] == "ann" else LIF
    if spec.kind != need:
        raise ConfigError(f"workload {s['workload']} needs circuit.kind {need}, got {spec.kind}")
    bundle = _load_bundle(cfg, spec, args.bundle)
    Xtr, ytr, X, y = _digits(cfg)
    net_seed = cfgmod.seed_for(cfg["seed"], "network")
    with Run(cfg, "simulate") as run:
        if s["workload"] == "ann":
            net = ann.train_ann(spec, Xtr, ytr, tuple(s["dims"]), act_slope=s["act_slope"],
                                act_offset=s["act_offset"], seed=net_seed)
            net = dataclasses.replace(net, adc_bits=s["adc_bits"], dac_bits=s["dac_bits"])
            t = time.perf_counter()
            ref = ann.oracle_ann(net, X)
            run.timings["oracle"] = time.perf_counter() - t
            t = time.perf_counter()
            res = ann.run_ann_inference(net, X, bundle)
            run.timings["surrogate"] = time.perf_counter() - t
            latency = res.latency
        else:
            net = snn.train_snn(spec, Xtr, ytr, tuple(s["dims"]), s["timesteps"], s["input_rate"], seed=net_seed)
            spikes = snn.encode_images(net, X, cfgmod.seed_for(cfg["seed"], "encoding"))
            t = time.perf_counter()
            ref = snn.oracle_snn(net, spikes)
            run.timings["oracle"] = time.perf_counter() - t
            t = time.perf_counter()
            res = snn.run_snn(net, spikes, bundle, mode=s["mode"])
            run.timings["surrogate"] = time.perf_counter() - t
            latency = None
        evalkit.write_inference_csv(run.path("inference.csv"), y, ref.classes, res.classes, ref.energy,
                                    res.energy, latency)
        summary = evalkit.summarize_workload(y, ref.classes, res.classes, ref.energy, res.energy)
        evalkit.write_summary_csv(summary, run.path("summary.csv"))
        log.info("accuracy oracle %.3f surrogate %.3f, energy error %.4f", summary.oracle_accuracy,
                 summary.surrogate_accuracy, summary.energy_error)


def _lif_only(spec: CircuitSpec, what: str) -> None:
    if spec.kind != LIF:
        raise ConfigError(f"{what} runs on LIF layers; set circuit.kind to {LIF}")


def cmd_bench(cfg: dict, args) -> None:
    from .netsim.studies import runtime_benchmark, write_bench_csv

    spec = cfgmod.circuit_spec(cfg)
    _lif_only(spec, "bench")
    bundle = _load_bundle(cfg, spec, args.bundle)
    s = cfg["simulation"]
    with Run(cfg, "bench") as run:
        rows = runtime_benchmark(spec, bundle, s["sizes"], s["bench_steps"], s["alpha"],
                                 cfgmod.seed_for(cfg["seed"], "bench"), s["bench_repeats"])
        write_bench_csv(rows, run.path("bench.csv"))
        for r in rows:
            log.info("N=%d oracle %.3fs engine %.3fs speedup %.2f", r.n, r.oracle_seconds, r.engine_seconds, r.speedup)


def cmd_study(cfg: dict, args) -> None:
    from .netsim.studies import error_propagation_study

    spec = cfgmod.circuit_spec(cfg)
    _lif_only(spec, "study")
    bundle = _load_bundle(cfg, spec, args.bundle)
    s = cfg["simulation"]
    with Run(cfg, "study") as run:
        res = error_propagation_study(spec, bundle, s["study_neurons"], s["study_steps"], s["alpha"],
                                      cfgmod.seed_for(cfg["seed"], "study"))
        res.write_csv(run.path("study_series.csv"))
        res.write_stats_csv(run.path("study_stats.csv"))


HANDLERS = {
    "characterize": cmd_characterize, "train": cmd_train, "eval": cmd_eval,
    "simulate": cmd_simulate, "bench": cmd_bench, "study": cmd_study,
}


HELP = {
    "characterize": "simulate random testbenches and write the event dataset",
    "train": "train every model family and select one model per predictor",
    "eval": "test-split MSE/MAPE per predictor and family",
    "simulate": "run the digit workload through oracle and surrogate networks",
    "bench": "time the engine against the transient oracle on LIF layers",
    "study": "per-step error growth with oracle versus predicted state",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evsurrogate", description="Event-driven circuit surrogate pipeline.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--parallelism", type=int, help="worker processes for characterization")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train", "eval"):
            p.add_argument("--dataset", help="events.csv (default: <out>/events.csv)")
        if name in ("eval", "simulate", "bench", "study"):
            p.add_argument("--bundle", help="model bundle (default: <out>/bundle.bin)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load_config(args.config, {"seed": args.seed, "out": args.out})
        if args.parallelism is not None:
            cfg["generation"]["parallelism"] = args.parallelism
            cfgmod.validate(cfg)
        HANDLERS[args.command](cfg, args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (D.DatasetError, TrainingError, BundleError, ValueError, ArithmeticError, OSError, RuntimeError) as exc:
        if args.verbose:
            traceback.print_exc()
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
