"""Command-line entry point: ingest, attack, features, detect, eval, sweep.

Every flag can also be set through an environment variable named
``GREYWAVE_<SUBCOMMAND>_<FLAG>`` (e.g. ``GREYWAVE_DETECT_SEED=42``).
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
import time
from dataclasses import asdict, fields
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import click

from . import attacks as atk
from .data import (
    DataError,
    load_labels,
    load_ratings,
    sample_genuine,
    save_labels,
    save_ratings,
)
from .detector import EmConfig, detect_tables
from .evaluation import (
    SweepConfig,
    detection_rate,
    false_alarm_rate,
    full_grid,
    prediction_shift_experiment,
    run_sweep,
)
from .features import tables_to_feature_sets, write_feature_csv
from .pipeline import PipelineConfig, extract_features
from .synthetic import SyntheticConfig, synthetic_genuine

ENV_PREFIX = "GREYWAVE"
CONTEXT = {"show_default": True, "auto_envvar_prefix": ENV_PREFIX, "help_option_names": ["-h", "--help"]}


def _version() -> str:
    try:
        return version("greywave")
    except PackageNotFoundError:
        return "0+unknown"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest(out_dir: Path, subcommand: str, config: dict, seeds: dict, inputs: dict, outputs: dict, started: float):
    _write_json(
        out_dir / "manifest.json",
        {
            "subcommand": subcommand,
            "argv": sys.argv[1:] if _ARGV is None else list(_ARGV),
            "config": config,
            "seeds": seeds,
            "inputs": inputs,
            "outputs": outputs,
            "version": _version(),
            "duration_s": round(time.perf_counter() - started, 3),
        },
    )


_ARGV: list[str] | None = None


def _em_options(f):
    opts = [
        click.option("--seed", type=int, default=0, help="Seed for every random choice."),
        click.option("--wavelet", type=click.Choice(["haar", "db2", "db4"]), default="haar"),
        click.option("--levels", type=int, default=1, help="Wavelet decomposition depth."),
        click.option("--restarts", type=int, default=EmConfig.restarts),
        click.option("--max-iterations", type=int, default=EmConfig.max_iterations),
        click.option("--tolerance", type=float, default=EmConfig.tolerance),
        click.option("--variance-floor", type=float, default=EmConfig.variance_floor),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _pipeline(seed, wavelet, levels, restarts, max_iterations, tolerance, variance_floor) -> PipelineConfig:
    em = EmConfig(restarts=restarts, max_iterations=max_iterations, tolerance=tolerance,
                  variance_floor=variance_floor, seed=seed)
    return PipelineConfig(wavelet=wavelet, levels=levels, em=em)


@click.group(context_settings=CONTEXT)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Simulate grey shilling attacks and detect them with wavelet features."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), default=None, help="Ratings file; omit for synthetic data.")
@click.option("--format", "fmt", type=click.Choice(["bookcrossing", "hetrec", "generic_csv"]), default="generic_csv")
@click.option("--sample", type=int, default=None, help="Number of users to sample (all if omitted).")
@click.option("--seed", type=int, default=1)
@click.option("--synthetic-users", type=int, default=SyntheticConfig.n_users)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def ingest(in_path, fmt, sample, seed, synthetic_users, out_dir):
    """Load (or synthesize) genuine ratings, optionally sample users, write generic CSV."""
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if in_path:
        m = load_ratings(in_path, fmt)
    else:
        m = synthetic_genuine(seed, SyntheticConfig(n_users=synthetic_users))
    if sample:
        m = sample_genuine(m, sample, seed)
    save_ratings(m, out / "ratings.csv")
    click.echo(f"{m.n_users} users, {m.n_items} items, {len(m)} ratings")
    _manifest(out, "ingest", {"format": fmt, "sample": sample, "synthetic_users": synthetic_users},
              {"seed": seed}, {"ratings": in_path}, {"ratings": "ratings.csv"}, started)


def _attack_spec(config, **flags) -> atk.AttackSpec:
    doc = {}
    if config:
        doc.update(json.loads(Path(config).read_text(encoding="utf-8")))
    for k, v in flags.items():
        if v is not None and (k not in doc or click.get_current_context().get_parameter_source(k).name != "DEFAULT"):
            doc[k] = v
    if doc.get("model") != "aop":
        doc["aop_top_fraction"] = None
    elif doc.get("aop_top_fraction") is None:
        doc["aop_top_fraction"] = atk.DEFAULT_AOP_FRACTION
    known = {f.name for f in fields(atk.AttackSpec)}
    unknown = set(doc) - known
    if unknown:
        raise DataError(f"unknown attack config keys: {sorted(unknown)}")
    return atk.AttackSpec(**doc)


def _attack_options(f):
    opts = [
        click.option("--config", type=click.Path(dir_okay=False, exists=True), default=None, help="JSON attack spec; flags override it."),
        click.option("--model", type=click.Choice(atk.MODELS), default="average"),
        click.option("--intent", type=click.Choice(atk.INTENTS), default="nuke"),
        click.option("--grey-rating", type=int, default=None),
        click.option("--attack-size", type=float, default=0.17),
        click.option("--filler-size", type=float, default=0.05),
        click.option("--aop-top-fraction", type=float, default=None, help=f"AOP only; {atk.DEFAULT_AOP_FRACTION} if unset."),
        click.option("--popularity-threshold", type=int, default=200),
        click.option("--grey-pattern", type=click.Choice(["grey", "nuke"]), default="grey"),
        click.option("--seed", type=int, default=0),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@main.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True, help="Genuine ratings (generic CSV).")
@_attack_options
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def attack(in_path, config, out_dir, **flags):
    """Inject attack profiles; writes attacked.csv and labels.csv."""
    started = time.perf_counter()
    spec = _attack_spec(config, **flags)
    genuine = load_ratings(in_path)
    attacked, labels = atk.inject_attacks(genuine, spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_ratings(attacked, out / "attacked.csv")
    save_labels(labels, out / "labels.csv")
    click.echo(f"{len(labels.attackers)} attackers injected into {len(labels.genuine)} genuine users")
    _manifest(out, "attack", asdict(spec), {"seed": spec.seed}, {"ratings": in_path},
              {"ratings": "attacked.csv", "labels": "labels.csv"}, started)


@main.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True)
@click.option("--wavelet", type=click.Choice(["haar", "db2", "db4"]), default="haar")
@click.option("--levels", type=int, default=1)
@click.option("--dump-orderings", is_flag=True, help="Also write one item_id,score,rank CSV per ordering.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def features(in_path, wavelet, levels, dump_orderings, out_dir):
    """Compute the 15 amplitude features for each user and series kind."""
    started = time.perf_counter()
    m = load_ratings(in_path)
    orderings, tables = extract_features(m, PipelineConfig(wavelet=wavelet, levels=levels))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_feature_csv(tables_to_feature_sets(m.users, tables), out / "features.csv")
    outputs = {"features": "features.csv"}
    if dump_orderings:
        for kind, ordering in orderings.items():
            name = f"ordering_{kind}.csv"
            with open(out / name, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["item_id", "score", "rank"])
                for rank, k in enumerate(ordering.order, start=1):
                    writer.writerow([ordering.items[k], repr(float(ordering.score[k])), rank])
            outputs[f"ordering_{kind}"] = name
    _manifest(out, "features", {"wavelet": wavelet, "levels": levels}, {}, {"ratings": in_path}, outputs, started)


@main.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True)
@_em_options
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Report JSON path.")
def detect(in_path, out_path, **em):
    """Run the detector; writes the JSON report and a CSV of flagged users."""
    started = time.perf_counter()
    cfg = _pipeline(**em)
    m = load_ratings(in_path)
    _, tables = extract_features(m, cfg)
    report = detect_tables(m.users, tables, cfg.em)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    doc["config"] = {"wavelet": cfg.wavelet, "levels": cfg.levels, "em": asdict(cfg.em)}
    _write_json(out, doc)
    flagged_path = out.with_suffix(".flagged.csv")
    with open(flagged_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("user_id\n")
        for u in sorted(report.flagged):
            fh.write(f"{u}\n")
    click.echo(f"flagged {len(report.flagged)} of {m.n_users} users")
    _manifest(out.parent, "detect", doc["config"], {"seed": em["seed"]}, {"ratings": in_path},
              {"report": out.name, "flagged": flagged_path.name}, started)


@main.command("eval")
@click.option("--labels", "labels_path", type=click.Path(dir_okay=False, exists=True), required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False, exists=True), default=None, help="Existing detect report.")
@click.option("--in", "in_path", type=click.Path(dir_okay=False), default=None, help="Ratings to run detection on when no report is given.")
@click.option("--genuine", type=click.Path(dir_okay=False, exists=True), default=None, help="Genuine ratings for the prediction-shift experiment.")
@click.option("--attack-config", type=click.Path(dir_okay=False, exists=True), default=None, help="JSON attack spec for the prediction-shift experiment.")
@click.option("--holdout", type=float, default=0.1)
@click.option("--k", "knn_k", type=int, default=20)
@_em_options
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Metrics JSON path.")
def evaluate(labels_path, report_path, in_path, genuine, attack_config, holdout, knn_k, out_path, **em):
    """Detection rate / false alarm rate, plus optional prediction shift."""
    started = time.perf_counter()
    labels = load_labels(labels_path)
    if report_path:
        flagged = set(json.loads(Path(report_path).read_text(encoding="utf-8"))["flagged"])
    elif in_path:
        cfg = _pipeline(**em)
        m = load_ratings(in_path)
        _, tables = extract_features(m, cfg)
        flagged = detect_tables(m.users, tables, cfg.em).flagged
    else:
        raise click.UsageError("either --report or --in is required")
    metrics = {
        "detection_rate": detection_rate(flagged, labels.attackers),
        "false_alarm_rate": false_alarm_rate(flagged, labels.genuine),
        "flagged": len(flagged),
    }
    if genuine or attack_config:
        if not (genuine and attack_config):
            raise click.UsageError("--genuine and --attack-config go together")
        spec = _attack_spec(attack_config)
        shift = prediction_shift_experiment(load_ratings(genuine), spec, holdout, knn_k, em["seed"])
        metrics["prediction_shift"] = asdict(shift)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, metrics)
    click.echo(json.dumps(metrics, sort_keys=True))
    _manifest(out.parent, "eval", {"holdout": holdout, "k": knn_k, **em}, {"seed": em["seed"]},
              {"labels": labels_path, "report": report_path, "ratings": in_path, "genuine": genuine,
               "attack_config": attack_config}, {"metrics": out.name}, started)


@main.command()
@click.option("--config", type=click.Path(dir_okay=False, exists=True), default=None, help="JSON sweep config.")
@click.option("--full-grid", "use_full_grid", is_flag=True, help="Use the 8 x 10 x 7 grid (config keys override).")
@click.option("--parallelism", type=int, default=1)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def sweep(config, use_full_grid, parallelism, out_dir):
    """Run the attack x detection grid; writes results.csv (resumable)."""
    started = time.perf_counter()
    doc = json.loads(Path(config).read_text(encoding="utf-8")) if config else {}
    if use_full_grid:
        base = full_grid().to_dict()
        base.update(doc)
        doc = base
    cfg = SweepConfig.from_dict(doc)
    out = Path(out_dir)
    rows = run_sweep(cfg, out, parallelism=parallelism)
    errors = sum(1 for r in rows if r.error)
    click.echo(f"{len(rows)} cells written ({errors} with errors)")
    _manifest(out, "sweep", cfg.to_dict(), {"base_seed": cfg.base_seed}, {"config": config},
              {"results": "results.csv", "partial": "cells.partial.jsonl"}, started)


def cli_dispatch(argv=None) -> int:
    global _ARGV
    _ARGV = list(sys.argv[1:] if argv is None else argv)
    try:
        main.main(args=_ARGV, prog_name="greywave", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except (DataError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    finally:
        _ARGV = None
    return 0


def run() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    run()
