"""Command-line front end: convert, train, evaluate, plot, sweep.

Exit codes: 0 success, 2 usage/config, 3 I/O or data, 4 internal
consistency, 5 non-convergence.
"""

import hashlib
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import data as data_mod
from . import evaluation as eval_mod
from . import model as model_mod
from . import plotting
from . import training
from .attacks import AttackSpec, default_attack_specs
from .errors import (
    ConfigError,
    ConsistencyError,
    DataError,
    TrainingError,
    UsageError,
)

TOOL_VERSION = "0.1.0"
CONFIG_FORMAT_VERSION = 1
MANIFEST_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INTERNAL = 4
EXIT_NONCONVERGENCE = 5


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn):
    try:
        return fn()
    except (ConfigError, UsageError) as e:
        _fail(EXIT_USAGE, e)
    except (DataError, OSError) as e:
        _fail(EXIT_IO, e)
    except ConsistencyError as e:
        _fail(EXIT_INTERNAL, e)
    except TrainingError as e:
        _fail(EXIT_NONCONVERGENCE, e)


# ---------------------------------------------------------------------------
# experiment config


DEFAULT_CONFIG = {
    "format_version": CONFIG_FORMAT_VERSION,
    "seed": 42,
    "dataset": {"kind": "jsonl", "path": "dataset.jsonl"},
    "model": {"conv_blocks": [[32, 5], [64, 5], [64, 5]], "use_gnlm": False},
    "train": {},
    "eval": {
        "epsilon_grid": list(eval_mod.DEFAULT_EPSILON_GRID),
        "attacks": ["noise", "fgsm", "pgd", "boundary", "simba"],
        "carry_forward": True,
        "max_examples": None,
    },
    "out_dir": "runs/experiment",
}


def _merge(defaults, override):
    out = dict(defaults)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_experiment_config(path=None, seed=None, out_dir=None):
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                user = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        if user.get("format_version", CONFIG_FORMAT_VERSION) != CONFIG_FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported config format_version")
        cfg = _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = seed
    if out_dir is not None:
        cfg["out_dir"] = out_dir
    return cfg


def _canonical(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(_canonical(cfg).encode()).hexdigest()


def _load_dataset(cfg):
    """Returns (raw bundle, dataset checksum) from a config dataset section."""
    ds = cfg["dataset"]
    if ds["kind"] == "jsonl":
        path = ds["path"]
        bundle = data_mod.load_jsonl(path)
        checksum = data_mod.file_checksum(path)
    elif ds["kind"] == "synthetic":
        bundle = data_mod.synth_generate(
            num_classes=ds["num_classes"],
            per_class=ds["per_class"],
            channels=ds["channels"],
            length=ds["length"],
            seed=ds.get("seed", cfg["seed"]),
        )
        checksum = hashlib.sha256(_canonical(ds).encode()).hexdigest()
    else:
        raise ConfigError(f"unknown dataset kind {ds['kind']!r}")
    return bundle, checksum


def _attack_spec_from_entry(entry, seed):
    if isinstance(entry, str):
        for spec in default_attack_specs(seed=seed):
            if spec.kind == entry:
                return spec
        raise ConfigError(f"unknown attack {entry!r}")
    entry = dict(entry)
    entry.setdefault("seed", seed)
    return AttackSpec(**entry)


def _protocol_from_config(cfg):
    ev = cfg["eval"]
    return eval_mod.EvalProtocol(
        epsilon_grid=list(ev["epsilon_grid"]),
        attacks=[_attack_spec_from_entry(a, cfg["seed"]) for a in ev["attacks"]],
        carry_forward=ev["carry_forward"],
        seed=cfg["seed"],
    )


def _write_manifest(path, cfg, checksum, extra):
    doc = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "tool_version": TOOL_VERSION,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "dataset_checksum": checksum,
        "seed": cfg["seed"],
    }
    doc.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# commands


@click.group()
def main():
    """Train, attack, and evaluate 1-D time-series classifiers under an
    L-infinity threat model."""


@main.command("convert")
@click.argument("source", type=click.Path())
@click.argument("out", type=click.Path())
@click.option("--seed", type=int, default=data_mod.CHARTRAJ_DEFAULT_SEED, show_default=True)
def cmd_convert(source, out, seed):
    """Convert the UCI character-trajectories archive to JSONL."""

    def body():
        if not Path(source).exists():
            raise DataError(f"source not found: {source}")
        bundle = data_mod.convert_uci_charset(source, out, seed=seed)
        n = len(bundle.all_sequences())
        click.echo(f"wrote {n} records to {out} "
                   f"(train/val/test = {len(bundle.train)}/{len(bundle.val)}/{len(bundle.test)})")

    _guard(body)


def _run_training(cfg, quiet):
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    bundle, checksum = _load_dataset(cfg)
    bundle = data_mod.normalize(bundle)
    sample = bundle.train[0]
    model_cfg = model_mod.ModelConfig(
        in_channels=sample.channels.shape[0],
        num_classes=bundle.num_classes,
        conv_blocks=[tuple(b) for b in cfg["model"]["conv_blocks"]],
        use_gnlm=cfg["model"]["use_gnlm"],
        seed=cfg["seed"],
    )
    classifier = model_mod.build(model_cfg)
    train_cfg = training.TrainConfig.from_dict({"seed": cfg["seed"], **cfg["train"]})
    report = training.train(classifier, bundle, train_cfg)

    ckpt_path = out_dir / "checkpoint.json"
    model_mod.save_checkpoint(classifier, ckpt_path, stats=bundle.stats, dataset_checksum=checksum)
    training.save_report(report, out_dir / "train_report.json")
    _write_manifest(
        out_dir / "manifest.json",
        cfg,
        checksum,
        {
            "checkpoint": str(ckpt_path),
            "train_report": str(out_dir / "train_report.json"),
            "wall_seconds": time.monotonic() - t0,
        },
    )
    if not quiet:
        click.echo(
            f"regime={train_cfg.regime} "
            f"train_accuracy={report.final_train_acc:.4f} "
            f"test_accuracy={report.final_test_acc:.4f} "
            f"converged={report.converged}"
        )
    return report


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--quiet", is_flag=True)
def cmd_train(config_path, seed, out_dir, quiet):
    """Train a classifier; writes checkpoint, report, and manifest."""

    def body():
        cfg = load_experiment_config(config_path, seed=seed, out_dir=out_dir)
        report = _run_training(cfg, quiet)
        if not report.converged:
            sys.exit(EXIT_NONCONVERGENCE)

    _guard(body)


def _run_evaluation(cfg, checkpoint, quiet):
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    classifier, norm = model_mod.load_checkpoint(checkpoint)
    bundle, checksum = _load_dataset(cfg)
    if norm is not None:
        if norm["dataset_checksum"] != checksum:
            raise ConsistencyError(
                "dataset checksum does not match the checkpoint's training dataset; "
                "refusing to evaluate on differently normalized data"
            )
        stats = data_mod.NormalizationStats(
            mean=np.asarray(norm["mean"]), std=np.asarray(norm["std"])
        )
        bundle = data_mod.apply_normalization(bundle, stats)
    examples = bundle.test
    limit = cfg["eval"].get("max_examples")
    if limit:
        examples = examples[:limit]
    protocol = _protocol_from_config(cfg)
    curves = eval_mod.robustness_curve(classifier, examples, protocol)
    clean_acc = curves[0].clean_accuracy if curves else 0.0

    csv_path = out_dir / "curves.csv"
    eval_mod.write_curves_csv(curves, csv_path, len(examples))
    title = f"{Path(checkpoint).parent.name or 'model'} (clean {clean_acc:.2%})"
    plotting.render_curves_svg(eval_mod.read_curves_csv(csv_path), title, out_dir / "curves.svg")
    _write_manifest(
        out_dir / "eval_manifest.json",
        cfg,
        checksum,
        {
            "checkpoint": str(checkpoint),
            "curves_csv": str(csv_path),
            "n_examples": len(examples),
            "clean_accuracy": clean_acc,
            "wall_seconds": time.monotonic() - t0,
        },
    )
    if not quiet:
        click.echo(f"clean_test_accuracy={clean_acc:.4f} n_examples={len(examples)}")
        for curve in curves:
            pts = " ".join(
                f"{e:.2f}:{a:.4f}" for e, a in zip(curve.epsilons, curve.accuracies)
            )
            click.echo(f"{curve.attack}: {pts}")
    return curves


@main.command("evaluate")
@click.argument("checkpoint", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_path", type=click.Path(), default=None,
              help="JSONL dataset path (overrides the config's dataset).")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--quiet", is_flag=True)
def cmd_evaluate(checkpoint, config_path, data_path, seed, out_dir, quiet):
    """Attack a trained checkpoint and emit robustness curves (CSV + SVG)."""

    def body():
        cfg = load_experiment_config(config_path, seed=seed, out_dir=out_dir)
        if data_path is not None:
            cfg["dataset"] = {"kind": "jsonl", "path": data_path}
        _run_evaluation(cfg, checkpoint, quiet)

    _guard(body)


@main.command("plot")
@click.argument("csv_paths", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--quiet", is_flag=True)
def cmd_plot(csv_paths, out_dir, quiet):
    """Render robustness-curve SVG charts from curves CSV files."""

    def body():
        for csv_path in csv_paths:
            rows = eval_mod.read_curves_csv(csv_path)
            if not rows:
                raise ConfigError(f"{csv_path}: no data rows")
            stem = Path(csv_path).stem
            manifest = Path(csv_path).parent / "eval_manifest.json"
            title = stem
            if manifest.exists():
                with open(manifest, encoding="utf-8") as f:
                    doc = json.load(f)
                title = f"{Path(doc.get('checkpoint', stem)).parent.name} " \
                        f"(clean {doc.get('clean_accuracy', 0):.2%})"
            dest_dir = Path(out_dir) if out_dir else Path(csv_path).parent
            dest_dir.mkdir(parents=True, exist_ok=True)
            dest = dest_dir / f"{stem}.svg"
            plotting.render_curves_svg(rows, title, dest)
            if not quiet:
                click.echo(f"wrote {dest}")

    _guard(body)


def _sweep_cells(cfg, betas, gnlm_modes):
    cells = []
    for use_gnlm in gnlm_modes:
        cells.append(("standard", None, use_gnlm))
        cells.append(("adversarial", None, use_gnlm))
        for beta in betas:
            cells.append(("trades", beta, use_gnlm))
    return cells


@main.command("sweep")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--betas", default="0.01,0.05,0.1,0.5,1.0,5.0,10.0", show_default=True,
              help="Comma-separated TRADES 1/lambda values.")
@click.option("--gnlm", type=click.Choice(["both", "on", "off"]), default="both",
              show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--quiet", is_flag=True)
def cmd_sweep(config_path, betas, gnlm, seed, out_dir, quiet):
    """Train and evaluate the defense grid; emits a clean/robust accuracy table.

    Cells are keyed by config hash and resumed from existing checkpoints.
    """

    def body():
        base = load_experiment_config(config_path, seed=seed, out_dir=out_dir)
        beta_list = [float(b) for b in betas.split(",") if b]
        gnlm_modes = {"both": [False, True], "on": [True], "off": [False]}[gnlm]
        sweep_dir = Path(base["out_dir"])
        sweep_dir.mkdir(parents=True, exist_ok=True)
        eval_eps = max(base["eval"]["epsilon_grid"])
        table_rows = []
        for regime, beta, use_gnlm in _sweep_cells(base, beta_list, gnlm_modes):
            cell_cfg = json.loads(json.dumps(base))
            cell_cfg["model"]["use_gnlm"] = use_gnlm
            cell_cfg["train"]["regime"] = regime
            if beta is not None:
                cell_cfg["train"]["trades_beta"] = beta
            tag = f"{regime}{'' if beta is None else f'-beta{beta}'}{'-gnlm' if use_gnlm else ''}"
            cell_cfg["out_dir"] = str(sweep_dir / "cells" / f"{tag}-{config_hash(cell_cfg)[:8]}")
            cell_dir = Path(cell_cfg["out_dir"])
            row = {
                "defense": regime,
                "inv_lambda": "-" if beta is None else beta,
                "denoising": "GNLM" if use_gnlm else "-",
            }
            try:
                if (cell_dir / "checkpoint.json").exists():
                    with open(cell_dir / "train_report.json", encoding="utf-8") as f:
                        rep = json.load(f)
                    report_acc = (rep["final_train_acc"], rep["final_test_acc"], rep["converged"])
                    classifier, _ = model_mod.load_checkpoint(cell_dir / "checkpoint.json")
                else:
                    report = _run_training(cell_cfg, quiet=True)
                    report_acc = (report.final_train_acc, report.final_test_acc, report.converged)
                    classifier, _ = model_mod.load_checkpoint(cell_dir / "checkpoint.json")
                train_acc, test_acc, converged = report_acc
                if not converged:
                    row.update(train_accuracy="-", test_accuracy="-", robust_accuracy="-")
                else:
                    bundle, _ = _load_dataset(cell_cfg)
                    bundle = data_mod.normalize(bundle)
                    examples = bundle.test
                    limit = cell_cfg["eval"].get("max_examples")
                    if limit:
                        examples = examples[:limit]
                    spec = _attack_spec_from_entry("pgd", cell_cfg["seed"])
                    racc, _, _ = eval_mod.robust_accuracy(
                        classifier, examples, spec, eval_eps, base_seed=cell_cfg["seed"]
                    )
                    row.update(
                        train_accuracy=repr(train_acc),
                        test_accuracy=repr(test_acc),
                        robust_accuracy=repr(racc),
                    )
            except (ConfigError, UsageError, DataError, TrainingError) as e:
                if not quiet:
                    click.echo(f"cell {tag} failed: {e}", err=True)
                row.update(train_accuracy="-", test_accuracy="-", robust_accuracy="-")
            table_rows.append(row)
            if not quiet:
                click.echo(
                    f"{row['defense']:12s} 1/lambda={row['inv_lambda']!s:5s} "
                    f"{row['denoising']:4s} train={row['train_accuracy']} "
                    f"test={row['test_accuracy']} pgd@{eval_eps}={row['robust_accuracy']}"
                )
        table_path = sweep_dir / "table.csv"
        import csv as _csv

        with open(table_path, "w", encoding="utf-8", newline="") as f:
            writer = _csv.DictWriter(
                f,
                fieldnames=[
                    "defense", "inv_lambda", "denoising",
                    "train_accuracy", "test_accuracy", "robust_accuracy",
                ],
                lineterminator="\n",
            )
            writer.writeheader()
            writer.writerows(table_rows)
        if not quiet:
            click.echo(f"wrote {table_path}")

    _guard(body)


if __name__ == "__main__":
    main()
