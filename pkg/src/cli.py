"""CLI for the regularized graph VAE

Command-line interface using Typer: generate datasets, train, evaluate,
denoise, walk the latent space and check datasets against the oracles.

Exit codes: 0 success, 2 usage/configuration errors, 3 data errors
(malformed or mismatched files), 4 runtime failures.
"""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

import config as settings
from src.constraints.oracles import check_compatibility, check_connectivity, check_valence, is_valid
from src.core.errors import ConfigError, GraphVAEError, SchemaError, exit_code_for
from src.core.manifest import create_run
from src.core.models import DatasetManifest, ExperimentConfig, MetricsReport, Task
from src.data.datagen import corrupt_with_incompatible_edges, gen_node_compatible, gen_toy_molecules
from src.evaluation.export import dumps_report, export_walk
from src.evaluation.metrics import denoise_eval, evaluate, latent_walk, validity_rate
from src.graphs.io import dumps_dataset, read_dataset
from src.training.trainer import FINAL_CHECKPOINT, LOG_NAME, train as run_training
from src.utils.logging_setup import setup_logging
from src.vae.checkpoint import load_checkpoint

app = typer.Typer(
    name="graphvae",
    help="Graph VAE with differentiable validity constraints",
    add_completion=False,
)
console = Console()
logger = logging.getLogger(__name__)

ConfigOption = typer.Option(None, "--config", "-c", help="Experiment YAML file")
SetOption = typer.Option(None, "--set", help="Override a config value: section.key=value (repeatable)")
SeedOption = typer.Option(None, "--seed", help="Master seed (default: $GRAPHVAE_SEED or 0)")


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Show debug logs"),
):
    """Graph VAE with differentiable validity constraints"""
    setup_logging(settings.LOG_LEVEL, verbose=verbose)


@contextmanager
def _failures():
    """Print library errors and exit with their code family"""
    try:
        yield
    except (GraphVAEError, FileNotFoundError) as exc:
        code = exit_code_for(exc)
        console.print(f"[red]❌ {type(exc).__name__}: {exc}[/red]")
        raise typer.Exit(code)


def _seed(seed: Optional[int]) -> int:
    return settings.DEFAULT_SEED if seed is None else seed


def _load(
    config_path: Optional[Path],
    sets: Optional[list[str]],
    task: Optional[str],
    check_constraints: bool = True,
) -> ExperimentConfig:
    """
    Experiment from --config (or the --task preset, compat when neither is
    given) plus --set overrides. The task's constraints are built once so a
    config that does not fit its task fails before any work is done.
    """
    if task is not None and task not in {t.value for t in Task}:
        raise ConfigError(f"unknown task '{task}' (expected compat or molecule)")
    if config_path is None and task is None:
        task = Task.COMPAT.value
    experiment = settings.load_experiment(config_path, sets or (), task)
    if check_constraints:
        try:
            experiment.constraint_spec()
        except (SchemaError, ConfigError, ValueError) as exc:
            raise ConfigError(f"{experiment.task.value} task: {exc}") from None
    return experiment


def _parse_range(text: str) -> tuple[int, int]:
    """'2' -> (2, 2), '1-3' -> (1, 3)"""
    lo, sep, hi = text.partition("-")
    try:
        return (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise ConfigError(f"expected K or LO-HI, got '{text}'") from None


def _sidecar(path: Path) -> str:
    return f"{path.name}.manifest.json"


def _metrics_table(title: str, metrics: dict[str, float]) -> Table:
    table = Table(title=title, show_header=True)
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    for name, value in metrics.items():
        table.add_row(name, f"{value:.2f}")
    return table


def _checkpoint_config(ckpt, config_path, sets, task) -> tuple:
    """Load a checkpoint together with a matching experiment config and spec"""
    params, header = load_checkpoint(ckpt)
    if task is None and config_path is None:
        constraints = header.constraints
        task = Task.COMPAT.value if constraints is not None and constraints.compatibility else Task.MOLECULE.value
    experiment = _load(config_path, sets, task, check_constraints=False)
    if experiment.graph_schema != header.graph_schema:
        experiment = experiment.model_copy(update={"graph_schema": header.graph_schema})
    spec = header.constraints or experiment.constraint_spec()
    return params, header, experiment, spec


@app.command("gen-data")
def gen_data(
    task: Optional[str] = typer.Option(None, "--task", "-t", help="compat or molecule (preset when no --config)"),
    config_path: Optional[Path] = ConfigOption,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Dataset file (.jsonl)"),
    seed: Optional[int] = SeedOption,
    count: Optional[int] = typer.Option(None, "--count", "-n", help="Number of graphs"),
    sets: Optional[list[str]] = SetOption,
):
    """
    Generate a synthetic dataset.

    Example:
        graphvae gen-data --task compat --out data/compat.jsonl --seed 1
    """
    with _failures():
        experiment = _load(config_path, sets, task)
        seed = _seed(seed)
        out = out or settings.OUTPUT_DIR / "data" / f"{experiment.task.value}.jsonl"
        gen = experiment.generation
        count = count or gen.count
        schema = experiment.graph_schema
        rng = np.random.default_rng(seed)

        if experiment.task == Task.COMPAT:
            parameters = {
                "compatibility": experiment.constraints.compatibility,
                "edge_prob": gen.edge_prob,
                "node_range": list(gen.node_range),
            }
            graphs = gen_node_compatible(
                count, schema, experiment.constraints.compatibility, rng,
                edge_prob=gen.edge_prob, node_range=gen.node_range,
            )
            generator = "gen_node_compatible"
        else:
            parameters = {
                "valences": experiment.constraints.valences,
                "bond_capacities": experiment.constraints.bond_capacities,
                "node_range": list(gen.node_range),
                "ring_closure_prob": gen.ring_closure_prob,
            }
            graphs = gen_toy_molecules(
                count, schema, experiment.constraints.valences, experiment.constraints.bond_capacities, rng,
                node_range=gen.node_range, ring_closure_prob=gen.ring_closure_prob,
            )
            generator = "gen_toy_molecules"

        run = create_run("gen-data", out.parent, manifest_name=_sidecar(out))
        written = run.write(out.name, dumps_dataset(graphs))
        dataset = DatasetManifest(
            generator=generator, task=experiment.task, count=len(graphs), seed=seed,
            graph_schema=schema, parameters=parameters, sha256=written["sha256"],
        )
        run.write_manifest(
            experiment.model_dump(mode="json", by_alias=True), seed=seed,
            extra={"dataset": dataset.model_dump(mode="json", by_alias=True)},
        )
    console.print(f"[green]✅ {len(graphs)} graphs → {written['path']}[/green]")


@app.command()
def corrupt(
    data: Path = typer.Option(..., "--in", "-i", help="Valid dataset to corrupt"),
    insertions: str = typer.Option("1-3", "--insertions", "-k", help="Edges per graph: K or LO-HI"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Corrupted dataset file"),
    seed: Optional[int] = SeedOption,
    config_path: Optional[Path] = ConfigOption,
    sets: Optional[list[str]] = SetOption,
):
    """
    Build a denoising set by inserting edges between incompatible node types.

    Example:
        graphvae corrupt --in data/compat.jsonl --insertions 1-3 --out data/noisy.jsonl
    """
    with _failures():
        experiment = _load(config_path, sets, None if config_path else Task.COMPAT.value)
        if experiment.constraints.compatibility is None:
            raise ConfigError("corrupt needs a compatibility matrix (compat task)")
        seed = _seed(seed)
        lo, hi = _parse_range(insertions)
        graphs = read_dataset(data, experiment.graph_schema)
        limit = experiment.generation.corrupt_count
        noisy = corrupt_with_incompatible_edges(
            graphs[:limit], experiment.constraints.compatibility, (lo, hi), np.random.default_rng(seed)
        )
        out = out or settings.OUTPUT_DIR / "data" / f"{data.stem}_corrupt.jsonl"
        run = create_run("corrupt", out.parent, inputs=[data], manifest_name=_sidecar(out))
        written = run.write(out.name, dumps_dataset(noisy))
        run.write_manifest(
            experiment.model_dump(mode="json", by_alias=True), seed=seed,
            extra={"insertions": [lo, hi], "count": len(noisy)},
        )
    console.print(f"[green]✅ {len(noisy)} corrupted graphs → {written['path']}[/green]")


@app.command()
def train(
    data: Path = typer.Option(..., "--data", "-d", help="Training dataset"),
    config_path: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = typer.Option(None, "--out-dir", "-o", help="Checkpoints and training log"),
    seed: Optional[int] = SeedOption,
    reg_weights: Optional[float] = typer.Option(
        None, "--reg-weights", help="Set every enabled family's weight (0 = standard VAE)"
    ),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Override training.epochs"),
    task: Optional[str] = typer.Option(None, "--task", "-t", help="Preset when no --config is given"),
    sets: Optional[list[str]] = SetOption,
):
    """
    Train a (regularized) VAE.

    Example:
        graphvae train --data data/compat.jsonl --config configs/compat.yaml --out-dir runs/reg
        graphvae train --data data/compat.jsonl --config configs/compat.yaml --reg-weights 0 --out-dir runs/std
    """
    with _failures():
        experiment = _load(config_path, sets, task)
        seed = _seed(seed)
        training = experiment.training
        reg = training.regularization
        if reg_weights is not None:
            if reg_weights < 0:
                raise ConfigError("--reg-weights must be >= 0")
            reg = reg.model_copy(update={"weights": {family: reg_weights for family in reg.families}})
        training = training.model_copy(
            update={"seed": seed, "regularization": reg, "epochs": epochs if epochs is not None else training.epochs}
        )
        experiment = experiment.model_copy(update={"training": training})

        graphs = read_dataset(data, experiment.graph_schema)
        out_dir = out_dir or settings.OUTPUT_DIR / "train"
        run = create_run("train", out_dir, inputs=[data])
        result = run_training(graphs, experiment, out_dir=out_dir)
        for path in result.checkpoints:
            run.record_file(path)
        run.record_volatile(out_dir / LOG_NAME)
        final = {k: v for k, v in (result.log[-1] if result.log else {}).items() if k != "wall_time_s"}
        run.write_manifest(experiment.model_dump(mode="json", by_alias=True), seed=seed, extra={"final": final})

    if final:
        console.print(_metrics_table("Final epoch", {k: v for k, v in final.items() if k != "epoch"}))
    console.print(f"[green]✅ checkpoint → {out_dir / FINAL_CHECKPOINT}[/green]")


@app.command("eval")
def eval_command(
    ckpt: Path = typer.Option(..., "--ckpt", help="Checkpoint file"),
    data: Path = typer.Option(..., "--data", "-d", help="Training set (novelty index)"),
    holdout: Optional[Path] = typer.Option(None, "--holdout", help="Holdout set for % Recon (default: --data)"),
    metrics: str = typer.Option("valid,novel,recon", "--metrics", "-m", help="Comma list of valid,novel,recon,elbo"),
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Report file (.json)"),
    config_path: Optional[Path] = ConfigOption,
    task: Optional[str] = typer.Option(None, "--task", "-t", help="compat or molecule (default: from checkpoint)"),
    sets: Optional[list[str]] = SetOption,
):
    """
    Evaluate a checkpoint: % Valid, % Novel, % Recon (and mean ELBO).

    Example:
        graphvae eval --ckpt runs/reg/checkpoint.json --data data/compat.jsonl --metrics valid,novel,recon
    """
    with _failures():
        params, header, experiment, spec = _checkpoint_config(ckpt, config_path, sets, task)
        seed = _seed(seed)
        requested = [m.strip() for m in metrics.split(",") if m.strip()]
        training_set = read_dataset(data, header.graph_schema)
        holdout_set = read_dataset(holdout, header.graph_schema) if holdout else training_set
        report = evaluate(
            params, spec, experiment.task, experiment.evaluation, seed,
            training_set=training_set, holdout=holdout_set, metrics=requested,
            checkpoint=str(ckpt), dataset=str(data), regularization=experiment.training.regularization,
        )
        if holdout is None and "recon" in requested:
            report.deviations.append("% Recon measured on the training set (no --holdout given)")
        out = out or settings.OUTPUT_DIR / "eval" / "report.json"
        inputs = [ckpt, data] + ([holdout] if holdout else [])
        run = create_run("eval", out.parent, inputs=inputs, manifest_name=_sidecar(out))
        run.write(out.name, dumps_report(report))
        run.write_manifest(experiment.model_dump(mode="json", by_alias=True), seed=seed)
    _print_report(report, out)


@app.command()
def denoise(
    ckpt: Path = typer.Option(..., "--ckpt", help="Checkpoint file"),
    data: Path = typer.Option(..., "--data", "-d", help="Corrupted dataset"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Report file (.json)"),
    config_path: Optional[Path] = ConfigOption,
    sets: Optional[list[str]] = SetOption,
):
    """
    Percentage of corrupted graphs that decode to valid graphs.

    Example:
        graphvae denoise --ckpt runs/reg/checkpoint.json --data data/noisy.jsonl
    """
    with _failures():
        params, header, experiment, spec = _checkpoint_config(ckpt, config_path, sets, Task.COMPAT.value)
        if spec.D is None:
            raise ConfigError("denoising is defined for the compat task only")
        corrupted = read_dataset(data, header.graph_schema)
        empty_valid = experiment.evaluation.empty_graph_valid
        report = MetricsReport(
            task=Task.COMPAT,
            checkpoint=str(ckpt),
            dataset=str(data),
            seed=header.seed if header.seed is not None else 0,
            metrics={
                "denoise_valid": denoise_eval(params, corrupted, spec, Task.COMPAT, empty_valid),
                "input_valid": validity_rate(corrupted, spec, Task.COMPAT, empty_valid),
                "graphs": float(len(corrupted)),
            },
            protocol={"decode": "argmax of the posterior mean", "alpha": spec.alpha},
            deviations=["encoder/decoder are MLPs, not the convolutional backbone of the benchmark setup"],
        )
        out = out or settings.OUTPUT_DIR / "denoise" / "report.json"
        run = create_run("denoise", out.parent, inputs=[ckpt, data], manifest_name=_sidecar(out))
        run.write(out.name, dumps_report(report))
        run.write_manifest(experiment.model_dump(mode="json", by_alias=True), seed=report.seed)
    _print_report(report, out)


@app.command()
def walk(
    ckpt: Path = typer.Option(..., "--ckpt", help="Checkpoint file"),
    data: Path = typer.Option(..., "--data", "-d", help="Anchor graphs"),
    mode: str = typer.Option("grid", "--mode", help="grid or interp"),
    steps: Optional[int] = typer.Option(None, "--steps", "-k", help="Steps per line"),
    step_size: Optional[float] = typer.Option(None, "--step-size", help="Grid spacing in latent units"),
    pairs: Optional[int] = typer.Option(None, "--pairs", help="Anchor pairs (interp)"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir", "-o", help="DOT files and index.csv"),
    seed: Optional[int] = SeedOption,
    config_path: Optional[Path] = ConfigOption,
    task: Optional[str] = typer.Option(None, "--task", "-t", help="compat or molecule (default: from checkpoint)"),
    sets: Optional[list[str]] = SetOption,
):
    """
    Decode a latent grid or interpolation and export DOT files plus a CSV index.

    Example:
        graphvae walk --ckpt runs/reg/checkpoint.json --data data/compat.jsonl --mode interp --steps 8
    """
    with _failures():
        if mode not in ("grid", "interp"):
            raise ConfigError(f"unknown walk mode '{mode}' (expected grid or interp)")
        params, header, experiment, spec = _checkpoint_config(ckpt, config_path, sets, task)
        seed = _seed(seed)
        ev = experiment.evaluation
        rng = np.random.default_rng(seed)
        anchors = read_dataset(data, header.graph_schema)
        n_pairs = pairs or (ev.walk_pairs if mode == "interp" else 1)
        if mode == "interp":
            chosen = rng.permutation(len(anchors))[: 2 * n_pairs]
        else:
            chosen = rng.permutation(len(anchors))[:1]
        points = latent_walk(
            params, mode, [anchors[i] for i in chosen], steps or ev.walk_steps, spec, experiment.task, rng,
            step_size=ev.walk_step_size if step_size is None else step_size, pairs=n_pairs,
            empty_valid=ev.empty_graph_valid,
        )
        out_dir = out_dir or settings.OUTPUT_DIR / "walk"
        run = create_run("walk", out_dir, inputs=[ckpt, data])
        for written in export_walk(points, run.store, type_names=experiment.constraints.type_names, prefix=mode):
            run.record_output(written)
        valid = sum(p.valid for p in points)
        run.write_manifest(
            experiment.model_dump(mode="json", by_alias=True), seed=seed,
            extra={"mode": mode, "points": len(points), "valid": valid, "anchors": [int(i) for i in chosen]},
        )
    console.print(f"[green]✅ {len(points)} graphs ({valid} valid) → {out_dir}[/green]")


@app.command()
def check(
    data: Path = typer.Option(..., "--data", "-d", help="Dataset to check"),
    task: Optional[str] = typer.Option(None, "--task", "-t", help="compat or molecule (preset when no --config)"),
    config_path: Optional[Path] = ConfigOption,
    sets: Optional[list[str]] = SetOption,
):
    """
    Summarize oracle validity of a dataset.

    Example:
        graphvae check --data data/compat.jsonl --task compat
    """
    with _failures():
        experiment = _load(config_path, sets, task)
        spec = experiment.constraint_spec()
        graphs = read_dataset(data, experiment.graph_schema)
        if not graphs:
            raise SchemaError(f"{data} contains no graphs")
        total = len(graphs)
        empty_valid = experiment.evaluation.empty_graph_valid
        summary = {
            "graphs": float(total),
            "valid %": validity_rate(graphs, spec, experiment.task, empty_valid),
            "valence ok %": 100.0 * sum(check_valence(g, spec).ok for g in graphs) / total,
        }
        if experiment.task == Task.MOLECULE:
            summary["connected %"] = 100.0 * sum(check_connectivity(g) for g in graphs) / total
        else:
            summary["compatible %"] = 100.0 * sum(check_compatibility(g, spec) for g in graphs) / total
        invalid = [
            i for i, g in enumerate(graphs) if not is_valid(g, spec, experiment.task, empty_valid=empty_valid)
        ]
    console.print(_metrics_table(f"{data} ({experiment.task.value})", summary))
    if invalid:
        console.print(f"[yellow]⚠️  invalid graphs (first 10 lines): {[i + 1 for i in invalid[:10]]}[/yellow]")


def _print_report(report: MetricsReport, out: Path) -> None:
    console.print(_metrics_table(f"{report.task.value} · {report.checkpoint}", report.metrics))
    if report.deviations:
        console.print("[bold]Deviations from the benchmark protocol:[/bold]")
        for note in report.deviations:
            console.print(f"  • {note}")
    console.print(f"\n💡 Report: [cyan]{out}[/cyan]\n")


if __name__ == "__main__":
    app()
