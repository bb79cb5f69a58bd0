#!/usr/bin/env python3
"""
Command-line interface for latent tree learning
Train, infer, solve, benchmark, gap study, gradient check and schema export
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

# Add project root to path
sys.path.append(str(Path(__file__).resolve().parent))

from src.core.config import Config
from src.core.errors import ArgumentError, IngestionError, LatentTreeError
from src.core.logger import logger
from src.models.configs import OracleConfig, SolverConfig, merge_config
from src.models.reports import (
    ErrorEnvelope,
    ErrorReport,
    GroupDump,
    InferenceReport,
    SolveDump,
    TrainSummary,
    export_schemas,
)
from src.models.schemas import Dataset
from src.services import clustering, dataset as data, reference_oracles, studies, trainer, tree_solver
from src.services.checkpoint import load_checkpoint, save_checkpoint
from src.services.gradcheck import run_gradcheck
from src.services.model_core import error_rate
from src.services.performance_monitor import RunMonitor
from src.services.tree_topology import build_complete_tree

# config-file keys that describe the run rather than the model
RUN_KEYS = ("data", "task", "target", "label_col", "target_cols", "stratify")
SCHEMA_DIR = Path(__file__).resolve().parent / "schemas"


class TreeCLI:
    """Command Line Interface for latent tree learning"""

    def __init__(self, stdout=None):
        self.stdout = stdout or sys.stdout

    def emit(self, text: str) -> None:
        self.stdout.write(text if text.endswith("\n") else text + "\n")
        self.stdout.flush()

    def emit_json(self, payload: Dict[str, Any]) -> None:
        self.emit(json.dumps(payload))

    def emit_error(self, error: LatentTreeError) -> int:
        envelope = ErrorEnvelope(error=ErrorReport(**error.to_dict()))
        self.emit(envelope.model_dump_json())
        return 1

    # --- train -------------------------------------------------------------------

    @staticmethod
    def _read_config_file(path: Optional[str]) -> Dict[str, Any]:
        if not path:
            return {}
        config_path = Path(path)
        if not config_path.is_file():
            bundled = Config.CONFIG_DIR / path
            config_path = bundled if bundled.is_file() else config_path
        try:
            return json.loads(config_path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise IngestionError(f"config file not found: {path}", code="config.file", path=str(path)) from e
        except json.JSONDecodeError as e:
            raise IngestionError(f"config file is not valid JSON: {e}", code="config.file", path=str(path)) from e

    @staticmethod
    def _flag_values(args: argparse.Namespace) -> Dict[str, Any]:
        predictor = {
            "kind": args.predictor,
            "num_layers": args.num_layers,
            "hidden_dim": args.hidden_dim,
            "dropout": args.dropout,
            "use_features": False if args.z_only else None,
        }
        return {
            "depth": args.depth,
            "lam": args.lam,
            "seed": args.seed,
            "learning_rate": args.lr,
            "batch_size": args.batch_size,
            "max_epochs": args.max_epochs,
            "patience": args.patience,
            "optimizer": args.optimizer,
            "split_activation": args.split_activation,
            "resolve_per_batch": True if args.resolve_per_batch else None,
            "predictor": predictor,
        }

    @staticmethod
    def _resolve_target_columns(dataset: Dataset, target_cols: Sequence) -> List[int]:
        names = [c.name for c in dataset.columns]
        indices = []
        for col in target_cols:
            if isinstance(col, int) or (isinstance(col, str) and col.lstrip("-").isdigit()):
                indices.append(int(col))
            elif col in names:
                indices.append(names.index(col))
            else:
                raise ArgumentError(f"unknown target column '{col}'", code="argument.target_cols", column=col)
        return indices

    def train(self, args: argparse.Namespace) -> int:
        """Train on a dataset and write checkpoint, metrics stream and summary"""
        monitor = RunMonitor()
        file_values = self._read_config_file(args.config)
        run = {key: file_values.pop(key) for key in RUN_KEYS if key in file_values}
        for key in RUN_KEYS:
            value = getattr(args, key, None)
            if value is not None:
                run[key] = value
        task = run.get("task", "reg")
        if task not in ("reg", "cls", "cluster"):
            raise ArgumentError(f"unknown task '{task}'", code="argument.task")
        if "data" not in run:
            raise ArgumentError("--data is required (flag or config file)", code="argument.data")

        defaults = {"loss": "bce" if task == "cls" else "mse"}
        if task == "cluster":
            defaults["predictor"] = {"kind": "linear", "use_features": False}
        config = merge_config(defaults, file_values, self._flag_values(args))

        label_col = run.get("label_col", "Type") if task == "cluster" else None
        target = label_col if task == "cluster" else run.get("target")
        dataset = data.load_source(run["data"], target=target, seed=config.seed, require_target=task != "cluster")
        stratify = run.get("stratify", task != "reg")
        splits = data.split_dataset(dataset, stratify=stratify, seed=config.seed)

        target_idx: List[int] = []
        train_set, val_set, test_set = splits.train, splits.val, splits.test
        labels_test = test_set.y
        if task == "cluster":
            if not run.get("target_cols"):
                raise ArgumentError("--target-cols is required for the cluster task", code="argument.target_cols")
            target_idx = self._resolve_target_columns(dataset, run["target_cols"])
            train_set, val_set, test_set = (
                self._self_supervised(part, target_idx) for part in (splits.train, splits.val, splits.test)
            )

        out_dir = Path(args.out_dir or Config.OUTPUT_DIR)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = Path(args.metrics) if args.metrics else out_dir / "metrics.jsonl"
        model = trainer.train(train_set, val_set, config, metrics_path=metrics_path)
        model.metadata.update({
            "task": task,
            "data": run["data"],
            "target": target,
            "target_columns": target_idx,
        })
        checkpoint = save_checkpoint(model, out_dir / "checkpoint.json")

        result = trainer.infer(model, test_set.X, resolve=config.resolve_per_batch)
        summary = TrainSummary(
            task=task,
            depth=config.depth,
            lam=config.lam,
            seed=config.seed,
            epochs_run=len(model.history),
            best_epoch=model.best_epoch,
            best_val_loss=model.best_val_loss,
            active_node_fraction=tree_solver.active_node_fraction(model.a_frozen),
            wall_ms=monitor.elapsed_ms(),
            rss_mb=monitor.process_metrics().rss_mb,
            warnings=splits.warnings,
            checkpoint=str(checkpoint),
        )
        if task == "cls":
            summary.test_error = error_rate(result.outputs, test_set.y)
        else:
            summary.test_mse = float(np.mean((result.outputs - test_set.y.reshape(result.outputs.shape)) ** 2))
        if task == "cluster":
            topology = build_complete_tree(config.depth)
            assignment = clustering.collapse_to_active(result.leaves, model.a_frozen, topology)
            summary.dendrogram_purity = clustering.dendrogram_purity(assignment, labels_test, topology)
            summary.routing = clustering.routing_distribution(assignment, topology, labels_test, a=model.a_frozen)

        payload = summary.model_dump(by_alias=True, exclude_none=True)
        (out_dir / "summary.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
        self.emit_json(payload)
        return 0

    @staticmethod
    def _self_supervised(part: Dataset, target_idx: List[int]) -> Dataset:
        features, targets = clustering.make_self_supervised(part.X, target_idx)
        keep = [c for j, c in enumerate(part.columns) if j not in set(target_idx)]
        return Dataset(features, targets, keep, "targets", dict(part.categories), part.stats)

    # --- infer -------------------------------------------------------------------

    def infer(self, args: argparse.Namespace) -> int:
        """Predict with a checkpoint on a dataset preprocessed with its stored statistics"""
        model = load_checkpoint(args.checkpoint)
        meta = model.metadata
        categories = model.stats.categories if model.stats is not None else None
        dataset = data.load_source(args.data or meta.get("data"), target=meta.get("target"),
                                   seed=int(model.config.get("seed", 0)), categories=categories)
        X = data.apply_stats(dataset.X, model.stats) if model.stats is not None else dataset.X
        if meta.get("target_columns"):
            X, _ = clustering.make_self_supervised(X, meta["target_columns"])
        result = trainer.infer(model, X, resolve=args.resolve)
        report = InferenceReport(outputs=result.outputs.tolist(), leaves=result.leaves.tolist(),
                                 resolved=args.resolve)
        if args.out:
            Path(args.out).write_text(report.model_dump_json(), encoding="utf-8")
        self.emit(report.model_dump_json())
        return 0

    # --- solve -------------------------------------------------------------------

    @staticmethod
    def _read_rewards(path: str) -> np.ndarray:
        try:
            frame = pd.read_csv(path, header=None, dtype=float)
        except FileNotFoundError as e:
            raise IngestionError(f"reward file not found: {path}", path=path) from e
        except pd.errors.EmptyDataError as e:
            raise IngestionError(f"reward file {path} is empty", path=path) from e
        except ValueError as e:
            raise IngestionError(f"reward file {path} has a non-numeric cell: {e}", path=path) from e
        if frame.empty:
            raise IngestionError(f"reward file {path} is empty", path=path)
        return frame.to_numpy(dtype=float)

    def solve(self, args: argparse.Namespace) -> int:
        """Solve one reward matrix and print the solution dump"""
        config = SolverConfig(lam=args.lam)
        topology = build_complete_tree(args.depth)
        q = self._read_rewards(args.q)
        if q.shape[1] != topology.num_nodes:
            raise ArgumentError(
                f"q has {q.shape[1]} columns, a depth-{args.depth} tree has {topology.num_nodes} nodes",
                code="argument.shape",
            )
        solution = tree_solver.solve(q, config, topology)
        # (point, node) pairs, points 0-based and nodes 1-based
        supports = [support.tolist() for support in solution.supports]
        dump = SolveDump(
            depth=topology.depth,
            lam=config.lam,
            n=q.shape[0],
            q=q.tolist(),
            a=solution.a.tolist(),
            z=solution.z.tolist(),
            groups=[
                GroupDump(nodes=list(nodes), value=value, k_star=len(pairs), clipped=clipped, supports=pairs)
                for nodes, pairs, value, clipped in zip(
                    solution.groups, supports, solution.group_values, solution.clipped
                )
            ],
            supports=supports,
            num_merges=solution.num_merges,
            objective=tree_solver.relaxed_objective(solution.z, solution.a, q, config.lam),
        )
        if args.oracle:
            oracle_config = OracleConfig(max_problem_size=Config.BENCH_ORACLE_CAP)
            z_ref, a_ref = reference_oracles.qp_oracle(q, config.lam, topology, oracle_config)
            dump.oracle_gap = float(max(np.max(np.abs(solution.z - z_ref)), np.max(np.abs(solution.a - a_ref))))
        self.emit(dump.model_dump_json(by_alias=True, exclude_none=True))
        return 0

    # --- schemas ------------------------------------------------------------------

    def schemas(self, args: argparse.Namespace) -> int:
        """Export the JSON schemas of every CLI output"""
        for path in export_schemas(args.out_dir):
            self.emit(str(path))
        return 0

    # --- studies -----------------------------------------------------------------

    def bench(self, args: argparse.Namespace) -> int:
        """Solver vs oracle timing table"""
        rows = studies.run_bench(args.depths, args.ns, reps=args.reps, seed=args.seed, oracle_cap=args.oracle_cap)
        columns = ["n", "D", "solver_ms_median", "oracle_ms_median", "speedup", "solver_peak_mib", "oracle_peak_mib"]
        self.emit(studies.rows_to_csv(rows, columns))
        return 0

    def gapstudy(self, args: argparse.Namespace) -> int:
        """Relaxed vs exhaustive optimum over a lambda grid"""
        rows = studies.run_gap_study(args.lambdas, instances=args.instances, n=args.n, depth=args.depth, seed=args.seed)
        self.emit(studies.rows_to_csv(rows, ["lambda", "mean_gap_a", "mean_gap_z", "max_possible_gap"]))
        return 0

    def gradcheck(self, args: argparse.Namespace) -> int:
        """Finite-difference suites; exit 0 iff every component is within tolerance"""
        report = run_gradcheck(seed=args.seed, trials=args.trials)
        for component in report.components:
            if component.passed:
                self.emit(f"{component.name}: max_rel_err < {component.tolerance:g} "
                          f"(max {component.max_rel_err:.3e}, resampled {component.resampled})")
            else:
                self.emit(f"{component.name}: max_rel_err = {component.max_rel_err:.3e} "
                          f">= {component.tolerance:g} (resampled {component.resampled})")
        if args.out:
            Path(args.out).write_text(report.model_dump_json(indent=2), encoding="utf-8")
        if report.passed:
            return 0
        failed = next(c for c in report.components if not c.passed)
        return self.emit_error(LatentTreeError(
            f"{failed.name} failed: max_rel_err {failed.max_rel_err:.3e} "
            f"(trials {failed.trials} of {report.trials})",
            code="gradcheck.failed",
            component=failed.name,
            coordinate=failed.worst_coordinate,
            max_rel_err=failed.max_rel_err,
        ))


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Latent tree learning CLI")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Train command
    train_parser = subparsers.add_parser("train", help="Train a latent tree model")
    train_parser.add_argument("--data", help="CSV path, 'tictactoe', 'synthetic:reg' or 'synthetic:cls'")
    train_parser.add_argument("--task", choices=["reg", "cls", "cluster"])
    train_parser.add_argument("--target", help="Target column of a CSV (reg/cls)")
    train_parser.add_argument("--label-col", dest="label_col", help="Class column for the cluster task")
    train_parser.add_argument("--target-cols", dest="target_cols", type=lambda s: s.split(","),
                              help="Comma-separated columns regressed in the cluster task")
    train_parser.add_argument("--stratify", action="store_true", default=None)
    train_parser.add_argument("--config", help="JSON run configuration (path or bundled name)")
    train_parser.add_argument("--depth", type=int)
    train_parser.add_argument("--lambda", dest="lam", type=float)
    train_parser.add_argument("--seed", type=int)
    train_parser.add_argument("--lr", type=float)
    train_parser.add_argument("--batch-size", dest="batch_size", type=int)
    train_parser.add_argument("--max-epochs", dest="max_epochs", type=int)
    train_parser.add_argument("--patience", type=int)
    train_parser.add_argument("--optimizer", choices=["adam", "qhadam"])
    train_parser.add_argument("--split-activation", dest="split_activation", choices=["identity", "elu"])
    train_parser.add_argument("--predictor", choices=["linear", "mlp"])
    train_parser.add_argument("--num-layers", dest="num_layers", type=int)
    train_parser.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    train_parser.add_argument("--dropout", type=float)
    train_parser.add_argument("--z-only", dest="z_only", action="store_true")
    train_parser.add_argument("--resolve-per-batch", dest="resolve_per_batch", action="store_true")
    train_parser.add_argument("--out-dir", dest="out_dir")
    train_parser.add_argument("--metrics", help="Per-epoch metrics stream (JSON lines)")

    # Infer command
    infer_parser = subparsers.add_parser("infer", help="Predict with a saved checkpoint")
    infer_parser.add_argument("--checkpoint", required=True)
    infer_parser.add_argument("--data", help="Data source; defaults to the training source")
    infer_parser.add_argument("--resolve", action="store_true", help="Re-solve a on the whole batch")
    infer_parser.add_argument("--out")

    # Solve command
    solve_parser = subparsers.add_parser("solve", help="Solve one reward matrix")
    solve_parser.add_argument("--q", required=True, help="CSV matrix of rewards, one row per point")
    solve_parser.add_argument("--lambda", dest="lam", type=float, required=True)
    solve_parser.add_argument("--depth", type=int, required=True)
    solve_parser.add_argument("--oracle", action="store_true", help="Also run the projected-gradient oracle")

    # Bench command
    bench_parser = subparsers.add_parser("bench", help="Time the solver against the oracle")
    bench_parser.add_argument("--depths", type=_int_list, default=[3])
    bench_parser.add_argument("--ns", type=_int_list, default=[100])
    bench_parser.add_argument("--reps", type=int, default=5)
    bench_parser.add_argument("--seed", type=int, default=0)
    bench_parser.add_argument("--oracle-cap", dest="oracle_cap", type=int)

    # Gap study command
    gap_parser = subparsers.add_parser("gapstudy", help="Relaxation gap against the exhaustive MIP")
    gap_parser.add_argument("--lambdas", type=_float_list, default=list(studies.DEFAULT_LAMBDAS))
    gap_parser.add_argument("--instances", type=int, default=1000)
    gap_parser.add_argument("--n", type=int, default=10)
    gap_parser.add_argument("--depth", type=int, default=2)
    gap_parser.add_argument("--seed", type=int, default=0)

    # Schemas command
    schemas_parser = subparsers.add_parser("schemas", help="Write the JSON schemas of every output")
    schemas_parser.add_argument("--out-dir", dest="out_dir", default=str(SCHEMA_DIR))

    # Gradient check command
    grad_parser = subparsers.add_parser("gradcheck", help="Finite-difference gradient checks")
    grad_parser.add_argument("--seed", type=int, default=0)
    grad_parser.add_argument("--trials", type=int, default=50)
    grad_parser.add_argument("--out")

    return parser


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help(sys.stderr)
        return 1

    cli = TreeCLI(stdout=stdout)
    handler = getattr(cli, args.command)
    try:
        return handler(args)
    except LatentTreeError as e:
        logger.error(f"{args.command} failed: {e.message}")
        return cli.emit_error(e)
    except KeyboardInterrupt:
        logger.warning("Operation cancelled by user")
        return 1
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}")
        return cli.emit_error(LatentTreeError(str(e), code="internal"))


if __name__ == "__main__":
    sys.exit(main())
