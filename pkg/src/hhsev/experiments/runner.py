import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd

from hhsev import __version__
from hhsev.core.params import ModelKind
from hhsev.core.utils import derive_seed, file_digest, write_csv
from hhsev.experiments.discrimination import (
    CrossFitTable,
    ExperimentSpec,
    cross_fit_table,
    finite_data_experiment,
    random_parameter_sweep,
)
from hhsev.experiments.metrics import (
    calculate_cross_fit_metrics,
    calculate_finite_metrics,
    calculate_sweep_metrics,
    log_scale_histogram,
)
from hhsev.fitting.optimizer import FitConfig

logger = logging.getLogger(__name__)


# ============================================================================
# Run manifest
# ============================================================================

@dataclass
class RunManifest:
    """Completion marker for one command invocation; written after every output."""
    subcommand: str
    config: Dict[str, Any]
    seed: int
    version: str = __version__
    outputs: Dict[str, str] = field(default_factory=dict)
    duration_seconds: float = 0.0
    timestamp: str = ""

    def record(self, path: Union[str, Path], base: Path) -> None:
        path = Path(path)
        self.outputs[str(path.relative_to(base))] = file_digest(path)

    def write(self, out_dir: Path, started: float) -> Path:
        self.duration_seconds = round(time.time() - started, 3)
        self.timestamp = datetime.now().isoformat()
        path = out_dir / "manifest.json"
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
        return path


class OutputWriter:
    """Writes files under one run directory and records each in the manifest."""

    def __init__(self, out_dir: Path, manifest: RunManifest):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest
        self.started = time.time()

    def csv(self, frame: pd.DataFrame, name: str) -> Path:
        path = write_csv(frame, self.out_dir / name)
        self.manifest.record(path, self.out_dir)
        return path

    def text(self, content: str, name: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(content)
        self.manifest.record(path, self.out_dir)
        return path

    def json(self, payload: Dict[str, Any], name: str) -> Path:
        return self.text(json.dumps(payload, indent=2, sort_keys=True, default=str), name)

    def finish(self) -> Path:
        path = self.manifest.write(self.out_dir, self.started)
        logger.info(f"Manifest written to {path}")
        return path


# ============================================================================
# Experiment runner
# ============================================================================

class ExperimentRunner:
    """Runs one discrimination experiment and writes its CSVs, report and summary."""

    def __init__(self, spec: ExperimentSpec, fit_config: FitConfig, writer: OutputWriter, jobs: int = 1):
        self.spec = spec
        self.fit_config = fit_config
        self.writer = writer
        self.jobs = jobs

    def run(self) -> Dict[str, Any]:
        logger.info(f"{'='*60}")
        logger.info(f"🚀 STARTING {self.spec.kind.upper()} EXPERIMENT - {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        logger.info(f"📂 Results: {self.writer.out_dir}")
        logger.info(f"{'='*60}")

        if self.spec.kind == "cross_fit":
            summary = self._run_cross_fit()
        elif self.spec.kind == "sweep":
            summary = self._run_sweep()
        else:
            summary = self._run_finite_data()

        summary = {"kind": self.spec.kind, "seed": self.spec.seed, "metrics": summary}
        self.writer.json(summary, "summary.json")
        self._log_summary(summary)
        return summary

    def _run_cross_fit(self) -> Dict[str, Any]:
        table = cross_fit_table(
            self.spec.generating, self.spec.dists, self.spec.runs_per_fit, self.fit_config, jobs=self.jobs
        )
        frame = table.frame()
        self.writer.csv(frame, "cross_fit.csv")
        self.writer.csv(table.fits_frame(), "cross_fit_parameters.csv")
        metrics = calculate_cross_fit_metrics(frame)
        self.writer.text(self._generate_report(table, metrics), "cross_fit_report.md")
        return metrics

    def _run_sweep(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for d_idx, (label, dist) in enumerate(self.spec.dists.items()):
            logger.info(f"[{label}] {self.spec.sweep_model.label} data, {self.spec.n_datasets} datasets")
            config = replace(self.fit_config, seed=derive_seed(self.spec.seed, d_idx))
            result = random_parameter_sweep(
                self.spec.sweep_model,
                self.spec.n_datasets,
                dist,
                runs_per_fit=self.spec.runs_per_fit,
                config=config,
                overrides=self.spec.overrides,
                tie_local_probabilities=self.spec.tie_local_probabilities,
                jobs=self.jobs,
            )
            frame = result.frame()
            self.writer.csv(frame, f"sweep_{label}.csv")
            if not frame.empty:
                self.writer.csv(log_scale_histogram(frame["best_f"].tolist()), f"sweep_{label}_histogram.csv")
            out[label] = calculate_sweep_metrics(frame)
            logger.info(f"  -> {out[label]}")
        return out

    def _run_finite_data(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for d_idx, (label, dist) in enumerate(self.spec.dists.items()):
            for model, generator in self.spec.generating.items():
                logger.info(f"[{label}] {model.label} data, {self.spec.n_datasets} datasets of m = {self.spec.m}")
                config = replace(self.fit_config, seed=derive_seed(self.spec.seed, d_idx))
                result = finite_data_experiment(
                    generator,
                    dist,
                    n_datasets=self.spec.n_datasets,
                    m=self.spec.m,
                    runs_per_fit=self.spec.runs_per_fit,
                    config=config,
                    cutoff=self.spec.cutoff,
                    initial_severity=self.spec.initial_severity,
                    jobs=self.jobs,
                )
                self.writer.csv(result.frame(), f"finite_{label}_{model.value}.csv")
                metrics = calculate_finite_metrics(result.frame(), model)
                out[f"{label}/{model.value}"] = metrics
                logger.info(f"  -> correct model wins {metrics['correct_model_wins']}/{metrics['datasets']}")
        return out

    def _generate_report(self, table: CrossFitTable, metrics: Dict[str, Any]) -> str:
        models = (ModelKind.MT, ModelKind.IDS)
        lines = ["# Cross-fit Report"]
        lines.append(f"Runs per fit: **{self.spec.runs_per_fit}**, seed: `{self.spec.seed}`")

        for label in self.spec.dists:
            lines.append(f"\n## {label}")
            header = "| Fitted \\ Data | " + " | ".join(m.label for m in models) + " |"
            lines.extend([header, "| :--- | ---: | ---: |"])
            for fitted in models:
                cells = [f"{table.best_f(label, fitted, data):.3e}" for data in models]
                lines.append(f"| {fitted.label} | " + " | ".join(cells) + " |")

            lines.append("\n### Per-size breakdown")
            breakdown = [c for c in table.cells if c.dist_label == label]
            sizes = len(breakdown[0].breakdown) if breakdown else 0
            lines.append("| n | " + " | ".join(f"{c.fitted_model.value} on {c.data_model.value}" for c in breakdown) + " |")
            lines.append("| :--- |" + " ---: |" * len(breakdown))
            for n in range(sizes):
                lines.append(f"| {n + 1} | " + " | ".join(f"{c.breakdown[n]:.3e}" for c in breakdown) + " |")

            m = metrics[label]
            lines.append(
                f"\nSeparation (worst wrong / worst correct): **{m['separation']:.3g}** "
                f"({m['min_wrong_f']:.3e} vs {m['max_correct_f']:.3e})"
            )
        return "\n".join(lines) + "\n"

    def _log_summary(self, summary: Dict[str, Any]):
        logger.info(f"{'='*60}")
        logger.info("📊 SUMMARY")
        logger.info(f"{'='*60}")
        for key, value in summary["metrics"].items():
            logger.info(f"{key}: {value}")
        logger.info(f"{'='*60}")
