"""
Command-line entrypoint for flow anomaly-detection experiments: train, eval, diagnose, sweep-depth, compare, export-data.
Every command reads the YAML experiment config, applies flag overrides and writes machine-readable reports
under the output directory. Exit codes: 0 success, 2 config error, 3 data/format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.base.base_distribution import BaseDistribution
from src.common.errors import (
    EXIT_DATA,
    EXIT_NUMERICAL,
    EXIT_OK,
    AltflowError,
    DegenerateLabelsError,
    EmptyWindowError,
    FormatError,
    RequiresKnownDensityError,
)
from src.common.logging import configure_logging
from src.common.settings import get_settings
from src.data.feature_store import load_features, save_dataset, write_tensor
from src.data.synthetic import Dataset, generate, oracle_anomaly_map
from src.diagnostics.ks_statistics import (
    KsReport,
    channel_ks_report,
    ks_critical_value,
    location_ks_map,
    mean_shift_summary,
    mean_square_statistic,
    pool_ks_reports,
)
from src.diagnostics.normalization_checks import MIN_KL_SAMPLES, GaussianSampler, kl_identity_check
from src.evaluation.metrics import StabilityReport, auroc, pixel_auroc, stability
from src.experiments.artifacts import long_metrics_frame, metrics_frame, write_frame, write_json
from src.experiments.experiment_config import ExperimentConfig, apply_overrides, load_experiment_config
from src.flow.checkpoint import load_checkpoint
from src.flow.flow_model import FlowModel, build_flow, forward
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4
from src.scoring.anomaly_scoring import AnomalyResult, score_map_fixed, score_map_learned
from src.training.trainer import TrainReport, fit

LOGGER = logging.getLogger("experiments")

KL_STREAM = 31


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.dataset.features_path:
        return load_features(Path(config.dataset.features_path))
    return generate(config.dataset.synthetic)


def build_model(config: ExperimentConfig, dataset: Dataset) -> tuple[FlowModel, BaseDistribution]:
    channels, height, width = dataset.event_shape
    model = build_flow(
        channels=channels,
        depth=config.flow.depth,
        hidden_width=config.flow.hidden_width,
        seed=config.training.seed,
        init=config.flow.init,  # type: ignore[arg-type]
    )
    return model, BaseDistribution.standard(channels, height, width)


def score_samples(model: FlowModel, base: BaseDistribution, x: Tensor4, *, learned: bool = True) -> AnomalyResult:
    z, _ = forward(model, x)
    return score_map_learned(z, base) if learned else score_map_fixed(z)


def _split(dataset: Dataset, split: str) -> tuple[Tensor4, np.ndarray, Tensor4]:
    if split == "train":
        b, _, h, w = dataset.train.shape
        return dataset.train, np.zeros(b, dtype=np.int64), Tensor4.zeros((b, 1, h, w))
    return dataset.test, dataset.test_image_labels, dataset.test_pixel_masks


@dataclass
class EpochEvaluator:
    """Per-epoch callback: AUROC on the test split and KS of the train outputs at the diagnostics cadence."""

    dataset: Dataset
    config: ExperimentConfig
    ks_reports: list[tuple[int, KsReport]] = field(default_factory=list)

    def __call__(self, epoch: int, model: FlowModel, base: BaseDistribution) -> dict[str, float | None]:
        last = epoch == self.config.training.epochs - 1
        learned = self.config.training.psi_trainable
        row: dict[str, float | None] = {}

        if epoch % self.config.evaluation.every_epochs == 0 or last:
            result = score_samples(model, base, self.dataset.test, learned=learned)
            row["auroc_pixel"] = _safe_auroc(lambda: pixel_auroc(result.anomaly_map, self.dataset.test_pixel_masks))
            row["auroc_image"] = _safe_auroc(lambda: auroc(result.image_scores, self.dataset.test_image_labels))

        if epoch % self.config.diagnostics.every_epochs == 0 or last:
            z, _ = forward(model, self.dataset.train)
            report = channel_ks_report(z, base if learned else None)
            self.ks_reports.append((epoch, report))
            row["ks_mean"] = report.mean
        return row


def _safe_auroc(compute: Callable[[], float]) -> float | None:
    try:
        return compute()
    except DegenerateLabelsError:
        return None


@dataclass
class TrainOutcome:
    config: ExperimentConfig
    report: TrainReport
    pixel: StabilityReport | None
    image: StabilityReport | None
    ks_pooled: KsReport | None
    ks_final: KsReport | None
    warnings: list[str] = field(default_factory=list)

    @property
    def final_row(self) -> dict[str, Any]:
        return self.report.metric_rows[-1] if self.report.metric_rows else {}

    def summary(self) -> dict[str, Any]:
        def window_stats(item: StabilityReport | None) -> dict[str, Any] | None:
            if item is None:
                return None
            return {"best": item.best_auroc, "mean": item.mean_auroc, "std": item.std_auroc}

        return {
            "variant": self.config.training.variant,
            "seed": self.config.training.seed,
            "depth": self.config.flow.depth,
            "status": self.report.status,
            "final_loss": self.report.losses[-1] if self.report.losses else None,
            "pixel": window_stats(self.pixel),
            "image": window_stats(self.image),
            "ks": self.ks_pooled.to_dict() if self.ks_pooled else None,
            "ks_final_mean": self.ks_final.mean if self.ks_final else None,
        }


def _stability_for(rows: Sequence[dict[str, Any]], metric: str, window: tuple[int, int], warnings: list[str]) -> StabilityReport | None:
    series = [(row["epoch"], row[metric]) for row in rows if row.get(metric) is not None]
    if not series:
        return None
    try:
        return stability(series, window)
    except EmptyWindowError as exc:
        warnings.append(str(exc))
        LOGGER.warning("%s stability skipped: %s", metric, exc)
        return None


def run_training(config: ExperimentConfig, dataset: Dataset, *, out_dir: Path | None = None) -> TrainOutcome:
    model, base = build_model(config, dataset)
    evaluator = EpochEvaluator(dataset=dataset, config=config)
    checkpoint_dir = out_dir / "checkpoints" if out_dir is not None else None
    LOGGER.info(
        "training variant=%s seed=%s depth=%s epochs=%s",
        config.training.variant,
        config.training.seed,
        config.flow.depth,
        config.training.epochs,
    )
    report = fit(model, base, dataset.train, config.training, [evaluator], checkpoint_dir=checkpoint_dir)

    warnings: list[str] = []
    window = config.window()
    outcome = TrainOutcome(
        config=config,
        report=report,
        pixel=_stability_for(report.metric_rows, "auroc_pixel", window, warnings),
        image=_stability_for(report.metric_rows, "auroc_image", window, warnings),
        ks_pooled=pool_ks_reports([item for _, item in evaluator.ks_reports]) if evaluator.ks_reports else None,
        ks_final=evaluator.ks_reports[-1][1] if evaluator.ks_reports else None,
        warnings=warnings,
    )
    if out_dir is not None:
        _write_train_artifacts(outcome, out_dir)
    return outcome


def _run_name(config: ExperimentConfig) -> str:
    return f"{config.training.variant}-seed{config.training.seed}"


def _write_train_artifacts(outcome: TrainOutcome, out_dir: Path) -> None:
    rows = outcome.report.metric_rows
    write_frame(out_dir / "metrics.csv", metrics_frame(rows))
    write_frame(out_dir / "metrics_long.csv", long_metrics_frame(_run_name(outcome.config), rows))
    payload = {
        "config": outcome.config.to_dict(),
        "train": outcome.report.to_dict(),
        "window": list(outcome.config.window()),
        "stability": {
            "pixel": outcome.pixel.to_dict() if outcome.pixel else None,
            "image": outcome.image.to_dict() if outcome.image else None,
        },
        "ks": outcome.ks_pooled.to_dict() if outcome.ks_pooled else None,
        "ks_final": outcome.ks_final.to_dict() if outcome.ks_final else None,
        "warnings": outcome.warnings,
    }
    if outcome.report.base is not None:
        payload["base"] = {
            "mu_mean": float(outcome.report.base.mu.data.mean()),
            "sigma_mean": float(outcome.report.base.sigma.mean()),
        }
    write_json(out_dir / "report.json", payload)


def _exit_for(statuses: Sequence[str]) -> int:
    return EXIT_NUMERICAL if any(status == "diverged" for status in statuses) else EXIT_OK


def cmd_train(config: ExperimentConfig) -> tuple[int, dict[str, Any]]:
    out_dir = config.resolved_output_dir("train")
    outcome = run_training(config, load_dataset(config), out_dir=out_dir)
    return _exit_for([outcome.report.status]), {"out_dir": str(out_dir), **outcome.summary()}


def _checkpoint_paths(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(path.glob("*.ckpt"))
        if not found:
            raise FormatError(f"no checkpoints in {path}", details={"path": str(path)})
        return found
    return [path]


def _require_checkpoint(checkpoint: str | None) -> Path:
    if not checkpoint:
        raise FormatError("--checkpoint is required for this command")
    return Path(checkpoint)


def _scored_checkpoints(checkpoint: str | None, x: Tensor4) -> list[tuple[str, int, AnomalyResult]]:
    """Score every checkpoint once per epoch (final.ckpt repeats the last cadence epoch), ordered by epoch."""

    scored: dict[int, tuple[str, int, AnomalyResult]] = {}
    for path in _checkpoint_paths(_require_checkpoint(checkpoint)):
        model, base, header = load_checkpoint(path)
        epoch = int(header.get("epoch") or 0)
        if epoch not in scored:
            scored[epoch] = (path.name, epoch, score_samples(model, base, x))
    return [scored[epoch] for epoch in sorted(scored)]


def cmd_eval(
    config: ExperimentConfig,
    checkpoint: str | None,
    split: str,
    *,
    oracle: bool = False,
) -> tuple[int, dict[str, Any]]:
    dataset = load_dataset(config)
    x, labels, masks = _split(dataset, split)

    if oracle:
        if dataset.spec is None:
            raise RequiresKnownDensityError("--oracle needs a synthetic dataset with a known generative density")
        scored = [("oracle", 0, oracle_anomaly_map(dataset.spec, x))]
        window = (0, 0)
    else:
        scored = _scored_checkpoints(checkpoint, x)
        window = config.window()
    if not scored:
        raise FormatError("no checkpoint could be evaluated")
    if len(scored) == 1:
        # a lone checkpoint is its own window
        window = (scored[0][1], scored[0][1])

    evaluated = [
        {
            "checkpoint": name,
            "epoch": epoch,
            "auroc_pixel": pixel_auroc(result.anomaly_map, masks),
            "auroc_image": auroc(result.image_scores, labels),
        }
        for name, epoch, result in scored
    ]
    pixel = stability([(item["epoch"], item["auroc_pixel"]) for item in evaluated], window)
    image = stability([(item["epoch"], item["auroc_image"]) for item in evaluated], window)

    last_result = scored[-1][2]
    out_dir = config.resolved_output_dir("eval")
    scores = pd.DataFrame(
        {"sample_id": np.arange(x.batch, dtype=np.int64), "score": last_result.image_scores, "label": labels},
    )
    write_frame(out_dir / "image_scores.csv", scores)
    write_tensor(out_dir / "anomaly_maps.aft", last_result.anomaly_map)
    report = {
        "config": config.to_dict(),
        "split": split,
        "checkpoints": evaluated,
        "stability": {"pixel": pixel.to_dict(), "image": image.to_dict()},
    }
    write_json(out_dir / "eval_report.json", report)
    LOGGER.info("evaluated %s checkpoint(s); best pixel AUROC %.4f", len(evaluated), pixel.best_auroc)
    return EXIT_OK, {"out_dir": str(out_dir), "pixel": pixel.to_dict(), "image": image.to_dict()}


def cmd_diagnose(
    config: ExperimentConfig,
    checkpoint: str | None,
    split: str,
    kl_samples: int,
) -> tuple[int, dict[str, Any]]:
    path = _require_checkpoint(checkpoint)
    if path.is_dir():
        path = path / "final.ckpt"
    model, base, header = load_checkpoint(path)
    dataset = load_dataset(config)
    x, _, _ = _split(dataset, split)
    z, _ = forward(model, x)

    raw = channel_ks_report(z)
    standardized = channel_ks_report(z, base)
    report: dict[str, Any] = {
        "config": config.to_dict(),
        "checkpoint": path.name,
        "epoch": header.get("epoch"),
        "split": split,
        "ks_critical_value": ks_critical_value(raw.n_samples),
        "raw": {
            "ks": raw.to_dict(),
            "location_ks_mean": float(location_ks_map(z).mean()),
            "mean_square": mean_square_statistic(z),
            "mean_shift": mean_shift_summary(z).to_dict(),
        },
        "standardized": {
            "ks": standardized.to_dict(),
            "location_ks_mean": float(location_ks_map(z, base).mean()),
            "mean_shift": mean_shift_summary(z, base).to_dict(),
        },
        "kl_identity": None,
    }

    spec = dataset.spec
    if spec is not None and spec.warp_depth == 0 and config.dataset.features_path is None:
        sampler = GaussianSampler(mean=spec.latent_mean, std=spec.latent_std, event_shape=spec.shape)
        n = max(kl_samples, MIN_KL_SAMPLES)
        report["kl_identity"] = kl_identity_check(model, base, sampler, n, rng=Rng(spec.seed).derive(KL_STREAM)).to_dict()

    out_dir = config.resolved_output_dir("diagnose")
    channels = pd.DataFrame(
        {
            "channel": np.arange(len(raw.per_channel_ks), dtype=np.int64),
            "ks_raw": raw.per_channel_ks,
            "ks_standardized": standardized.per_channel_ks,
        }
    )
    write_frame(out_dir / "ks_channels.csv", channels)
    write_json(out_dir / "diagnose_report.json", report)
    LOGGER.info("diagnosed %s: raw KS %.4f standardized KS %.4f", path.name, raw.mean, standardized.mean)
    return EXIT_OK, {"out_dir": str(out_dir), "raw_ks_mean": raw.mean, "standardized_ks_mean": standardized.mean}


def _map_runs(worker: Callable[..., dict[str, Any]], jobs: Sequence[tuple[Any, ...]]) -> list[dict[str, Any]]:
    """Run jobs inline or in worker processes; results keep job order either way."""

    workers = min(get_settings().ALTFLOW_THREADS, len(jobs))
    if workers <= 1:
        return [worker(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(worker, *zip(*jobs, strict=True)))


def _sweep_worker(config: ExperimentConfig) -> dict[str, Any]:
    dataset = load_dataset(config)
    outcome = run_training(config, dataset)
    row = outcome.final_row
    mean_square = None
    if outcome.report.model is not None:
        z, _ = forward(outcome.report.model, dataset.train)
        mean_square = mean_square_statistic(z)
    return {
        "depth": config.flow.depth,
        "seed": config.training.seed,
        "status": outcome.report.status,
        "final_train_loss": outcome.report.losses[-1] if outcome.report.losses else None,
        "ks_mean": outcome.ks_final.mean if outcome.ks_final else None,
        "mean_square": mean_square,
        "auroc_pixel": row.get("auroc_pixel"),
        "auroc_image": row.get("auroc_image"),
    }


def cmd_sweep_depth(config: ExperimentConfig, depths: Sequence[int]) -> tuple[int, dict[str, Any]]:
    jobs = [
        (replace(config.with_training(seed=seed), flow=replace(config.flow, depth=depth)),)
        for depth in depths
        for seed in config.seeds
    ]
    rows = _map_runs(_sweep_worker, jobs)
    out_dir = config.resolved_output_dir("sweep-depth")
    write_frame(out_dir / "depth_sweep.csv", pd.DataFrame(rows))
    write_json(out_dir / "depth_sweep.json", {"config": config.to_dict(), "depths": list(depths), "runs": rows})
    return _exit_for([row["status"] for row in rows]), {"out_dir": str(out_dir), "runs": len(rows)}


def variant_config(config: ExperimentConfig, variant: str, seed: int) -> ExperimentConfig:
    flags = {
        "baseline": {"altub_enabled": False, "stereotype_mode": False},
        "altub": {"altub_enabled": True, "stereotype_mode": False},
        "stereotype": {"altub_enabled": False, "stereotype_mode": True},
    }[variant]
    return config.with_training(seed=seed, **flags)


def _compare_worker(config: ExperimentConfig) -> dict[str, Any]:
    outcome = run_training(config, load_dataset(config))
    summary = outcome.summary()
    summary["curves"] = long_metrics_frame(_run_name(config), outcome.report.metric_rows).to_dict(orient="records")
    return summary


def _variant_summary(runs: Sequence[dict[str, Any]]) -> dict[str, Any]:
    def mean_of(values: list[float | None]) -> float | None:
        present = [value for value in values if value is not None]
        return float(np.mean(present)) if present else None

    return {
        "seeds": [run["seed"] for run in runs],
        "pixel_mean": mean_of([run["pixel"]["mean"] if run["pixel"] else None for run in runs]),
        "pixel_std": mean_of([run["pixel"]["std"] if run["pixel"] else None for run in runs]),
        "image_mean": mean_of([run["image"]["mean"] if run["image"] else None for run in runs]),
        "image_std": mean_of([run["image"]["std"] if run["image"] else None for run in runs]),
        "ks_mean": mean_of([run["ks"]["mean"] if run["ks"] else None for run in runs]),
    }


def cmd_compare(config: ExperimentConfig) -> tuple[int, dict[str, Any]]:
    jobs = [(variant_config(config, variant, seed),) for variant in config.compare.variants for seed in config.seeds]
    runs = _map_runs(_compare_worker, jobs)

    curves = [record for run in runs for record in run.pop("curves")]
    out_dir = config.resolved_output_dir("compare")
    write_frame(out_dir / "metrics_long.csv", pd.DataFrame(curves, columns=["run", "epoch", "metric", "value"]))
    variants = {
        variant: _variant_summary([run for run in runs if run["variant"] == variant]) for variant in config.compare.variants
    }
    comparison = {"config": config.to_dict(), "window": list(config.window()), "runs": runs, "variants": variants}
    write_json(out_dir / "comparison.json", comparison)
    return _exit_for([run["status"] for run in runs]), {"out_dir": str(out_dir), "variants": variants}


def cmd_export_data(config: ExperimentConfig) -> tuple[int, dict[str, Any]]:
    dataset = generate(config.dataset.synthetic)
    out_dir = config.resolved_output_dir("export-data")
    manifest = save_dataset(dataset, out_dir)
    return EXIT_OK, {"manifest": str(manifest), **dataset.summary()}


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Experiment YAML (default: configs/experiment.yaml)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--no-altub", action="store_true", help="Keep the base fixed at N(0, I)")
    common.add_argument("--stereotype", action="store_true", help="Train the base jointly at eta1 only")
    common.add_argument("--freezing-interval", type=int, default=None)
    common.add_argument("--eta2-max", type=float, default=None)
    common.add_argument("--depth", type=int, default=None)
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--dataset", default=None, help="Feature dataset directory or manifest")

    parser = argparse.ArgumentParser(description="Flow anomaly-detection experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", parents=[common])
    for name in ("eval", "diagnose"):
        sub = commands.add_parser(name, parents=[common])
        sub.add_argument("--checkpoint", default=None, help="Checkpoint file or directory")
        sub.add_argument("--split", choices=["train", "test"], default="test" if name == "eval" else "train")
        if name == "eval":
            sub.add_argument("--oracle", action="store_true", help="Score with the true density of a synthetic dataset")
        else:
            sub.add_argument("--kl-samples", type=int, default=MIN_KL_SAMPLES)
    sweep = commands.add_parser("sweep-depth", parents=[common])
    sweep.add_argument("--depths", type=int, nargs="+", default=[2, 8])
    sweep.add_argument("--seeds", type=int, nargs="+", default=None)
    compare = commands.add_parser("compare", parents=[common])
    compare.add_argument("--seeds", type=int, nargs="+", default=None)
    commands.add_parser("export-data", parents=[common])
    return parser.parse_args(argv)


def run_command(args: argparse.Namespace) -> tuple[int, dict[str, Any]]:
    config = apply_overrides(
        load_experiment_config(args.config),
        seed=args.seed,
        no_altub=args.no_altub,
        stereotype=args.stereotype,
        freezing_interval=args.freezing_interval,
        eta2_max=args.eta2_max,
        depth=args.depth,
        out=args.out,
        dataset=args.dataset,
        seeds=getattr(args, "seeds", None),
    )
    if args.command == "train":
        return cmd_train(config)
    if args.command == "eval":
        return cmd_eval(config, args.checkpoint, args.split, oracle=args.oracle)
    if args.command == "diagnose":
        return cmd_diagnose(config, args.checkpoint, args.split, args.kl_samples)
    if args.command == "sweep-depth":
        return cmd_sweep_depth(config, args.depths)
    if args.command == "compare":
        return cmd_compare(config)
    return cmd_export_data(config)


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = parse_args(argv)
    try:
        code, result = run_command(args)
    except AltflowError as exc:
        LOGGER.error("%s failed: %s | details=%s", args.command, exc, exc.details)
        return exc.exit_code
    except OSError as exc:
        LOGGER.error("%s failed: %s", args.command, exc)
        return EXIT_DATA
    print(json.dumps(result, indent=2, default=str))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
