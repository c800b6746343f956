"""Config-driven experiment runner.

One master seed in the config; every stage derives its own seed as
master + crc32(stage tag), so stages are individually reproducible and the
result is independent of execution order.  Solver fits additionally add the
subset size to the stage seed, which makes a grid cell coincide exactly with
the curve point of the same feature count.

Wall-clock timings go to timings.json; every other emitted artifact is a
pure function of the config, so two runs of the same config are byte
identical apart from that one file.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
import zlib
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from . import __version__
from .errors import DataError, PipelineError, SolverError
from .ingest import (
    Dataset,
    RawTable,
    SamplingPlan,
    ScalerParams,
    SplitPair,
    clean,
    fit_scaler,
    load_csv,
    sample_per_class,
    save_dataset,
    save_manifest,
    split,
)
from .linear import LogRegModel, coefficients, fit as lr_fit, predict as lr_predict, save_model
from .metrics import (
    ConfusionMatrix,
    Report,
    ClassScores,
    accuracy,
    class_recall,
    confusion,
    confusion_to_csv,
    prf1,
    submatrix,
)
from .optim import PenaltySpec, SagaConfig
from .select import (
    AccuracyCurve,
    CommonFeatureSet,
    FeatureRanking,
    accuracy_curve,
    common_features,
    common_to_csv,
    common_to_json,
    curve_to_csv,
    find_max_k,
    rank_features,
    rank_statistics,
    ranking_to_csv,
)
from .trees import ForestParams, TreeParams, dt_fit, dt_predict, rf_fit, rf_predict

MODELS = ("lr-l1", "lr-l2", "rf", "dt")
FEATURE_SETS = ("all", "a", "b", "c", "top-l1", "top-l2")
MODEL_LABELS = {"lr-l1": "LR+L1", "lr-l2": "LR+L2", "rf": "RF", "dt": "DT"}


class SamplingOptions(BaseModel):
    per_class_cap: int = Field(default=5000, ge=1)
    excluded_classes: list[str] = []
    include_problematic: bool = False
    problematic_class: Optional[str] = "DoS attacks-SlowHTTPTest"
    confounding_class: Optional[str] = "FTP-BruteForce"


class SolverOptions(BaseModel):
    max_epochs: int = Field(default=100, ge=1)
    step_size: Union[float, Literal["auto"]] = "auto"
    tolerance: float = Field(default=1e-4, gt=0)


class TreeOptions(BaseModel):
    max_depth: Optional[int] = None
    min_samples_split: int = Field(default=2, ge=2)


class ForestOptions(BaseModel):
    n_trees: int = Field(default=100, ge=1)
    features_per_split: Optional[int] = None  # None -> round(sqrt(m))
    bootstrap: bool = True


class ExperimentSpec(BaseModel):
    """One grid cell: a model family plus a feature-set key."""

    model: Literal["lr-l1", "lr-l2", "rf", "dt"]
    feature_set: str

    @field_validator("feature_set")
    @classmethod
    def _canonical(cls, v: str) -> str:
        key = v.strip().lower()
        # accept the table spellings like "top22-l1" for the size-matched sets
        if key.startswith("top") and key.endswith("-l1"):
            key = "top-l1"
        elif key.startswith("top") and key.endswith("-l2"):
            key = "top-l2"
        if key not in FEATURE_SETS:
            raise ValueError(f"unknown feature set {v!r}")
        return key

    def name(self) -> str:
        return f"{self.model}-{self.feature_set}"

    def display_name(self) -> str:
        suffix = {"a": "A", "b": "B", "c": "C"}.get(self.feature_set, self.feature_set)
        return f"{MODEL_LABELS[self.model]}-{suffix}"


class RunConfig(BaseModel):
    """Everything a run needs; serialize this to reproduce the run."""

    dataset_paths: list[str]
    output_dir: str
    label_column: str = "Label"
    drop_columns: list[str] = ["Timestamp"]
    sampling: SamplingOptions = SamplingOptions()
    split_ratio: float = Field(default=0.7, gt=0, le=1)
    scale_features: bool = True
    penalty_c: float = Field(default=0.5, gt=0)
    solver: SolverOptions = SolverOptions()
    tree: TreeOptions = TreeOptions()
    forest: ForestOptions = ForestOptions()
    ranking_aggregation: Literal["mean-abs", "max-abs", "l2-norm", "mean-signed"] = "mean-abs"
    baseline_fraction: float = Field(default=0.95, gt=0, le=1)
    curve_k_step: int = Field(default=1, ge=1)
    experiments: Optional[list[ExperimentSpec]] = None  # None -> full grid
    seed: int = Field(default=0, ge=0)

    def resolved_experiments(self) -> list[ExperimentSpec]:
        if self.experiments is not None:
            return list(self.experiments)
        return [
            ExperimentSpec(model=m, feature_set=fs) for m, fs in product(MODELS, FEATURE_SETS)
        ]

    def config_hash(self) -> str:
        canon = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.model_validate_json(text)


def stage_seed(master: int, tag: str) -> int:
    return (master + zlib.crc32(tag.encode("utf-8"))) % 2**63


@dataclass
class GridCell:
    spec: ExperimentSpec
    subset: list[int]
    accuracy: float
    report: Report
    cm: ConfusionMatrix
    seconds: float


@dataclass
class GridResult:
    config: dict
    config_hash: str
    seeds: dict
    feature_names: list[str]
    class_names: list[str]
    row_counts: dict
    full_accuracy: dict  # family -> all-features test accuracy
    rankings: dict  # "l1"/"l2" -> FeatureRanking
    curves: dict  # ordering -> list[AccuracyCurve]
    baseline_accuracy: float
    max_l1: int
    max_l2: int
    common: CommonFeatureSet
    cells: list[GridCell] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def common_stats(self) -> dict:
        return rank_statistics(self.common)


class Pipeline:
    """Lazily evaluated stages shared by the grid, rank, and curve entry points.

    Every stage is wrapped so failures surface as PipelineError carrying the
    stage name; stage wall times are collected as the stages actually run.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.timings: dict[str, float] = {}
        self._cache: dict = {}
        self._fit_cache: dict = {}

    def _stage(self, name: str, fn, kind: str = "data"):
        if name in self._cache:
            return self._cache[name]
        start = time.perf_counter()
        try:
            value = fn()
        except PipelineError:
            raise
        except SolverError as exc:
            raise PipelineError(name, str(exc), kind="solver") from exc
        except (DataError, ValueError, OSError) as exc:
            raise PipelineError(name, str(exc), kind=kind) from exc
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start
        self._cache[name] = value
        return value

    # -- data stages ------------------------------------------------------

    def raw(self) -> RawTable:
        def run():
            if not self.cfg.dataset_paths:
                raise DataError("no dataset paths configured")
            tables = [load_csv(p) for p in self.cfg.dataset_paths]
            header = tables[0].header
            for path, table in zip(self.cfg.dataset_paths[1:], tables[1:]):
                if table.header != header:
                    raise DataError(f"{path}: header differs from first file")
            rows = [row for table in tables for row in table.rows]
            return RawTable(header=header, rows=rows)

        return self._stage("load", run)

    def cleaned(self) -> Dataset:
        return self._stage(
            "clean",
            lambda: clean(self.raw(), self.cfg.label_column, tuple(self.cfg.drop_columns)),
        )

    def sampling_plan(self) -> SamplingPlan:
        s = self.cfg.sampling
        return SamplingPlan(
            per_class_cap=s.per_class_cap,
            excluded_classes=tuple(s.excluded_classes),
            include_problematic=s.include_problematic,
            problematic_class=s.problematic_class,
            seed=stage_seed(self.cfg.seed, "sample"),
        )

    def sampled(self) -> Dataset:
        return self._stage(
            "sample", lambda: sample_per_class(self.cleaned(), self.sampling_plan())
        )

    def pair(self) -> SplitPair:
        return self._stage(
            "split",
            lambda: split(
                self.sampled(), self.cfg.split_ratio, stage_seed(self.cfg.seed, "split")
            ),
        )

    def scaler(self) -> ScalerParams | None:
        if not self.cfg.scale_features:
            return None
        return self._stage("scale", lambda: fit_scaler(self.pair().train))

    # -- models and rankings ----------------------------------------------

    def solver_seed(self, family: str, n_features: int) -> int:
        return stage_seed(self.cfg.seed, f"solver.{family}") + n_features

    def tree_seed(self, family: str, n_features: int) -> int:
        return stage_seed(self.cfg.seed, f"trees.{family}") + n_features

    def _solver_cfg(self, seed: int) -> SagaConfig:
        s = self.cfg.solver
        return SagaConfig(
            max_epochs=s.max_epochs, step_size=s.step_size, tolerance=s.tolerance, seed=seed
        )

    def full_model(self, family: str) -> LogRegModel:
        def run():
            pair = self.pair()
            subset = list(range(pair.train.m))
            penalty = PenaltySpec(kind=family.split("-")[1], inverse_strength_c=self.cfg.penalty_c)
            cfg = self._solver_cfg(self.solver_seed(family, len(subset)))
            return lr_fit(pair.train, subset, penalty, cfg, scaler=self.scaler())

        return self._stage(f"fit-full.{family}", run)

    def full_accuracy(self, family: str) -> float:
        def run():
            pair = self.pair()
            pred = lr_predict(self.full_model(family), pair.test.X)
            return accuracy(confusion(pair.test.y, pred, pair.test.class_names))

        return self._stage(f"eval-full.{family}", run)

    def ranking(self, kind: str) -> FeatureRanking:
        def run():
            model = self.full_model(f"lr-{kind}")
            coefs, _ = coefficients(model)
            return rank_features(coefs, self.cfg.ranking_aggregation, penalty_kind=kind)

        return self._stage(f"rank.{kind}", run)

    def _k_grid(self, m: int) -> list[int]:
        ks = list(range(1, m + 1, self.cfg.curve_k_step))
        if ks[-1] != m:
            ks.append(m)  # the full-width point anchors the baseline search
        return ks

    def _ordering(self, name: str) -> FeatureRanking:
        if name in ("l1", "l2"):
            return self.ranking(name)
        if name == "common":
            order = [(idx, 0.0) for idx in self.common_set().indices()]
            return FeatureRanking(ordered=order, aggregation="common", penalty_kind="common")
        raise DataError(f"unknown ordering {name!r}")

    def curve(self, ordering: str, family: str) -> AccuracyCurve:
        def run():
            rank = self._ordering(ordering)
            if family in ("lr-l1", "lr-l2"):
                seed = stage_seed(self.cfg.seed, f"solver.{family}")
            else:
                seed = stage_seed(self.cfg.seed, f"trees.{family}")
            return accuracy_curve(
                self.pair(),
                rank,
                family,
                self._k_grid(len(rank)),
                penalty_c=self.cfg.penalty_c,
                solver=self._solver_cfg(0),
                tree=self._tree_params(0),
                forest=self._forest_params(0),
                scaler=self.scaler(),
                seed=seed,
            )

        return self._stage(f"curve.{ordering}.{family}", run)

    def baseline(self) -> float:
        return self.cfg.baseline_fraction * self.full_accuracy("lr-l1")

    def max_k(self, kind: str) -> int:
        def run():
            curve = self.curve(kind, f"lr-{kind}")
            k = find_max_k(curve, self.baseline())
            if k is None:
                raise DataError(
                    f"no feature count on the {kind} curve reaches the baseline "
                    f"accuracy {self.baseline():.4f}"
                )
            return k

        return self._stage(f"max-k.{kind}", run)

    def common_set(self) -> CommonFeatureSet:
        return self._stage(
            "common",
            lambda: common_features(
                self.ranking("l1"), self.max_k("l1"), self.ranking("l2"), self.max_k("l2")
            ),
        )

    # -- grid cells ---------------------------------------------------------

    def _tree_params(self, seed: int) -> TreeParams:
        t = self.cfg.tree
        return TreeParams(
            max_depth=t.max_depth, min_samples_split=t.min_samples_split, seed=seed
        )

    def _forest_params(self, seed: int) -> ForestParams:
        f = self.cfg.forest
        return ForestParams(
            n_trees=f.n_trees,
            features_per_split=f.features_per_split,
            bootstrap=f.bootstrap,
            tree=self._tree_params(0),
            seed=seed,
        )

    def feature_subset(self, key: str) -> list[int]:
        m = self.pair().train.m
        if key == "all":
            return list(range(m))
        if key == "a":
            return sorted(self.ranking("l1").top(self.max_k("l1")))
        if key == "b":
            return sorted(self.ranking("l2").top(self.max_k("l2")))
        if key == "c":
            return sorted(self.common_set().indices())
        size = min(len(self.common_set()), m)
        if key == "top-l1":
            return sorted(self.ranking("l1").top(size))
        if key == "top-l2":
            return sorted(self.ranking("l2").top(size))
        raise DataError(f"unknown feature set {key!r}")

    def _predict(self, spec: ExperimentSpec, subset: list[int]) -> np.ndarray:
        pair = self.pair()
        key = (spec.model, tuple(subset))
        if key in self._fit_cache:
            return self._fit_cache[key]
        if spec.model in ("lr-l1", "lr-l2"):
            penalty = PenaltySpec(
                kind=spec.model.split("-")[1], inverse_strength_c=self.cfg.penalty_c
            )
            cfg = self._solver_cfg(self.solver_seed(spec.model, len(subset)))
            model = lr_fit(pair.train, subset, penalty, cfg, scaler=self.scaler())
            pred = lr_predict(model, pair.test.X)
        else:
            sliced = Dataset(
                X=pair.train.X[:, subset],
                y=pair.train.y,
                feature_names=[pair.train.feature_names[i] for i in subset],
                class_names=list(pair.train.class_names),
            )
            Xtest = pair.test.X[:, subset]
            seed = self.tree_seed(spec.model, len(subset))
            if spec.model == "dt":
                pred = dt_predict(dt_fit(sliced, self._tree_params(seed)), Xtest)
            else:
                pred = rf_predict(rf_fit(sliced, self._forest_params(seed)), Xtest)
        self._fit_cache[key] = pred
        return pred

    def run_cell(self, spec: ExperimentSpec) -> GridCell:
        start = time.perf_counter()
        subset = self.feature_subset(spec.feature_set)
        try:
            pred = self._predict(spec, subset)
        except SolverError as exc:
            raise PipelineError(f"grid.{spec.name()}", str(exc), kind="solver") from exc
        pair = self.pair()
        cm = confusion(pair.test.y, pred, pair.test.class_names)
        return GridCell(
            spec=spec,
            subset=subset,
            accuracy=accuracy(cm),
            report=prf1(cm),
            cm=cm,
            seconds=time.perf_counter() - start,
        )


def run_pipeline(cfg: RunConfig) -> GridResult:
    """Execute the whole experiment protocol for one config."""
    pipe = Pipeline(cfg)
    pair = pipe.pair()
    sampled = pipe.sampled()
    pipe.scaler()

    full_acc = {family: pipe.full_accuracy(family) for family in ("lr-l1", "lr-l2")}
    rankings = {kind: pipe.ranking(kind) for kind in ("l1", "l2")}
    max_l1 = pipe.max_k("l1")
    max_l2 = pipe.max_k("l2")
    common = pipe.common_set()
    curves = {
        ordering: [pipe.curve(ordering, family) for family in ("lr-l1", "lr-l2")]
        for ordering in ("l1", "l2", "common")
    }
    cells = [pipe.run_cell(spec) for spec in cfg.resolved_experiments()]

    counts = sampled.class_counts()
    return GridResult(
        config=cfg.model_dump(mode="json"),
        config_hash=cfg.config_hash(),
        seeds={
            "master": cfg.seed,
            "sample": stage_seed(cfg.seed, "sample"),
            "split": stage_seed(cfg.seed, "split"),
            "solver.lr-l1": stage_seed(cfg.seed, "solver.lr-l1"),
            "solver.lr-l2": stage_seed(cfg.seed, "solver.lr-l2"),
            "trees.dt": stage_seed(cfg.seed, "trees.dt"),
            "trees.rf": stage_seed(cfg.seed, "trees.rf"),
        },
        feature_names=list(sampled.feature_names),
        class_names=list(sampled.class_names),
        row_counts={
            "sampled": sampled.n,
            "train": pair.train.n,
            "test": pair.test.n,
            "per_class": {n: int(c) for n, c in zip(sampled.class_names, counts)},
        },
        full_accuracy=full_acc,
        rankings=rankings,
        curves=curves,
        baseline_accuracy=pipe.baseline(),
        max_l1=max_l1,
        max_l2=max_l2,
        common=common,
        cells=cells,
        timings=dict(pipe.timings),
    )


# ---------------------------------------------------------------------------
# artifact emission


def _feature_set_label(key: str, common_size: int) -> str:
    return {
        "all": "all",
        "a": "A",
        "b": "B",
        "c": "C",
        "top-l1": f"top{common_size}_l1",
        "top-l2": f"top{common_size}_l2",
    }[key]


def _write_csv(path: Path, header: list, rows: list[list]):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def grid_result_to_dict(result: GridResult) -> dict:
    return {
        "config": result.config,
        "config_hash": result.config_hash,
        "seeds": result.seeds,
        "feature_names": result.feature_names,
        "class_names": result.class_names,
        "row_counts": result.row_counts,
        "full_accuracy": result.full_accuracy,
        "rankings": {
            kind: {
                "aggregation": r.aggregation,
                "penalty_kind": r.penalty_kind,
                "ordered": [[idx, score] for idx, score in r.ordered],
            }
            for kind, r in result.rankings.items()
        },
        "curves": {
            ordering: [
                {
                    "model_family": c.model_family,
                    "ranking_used": c.ranking_used,
                    "points": [[k, acc] for k, acc in c.points],
                }
                for c in cs
            ]
            for ordering, cs in result.curves.items()
        },
        "baseline_accuracy": result.baseline_accuracy,
        "max_l1": result.max_l1,
        "max_l2": result.max_l2,
        "common": [[i, r1, r2] for i, r1, r2 in result.common.entries],
        "cells": [
            {
                "model": cell.spec.model,
                "feature_set": cell.spec.feature_set,
                "subset": cell.subset,
                "accuracy": cell.accuracy,
                "report": cell.report.to_dict(),
                "confusion": cell.cm.counts.tolist(),
                "seconds": cell.seconds,
            }
            for cell in result.cells
        ],
        "timings": result.timings,
    }


def grid_result_from_dict(doc: dict) -> GridResult:
    def scores(d):
        return ClassScores(d["precision"], d["recall"], d["f1"])

    cells = [
        GridCell(
            spec=ExperimentSpec(model=c["model"], feature_set=c["feature_set"]),
            subset=[int(i) for i in c["subset"]],
            accuracy=c["accuracy"],
            report=Report(
                accuracy=c["report"]["accuracy"],
                per_class=[scores(s) for s in c["report"]["per_class"]],
                macro=scores(c["report"]["macro"]),
                weighted=scores(c["report"]["weighted"]),
                zero_division_classes=list(c["report"]["zero_division_classes"]),
            ),
            cm=ConfusionMatrix(
                counts=np.array(c["confusion"], dtype=np.int64),
                class_names=list(doc["class_names"]),
            ),
            seconds=c["seconds"],
        )
        for c in doc["cells"]
    ]
    return GridResult(
        config=doc["config"],
        config_hash=doc["config_hash"],
        seeds=doc["seeds"],
        feature_names=list(doc["feature_names"]),
        class_names=list(doc["class_names"]),
        row_counts=doc["row_counts"],
        full_accuracy=doc["full_accuracy"],
        rankings={
            kind: FeatureRanking(
                ordered=[(int(i), float(s)) for i, s in r["ordered"]],
                aggregation=r["aggregation"],
                penalty_kind=r["penalty_kind"],
            )
            for kind, r in doc["rankings"].items()
        },
        curves={
            ordering: [
                AccuracyCurve(
                    points=[(int(k), float(a)) for k, a in c["points"]],
                    model_family=c["model_family"],
                    ranking_used=c["ranking_used"],
                )
                for c in cs
            ]
            for ordering, cs in doc["curves"].items()
        },
        baseline_accuracy=doc["baseline_accuracy"],
        max_l1=doc["max_l1"],
        max_l2=doc["max_l2"],
        common=CommonFeatureSet(entries=[(int(i), int(a), int(b)) for i, a, b in doc["common"]]),
        cells=cells,
        timings=doc["timings"],
    )


def emit_reports(result: GridResult, out_dir: str | Path) -> list[str]:
    """Write every table/curve artifact for a GridResult; returns file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    def record(name: str):
        written.append(name)

    common_size = len(result.common)
    names = result.feature_names

    manifest = {
        "config": result.config,
        "config_hash": result.config_hash,
        "seeds": result.seeds,
        "versions": {
            "flowsel": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "row_counts": result.row_counts,
        "class_names": result.class_names,
        "full_accuracy": result.full_accuracy,
        "baseline_accuracy": result.baseline_accuracy,
        "max_l1": result.max_l1,
        "max_l2": result.max_l2,
        "common_features": common_to_json(result.common, names),
        "rank_statistics": result.common_stats() if common_size else None,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    record("manifest.json")

    # wall times are the one run-dependent artifact; kept out of the manifest
    (out / "timings.json").write_text(
        json.dumps(
            {
                "stages": result.timings,
                "cells": {cell.spec.name(): cell.seconds for cell in result.cells},
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    record("timings.json")

    (out / "grid_result.json").write_text(
        json.dumps(grid_result_to_dict(result), sort_keys=True) + "\n"
    )
    record("grid_result.json")

    for kind, ranking in result.rankings.items():
        name = f"ranking_{kind}.csv"
        ranking_to_csv(ranking, names, out / name)
        record(name)

    if common_size:
        common_to_csv(result.common, names, out / "common_features.csv")
        record("common_features.csv")

    for ordering, curves in result.curves.items():
        if curves:
            name = f"curves_{ordering}.csv"
            curve_to_csv(curves, out / name)
            record(name)

    if result.cells:
        cells_by = {(c.spec.model, c.spec.feature_set): c for c in result.cells}
        models = [m for m in MODELS if any(c.spec.model == m for c in result.cells)]
        sets = [fs for fs in FEATURE_SETS if any(c.spec.feature_set == fs for c in result.cells)]

        rows = []
        for model in models:
            row = [MODEL_LABELS[model]]
            for fs in sets:
                cell = cells_by.get((model, fs))
                row.append(repr(cell.accuracy) if cell else "")
            rows.append(row)
        _write_csv(
            out / "accuracy_grid.csv",
            ["model"] + [_feature_set_label(fs, common_size) for fs in sets],
            rows,
        )
        record("accuracy_grid.csv")

        c_cells = [c for c in result.cells if c.spec.feature_set == "c"]
        if c_cells:
            rows = [
                [
                    MODEL_LABELS[c.spec.model],
                    repr(c.accuracy),
                    repr(c.report.macro.precision),
                    repr(c.report.macro.recall),
                    repr(c.report.macro.f1),
                    repr(c.report.weighted.precision),
                    repr(c.report.weighted.recall),
                    repr(c.report.weighted.f1),
                ]
                for c in c_cells
            ]
            _write_csv(
                out / "metrics.csv",
                [
                    "model",
                    "accuracy",
                    "macro_precision",
                    "macro_recall",
                    "macro_f1",
                    "weighted_precision",
                    "weighted_recall",
                    "weighted_f1",
                ],
                rows,
            )
            record("metrics.csv")

        for cell in result.cells:
            name = f"confusion_{cell.spec.name()}.csv"
            confusion_to_csv(cell.cm, out / name)
            record(name)

        # problematic/confounding focus view, when both classes are present
        sampling = result.config.get("sampling", {})
        focus_names = [
            sampling.get("problematic_class"),
            sampling.get("confounding_class"),
        ]
        focus = [n for n in focus_names if n in result.class_names]
        if len(focus) == 2:
            focus_idx = [result.class_names.index(n) for n in focus]
            for cell in result.cells:
                name = f"submatrix_{cell.spec.name()}.csv"
                confusion_to_csv(submatrix(cell.cm, focus_idx), out / name)
                record(name)
            rows = []
            for model in models:
                for name_, idx in zip(focus, focus_idx):
                    row = [MODEL_LABELS[model], name_]
                    for fs in sets:
                        cell = cells_by.get((model, fs))
                        row.append(repr(class_recall(cell.cm, idx)) if cell else "")
                    rows.append(row)
            _write_csv(
                out / "recall_focus.csv",
                ["model", "class"] + [_feature_set_label(fs, common_size) for fs in sets],
                rows,
            )
            record("recall_focus.csv")

    return written


def execute_grid(cfg: RunConfig) -> tuple[GridResult, list[str]]:
    """run_pipeline + emit_reports; on failure leave a FAILED.json marker."""
    try:
        result = run_pipeline(cfg)
        files = emit_reports(result, cfg.output_dir)
    except PipelineError as exc:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "FAILED.json").write_text(
            json.dumps({"stage": exc.stage, "error": str(exc)}, indent=2) + "\n"
        )
        raise
    return result, files


def prepare_dataset(cfg: RunConfig) -> dict:
    """Ingest, clean, and sample, then cache the dataset under output_dir."""
    pipe = Pipeline(cfg)
    sampled = pipe.sampled()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(sampled, out / "dataset.csv", cfg.label_column)
    save_manifest(sampled, pipe.sampling_plan(), out / "dataset.manifest.json")
    return {
        "rows": sampled.n,
        "features": sampled.m,
        "class_counts": {
            n: int(c) for n, c in zip(sampled.class_names, sampled.class_counts())
        },
        "files": ["dataset.csv", "dataset.manifest.json"],
    }


def compute_rankings(cfg: RunConfig) -> tuple[Pipeline, dict]:
    """Fit both full models and write rankings + model documents."""
    pipe = Pipeline(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    info: dict = {"full_accuracy": {}, "rankings": {}}
    names = pipe.sampled().feature_names
    for kind in ("l1", "l2"):
        family = f"lr-{kind}"
        ranking = pipe.ranking(kind)
        info["full_accuracy"][family] = pipe.full_accuracy(family)
        info["rankings"][kind] = ranking
        ranking_to_csv(ranking, names, out / f"ranking_{kind}.csv")
        save_model(pipe.full_model(family), out / f"model_{family}.json")
        files += [f"ranking_{kind}.csv", f"model_{family}.json"]
    info["files"] = files
    return pipe, info


def compute_curve(cfg: RunConfig, ordering: str, family: str) -> tuple[AccuracyCurve, str]:
    """One accuracy-vs-k curve, written to curve_{ordering}_{family}.csv."""
    if family not in MODELS:
        raise DataError(f"unknown model family {family!r}")
    pipe = Pipeline(cfg)
    curve = pipe.curve(ordering, family)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = f"curve_{ordering}_{family}.csv"
    curve_to_csv([curve], out / name)
    return curve, name
