"""Ablation grid, baseline table and hop/mu sweeps over a directory of checkpoints.

Checkpoint names inside ``checkpoint_dir``::

    joint, no-user, no-neighbor, no-user-neighbor, no-rating, no-generation   (ablations)
    hops-0 .. hops-5                                                           (hop sweep)
    mu-<value>                                                                 (fixed-mu sweep)

each with a ``.ckpt`` suffix. A missing checkpoint turns its row into an
``absent`` row and the run carries on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..model import OpinionModel
from ..training import TrainConfig, train
from .plotting import plot_sweep
from .report import (
    INSTANCE_COLUMNS,
    EvalReport,
    absent,
    baseline_reports,
    evaluate_model,
    format_table,
    review_vector_fn,
    write_csv,
)

log = logging.getLogger(__name__)

ABLATIONS = {
    "Joint": ("joint", {}),
    "-user": ("no-user", {"use_user": False}),
    "-neighbor": ("no-neighbor", {"use_neighbor": False}),
    "-user-neighbor": ("no-user-neighbor", {"use_user": False, "use_neighbor": False}),
    "-rating": ("no-rating", {"use_rating": False}),
    "-generation": ("no-generation", {"use_generation": False}),
}
SUMMARIZER = "-user-neighbor"  # stands in for an attentional summariser in the baseline table
HOPS = tuple(range(6))
MU_VALUES = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)

ABLATION_COLUMNS = ("system", "dev_mse", "dev_rouge1_r", "test_mse", "test_rouge1_p", "test_rouge1_r",
                    "test_rouge1_f", "status")
BASELINE_COLUMNS = ("system", "split", "n", "mse", "rouge1_p", "rouge1_r", "rouge1_f", "fallbacks", "status")
HOP_COLUMNS = ("hops", "dev_mse", "test_mse", "test_rouge1_r", "status")
MU_COLUMNS = ("mu", "dev_mse", "test_mse", "test_rouge1_r", "status")


def hop_name(h: int) -> str:
    return f"hops-{h}"


def mu_name(mu: float) -> str:
    return f"mu-{mu:g}"


@dataclass
class GridConfig:
    checkpoint_dir: Path
    report_dir: Path | None = None
    joint_checkpoint: Path | None = None  # overrides <checkpoint_dir>/joint.ckpt
    splits: tuple[str, ...] = ("dev", "test")
    hops: tuple[int, ...] = HOPS
    mu_values: tuple[float, ...] = MU_VALUES
    knn_k: int = 5
    mf_topics: int = 16
    mf_sweeps: int = 200
    seed: int = 0


@dataclass
class GridResult:
    ablations: list[dict]
    baselines: list[EvalReport]
    hop_sweep: list[dict]
    mu_sweep: list[dict]
    reports: dict[tuple[str, str], EvalReport] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    def table(self) -> str:
        return (format_table(self.ablations, ABLATION_COLUMNS, "Ablations")
                + "\n" + format_table([b.summary() for b in self.baselines], BASELINE_COLUMNS, "Baselines")
                + "\n" + format_table(self.hop_sweep, HOP_COLUMNS, "Hop sweep")
                + "\n" + format_table(self.mu_sweep, MU_COLUMNS, "Mu sweep"))


def _load(path: Path) -> OpinionModel | None:
    if not path.exists():
        log.info("checkpoint %s missing; row marked absent", path)
        return None
    return OpinionModel.load(path)


def _evaluate(model, data, system: str, splits) -> dict[str, EvalReport]:
    out = {}
    for s in splits:
        out[s] = absent(system, s) if model is None else evaluate_model(model, data.instances[s], system, s)
    return out


def _row(reports: dict[str, EvalReport], **lead) -> dict:
    row = dict(lead)
    status = "ok"
    for s, rep in reports.items():
        row[f"{s}_mse"] = rep.mse
        p, r, f = rep.rouge if rep.rouge else (None, None, None)
        row[f"{s}_rouge1_p"], row[f"{s}_rouge1_r"], row[f"{s}_rouge1_f"] = p, r, f
        if rep.status != "ok":
            status = rep.status
    row["status"] = status
    return row


def run_grid(data, config: GridConfig) -> GridResult:
    """Score every configuration found under ``config.checkpoint_dir``.

    ``data`` needs ``instances`` (split name to instance list), ``vocab``,
    ``context_reviews()`` and ``embeddings()``; :class:`opinrec.pipeline.DataDir`
    provides all four.
    """
    ck = Path(config.checkpoint_dir)
    splits = config.splits
    reports: dict[tuple[str, str], EvalReport] = {}
    ablations = []
    models = {}
    for system, (name, _) in ABLATIONS.items():
        path = ck / f"{name}.ckpt"
        if system == "Joint" and config.joint_checkpoint is not None:
            path = Path(config.joint_checkpoint)
        models[system] = m = _load(path)
        reps = _evaluate(m, data, system, splits)
        reports.update({(system, s): r for s, r in reps.items()})
        ablations.append(_row(reps, system=system))

    # baseline table on the last requested split (test by default)
    split = splits[-1]
    insts = data.instances[split]
    vectors = data.embeddings()
    if vectors is None and models["Joint"] is not None:
        vectors = models["Joint"].embedding.data
    if vectors is None:
        log.warning("no embeddings available; RS-Item marked absent")
        vectors = np.zeros((len(data.vocab), 1))
        item_absent = True
    else:
        item_absent = False
    baselines = baseline_reports(data.context_reviews(), insts, split, review_vector_fn(data.vocab, vectors),
                                 config.knn_k, config.mf_topics, config.mf_sweeps, config.seed)
    if item_absent:
        baselines = [absent(b.system, split, "absent: no embeddings") if b.system == "RS-Item" else b
                     for b in baselines]
    baselines.append(reports[(SUMMARIZER, split)])

    hop_rows = []
    for h in config.hops:
        reps = _evaluate(_load(ck / f"{hop_name(h)}.ckpt"), data, f"H={h}", splits)
        hop_rows.append(_row(reps, hops=h))
    mu_rows = []
    for mu in config.mu_values:
        reps = _evaluate(_load(ck / f"{mu_name(mu)}.ckpt"), data, f"mu={mu:g}", splits)
        mu_rows.append(_row(reps, mu=mu))

    result = GridResult(ablations, baselines, hop_rows, mu_rows, reports)
    missing = sum(r["status"] != "ok" for r in ablations + hop_rows + mu_rows)
    if missing:
        log.warning("%d grid rows have no checkpoint under %s and are marked absent", missing, ck)
    if config.report_dir is not None:
        write_report(result, Path(config.report_dir), splits)
    return result


def write_report(result: GridResult, out: Path, splits: Sequence[str]) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "ablations.csv", out / "baselines.csv", out / "hop_sweep.csv", out / "mu_sweep.csv",
             out / "predictions.csv", out / "report.txt"]
    write_csv(files[0], result.ablations, ABLATION_COLUMNS)
    write_csv(files[1], [b.summary() for b in result.baselines], BASELINE_COLUMNS)
    write_csv(files[2], result.hop_sweep, HOP_COLUMNS)
    write_csv(files[3], result.mu_sweep, MU_COLUMNS)
    records = [r for rep in list(result.reports.values()) + result.baselines[:-1] for r in rep.records]
    write_csv(files[4], records, INSTANCE_COLUMNS)
    files[5].write_text(result.table(), encoding="utf-8")

    series = {f"{s} MSE": [row.get(f"{s}_mse") for row in result.hop_sweep] for s in splits}
    files.append(plot_sweep(out / "hop_sweep.png", [r["hops"] for r in result.hop_sweep], series,
                            "memory hops H", "Rating MSE by hop count"))
    series = {f"{s} MSE": [row.get(f"{s}_mse") for row in result.mu_sweep] for s in splits}
    files.append(plot_sweep(out / "mu_sweep.png", [r["mu"] for r in result.mu_sweep], series,
                            "shift scale mu (fixed)", "Rating MSE by mu"))
    result.files = files
    return files


# ------------------------------------------------------------------ training the grid


def grid_configs(base: TrainConfig, hops: Sequence[int] = HOPS, mu_values: Sequence[float] = MU_VALUES,
                 parts: Sequence[str] = ("ablations", "hops", "mu")) -> dict[str, TrainConfig]:
    """Checkpoint name to training configuration for every run the grid expects."""
    out = {}
    if "ablations" in parts:
        for name, overrides in ABLATIONS.values():
            out[name] = replace(base, model=replace(base.model, **overrides))
    if "hops" in parts:
        for h in hops:
            out[hop_name(h)] = replace(base, model=replace(base.model, hops=h))
    if "mu" in parts:
        for mu in mu_values:
            out[mu_name(mu)] = replace(base, model=replace(base.model, mu=mu, train_mu=False))
    return out


def train_grid(data, base: TrainConfig, checkpoint_dir, parts: Sequence[str] = ("ablations", "hops", "mu"),
               hops: Sequence[int] = HOPS, mu_values: Sequence[float] = MU_VALUES,
               skip_existing: bool = True) -> list[Path]:
    ck = Path(checkpoint_dir)
    ck.mkdir(parents=True, exist_ok=True)
    written = []
    for name, cfg in grid_configs(base, hops, mu_values, parts).items():
        path = ck / f"{name}.ckpt"
        if skip_existing and path.exists():
            log.info("keeping existing %s", path)
            continue
        vectors = data.embeddings(cfg.model.emb_dim, cfg.model.seed)
        model = OpinionModel(data.vocab, cfg.model, vectors)
        log.info("training %s", name)
        train(model, data.instances["train"], data.instances["dev"], cfg,
              metrics_path=ck / f"{name}.metrics.csv", checkpoint_path=path)
        written.append(path)
    return written
