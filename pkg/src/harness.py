"""
Monte Carlo Harness

Seeded, resumable experiments over independent trials. Each (trial,
slot) pair becomes one RunRecord appended to records.jsonl; summaries
are recomputed from the sorted record set, so worker count, completion
order, resume and merge never change a statistic.

Experiment kinds:
- figure1: soft-edge normalized sigma_min^2 for two ensembles, PDF/CDF CSVs and KS
- fourmoment: E G(n lambda_i, ...) per ensemble with pooled standard errors
- gaps: minimum normalized eigenvalue gap against n^-c thresholds
- deloc: sqrt(n) max singular vector coefficient against factor * log n
- concentration: interval counts against the Marchenko-Pastur mass
- mp_convergence: sup |ESD - MP cdf| across sizes
"""

from __future__ import annotations

import json
import math
import time
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from src.config import ExperimentConfig, load_config, read_saved_hash, save_config, slot_ensemble, slot_labels
from src.constants import (
    CDF_FILENAME,
    CONFIG_FILENAME,
    MAX_MOMENT_ORDER,
    MOMENT_TOL,
    PDF_FILENAME,
    RECORDS_FILENAME,
    SUMMARY_FILENAME,
    TABLE_FILENAME,
)
from src.ensembles import DistributionSpec, resolve_spec, sample_matrix
from src.exceptions import (
    ConfigHashMismatchError,
    ConfigurationError,
    HardEdgeError,
    IndexConstraintError,
    InvalidInputError,
    NumericalError,
)
from src.logging_config import get_logger, log_execution_time, set_experiment_context, trial_context
from src.mp_law import MPModel, quantile
from src.records import STATUS_FAILED, RecordStore, RunRecord, dumps, merge_records, sort_records
from src.spectra import covariance_spectrum, decompose
from src.stats import (
    aligned_ecdfs,
    aligned_histograms,
    concentration_report,
    delocalization_stat,
    gap_stats,
    ks_distance,
    mp_sup_distance,
    tw_normalize,
    write_csv,
)

logger = get_logger(__name__)

_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass
class RunArtifact:
    """Output directory of an experiment and what was written there."""

    out_dir: Path
    summary: dict[str, Any]
    new_records: int = 0
    files: dict[str, Path] = field(default_factory=dict)

    @property
    def records_path(self) -> Path:
        return self.out_dir / RECORDS_FILENAME

    @property
    def summary_path(self) -> Path:
        return self.out_dir / SUMMARY_FILENAME


# ============================================================================
# Per-trial computation
# ============================================================================

@lru_cache(maxsize=64)
def _spec(name: str) -> DistributionSpec:
    return resolve_spec(name)


@lru_cache(maxsize=16)
def _bump_parameters(p: int, n: int, indices: tuple[int, ...], g_scale: float | None) -> tuple[np.ndarray, np.ndarray]:
    """
    Centers n * quantile((i - 1/2) / p) and widths of the Gaussian bumps.

    The default width is n times the MP quantile spacing around index i.
    """
    model = MPModel.from_shape(p, n)
    centers = np.array([n * quantile(model, (i - 0.5) / p) for i in indices])
    if g_scale is not None:
        widths = np.full(len(indices), float(g_scale))
    else:
        widths = np.array([n * (quantile(model, i / p) - quantile(model, (i - 1) / p)) for i in indices])
    return centers, widths


def bump_function(config: ExperimentConfig, scaled_lambdas: np.ndarray) -> float:
    """G(x_1, ..., x_k) = prod_j exp(-(x_j - c_j)^2 / (2 s_j^2))."""
    centers, widths = _bump_parameters(config.p, config.n, tuple(config.indices), config.g_scale)
    return float(np.exp(-np.sum((scaled_lambdas - centers) ** 2 / (2.0 * widths**2))))


def _edge_statistics(config: ExperimentConfig, lambdas: np.ndarray) -> dict[str, Any]:
    p, n = config.p, config.n
    stats: dict[str, Any] = {
        "sigma_min_sq": float(n * lambdas[0]),
        "lambda_max": float(lambdas[-1]),
    }
    if p < n:
        stats["edge"] = tw_normalize(n * lambdas[0], p, n, config.tw_convention)
    if p >= 2:
        if config.gap_scale == "sigma":
            gaps = gap_stats(np.sqrt(n * lambdas), n, scale="sigma")
        else:
            gaps = gap_stats(lambdas, n)
        stats["min_gap"] = gaps.min_normalized
        stats["gap_argmin"] = gaps.argmin
        stats["gap_at_edge"] = gaps.at_edge
    return stats


def _convergence_statistics(
    config: ExperimentConfig, spec: DistributionSpec, trial: int, stream: int
) -> dict[str, Any]:
    y = config.p / config.n
    distances = {}
    for k, size in enumerate(config.sizes):
        p = min(size, max(1, round(y * size)))
        # Distinct trial indices per size keep the sizes' streams disjoint.
        M = sample_matrix(spec, p, size, config.master_seed, trial * len(config.sizes) + k, stream=stream)
        distances[str(size)] = mp_sup_distance(covariance_spectrum(M), MPModel.from_shape(p, size))
    return {"sup_distance": distances}


def trial_statistics(config: ExperimentConfig, slot: str, trial: int) -> tuple[dict[str, Any], list[float] | None]:
    """
    Statistics of one trial of one slot and, for kinds with a single matrix,
    its eigenvalues.

    Each slot samples from its own stream, so two slots never share entries
    except under fourmoment, where matched trials are the point.
    """
    spec = _spec(slot_ensemble(slot))
    stream = config.stream_index(slot)
    if config.kind == "mp_convergence":
        return _convergence_statistics(config, spec, trial, stream), None

    M = sample_matrix(spec, config.p, config.n, config.master_seed, trial, stream=stream)
    lambdas = covariance_spectrum(M)
    stats = _edge_statistics(config, lambdas)

    if config.kind == "deloc":
        stats["deloc"] = delocalization_stat(decompose(M))
    elif config.kind == "concentration":
        reports = concentration_report(lambdas, MPModel.from_shape(config.p, config.n), config.interval_len)
        stats["interval_counts"] = [r.count for r in reports]
        stats["max_deviation"] = max(r.deviation for r in reports)
    elif config.kind == "fourmoment":
        scaled = config.n * lambdas[np.asarray(config.indices) - 1]
        stats["scaled_lambdas"] = scaled.tolist()
        stats["g"] = bump_function(config, scaled)
    return stats, lambdas.tolist()


def execute_trial(config: ExperimentConfig, slot: str, trial: int) -> RunRecord:
    """Run one trial; numerical failures become a failed record instead of an exception."""
    start = time.perf_counter()
    record = RunRecord(
        trial_index=trial,
        ensemble=slot,
        config_hash=config.config_hash(),
        seed=config.master_seed,
    )
    with trial_context(slot, trial, experiment_id=record.config_hash):
        try:
            stats, lambdas = trial_statistics(config, slot, trial)
            record.stats = stats
            if config.full:
                record.lambdas = lambdas
        except (NumericalError, np.linalg.LinAlgError) as e:
            record.status = STATUS_FAILED
            record.error = str(e)
            logger.warning("Trial failed", extra_fields={"error": str(e)})
    record.wall_time = time.perf_counter() - start
    return record


def _execute(config: ExperimentConfig, tasks: Sequence[tuple[int, str]], progress: bool) -> Iterator[RunRecord]:
    if config.workers == 1 or len(tasks) <= 1:
        for trial, name in tqdm(tasks, desc=config.kind, disable=not progress):
            yield execute_trial(config, name, trial)
        return
    parallel = Parallel(n_jobs=config.workers, return_as="generator_unordered")
    results = parallel(delayed(execute_trial)(config, name, trial) for trial, name in tasks)
    yield from tqdm(results, total=len(tasks), desc=config.kind, disable=not progress)


# ============================================================================
# Summaries
# ============================================================================

def _quantiles(values: np.ndarray) -> dict[str, float]:
    return {f"q{int(q * 100):02d}": float(np.quantile(values, q)) for q in _QUANTILES}


def _by_ensemble(config: ExperimentConfig, records: Sequence[RunRecord]) -> dict[str, list[RunRecord]]:
    grouped: dict[str, list[RunRecord]] = {slot: [] for slot in config.slots}
    for record in records:
        if record.ok and record.ensemble in grouped:
            grouped[record.ensemble].append(record)
    return grouped


def _column(records: Sequence[RunRecord], key: str) -> np.ndarray:
    return np.array([r.stats[key] for r in records if key in r.stats], dtype=np.float64)


def match_order(a: DistributionSpec, b: DistributionSpec) -> int:
    """Largest k <= 4 such that all mixed moments of order <= k agree."""
    order = 0
    for k in range(1, MAX_MOMENT_ORDER + 1):
        pairs = [(m, k - m) for m in range(k + 1)]
        if any(abs(a.moment(m, l) - b.moment(m, l)) > MOMENT_TOL for m, l in pairs):
            break
        order = k
    return order


def _figure1_section(config: ExperimentConfig, grouped: dict[str, list[RunRecord]]) -> dict[str, Any]:
    ensembles = {}
    for name, records in grouped.items():
        edge = _column(records, "edge")
        sigma = _column(records, "sigma_min_sq")
        ensembles[name] = {
            "count": int(edge.size),
            "edge_mean": float(edge.mean()) if edge.size else None,
            "edge_std": float(edge.std(ddof=1)) if edge.size > 1 else None,
            "sigma_min_sq_mean": float(sigma.mean()) if sigma.size else None,
        }
    samples = [_column(grouped[slot], "edge") for slot in config.slots]
    ks = ks_distance(samples[0], samples[1]) if all(s.size for s in samples) else None
    return {
        "ensembles": ensembles,
        "ks_distance": ks,
        "bins": config.bins,
        "binning": "fixed-width histogram over the pooled range, density = count / (trials * width)",
        "tw_convention": config.tw_convention,
    }


def fourmoment_rows(config: ExperimentConfig, grouped: dict[str, list[RunRecord]]) -> list[dict[str, Any]]:
    """One row per ensemble slot; differences are taken against the first slot."""
    estimates = {}
    for name, records in grouped.items():
        g = _column(records, "g")
        se = float(g.std(ddof=1) / math.sqrt(g.size)) if g.size > 1 else 0.0
        estimates[name] = (float(g.mean()) if g.size else float("nan"), se, int(g.size))

    reference = config.ensembles[0]
    ref_mean, ref_se, _ = estimates[reference]
    rows = []
    for slot, (name, label) in enumerate(zip(config.ensembles, slot_labels(config.ensembles))):
        mean, se, count = estimates[name]
        row: dict[str, Any] = {
            "slot": label,
            "ensemble": name,
            "trials": count,
            "mean_g": mean,
            "se_g": se,
            "delta": None,
            "pooled_se": None,
            "z": None,
            "match_order": None,
            "passed": None,
        }
        if slot > 0:
            delta = mean - ref_mean
            pooled = math.sqrt(ref_se**2 + se**2)
            order = match_order(_spec(reference), _spec(name))
            row.update(
                delta=delta,
                pooled_se=pooled,
                z=delta / pooled if pooled > 0 else (0.0 if delta == 0 else None),
                match_order=order,
            )
            # Only order-4 matches carry a pass/fail verdict.
            if order >= MAX_MOMENT_ORDER:
                row["passed"] = bool(abs(delta) <= config.fourmoment_pass_sigma * pooled)
        rows.append(row)
    return rows


def _gaps_section(config: ExperimentConfig, grouped: dict[str, list[RunRecord]]) -> dict[str, Any]:
    thresholds = {f"{c:g}": config.n ** (-c) for c in config.gap_exponents}
    section = {"thresholds": thresholds, "scale": config.gap_scale, "ensembles": {}}
    for name, records in grouped.items():
        mins = _column(records, "min_gap")
        if not mins.size:
            section["ensembles"][name] = {"count": 0}
            continue
        at_edge = np.array([r.stats["gap_at_edge"] for r in records], dtype=bool)
        section["ensembles"][name] = {
            "count": int(mins.size),
            "min_gap_quantiles": _quantiles(mins),
            "smallest": float(mins.min()),
            "edge_fraction": float(at_edge.mean()),
            "zero_gap_trials": int(np.sum(mins == 0.0)),
            "fraction_below": {key: float(np.mean(mins < thr)) for key, thr in thresholds.items()},
        }
    return section


def _deloc_section(config: ExperimentConfig, grouped: dict[str, list[RunRecord]]) -> dict[str, Any]:
    threshold = config.deloc_factor * math.log(config.n)
    section = {"threshold": threshold, "ensembles": {}}
    for name, records in grouped.items():
        values = _column(records, "deloc")
        section["ensembles"][name] = (
            {
                "count": int(values.size),
                "max": float(values.max()),
                "quantiles": _quantiles(values),
                "pass_fraction": float(np.mean(values <= threshold)),
            }
            if values.size
            else {"count": 0}
        )
    return section


def _concentration_section(config: ExperimentConfig, grouped: dict[str, list[RunRecord]]) -> dict[str, Any]:
    section = {
        "threshold": config.concentration_threshold,
        "interval_len": config.interval_len,
        "ensembles": {},
    }
    for name, records in grouped.items():
        worst = _column(records, "max_deviation")
        if not worst.size:
            section["ensembles"][name] = {"count": 0}
            continue
        counts = np.array([r.stats["interval_counts"] for r in records], dtype=np.float64)
        section["ensembles"][name] = {
            "count": int(worst.size),
            "max_deviation_quantiles": _quantiles(worst),
            "pass_fraction": float(np.mean(worst <= config.concentration_threshold)),
            "mean_interval_counts": counts.mean(axis=0).tolist(),
        }
    return section


def _convergence_section(config: ExperimentConfig, grouped: dict[str, list[RunRecord]]) -> dict[str, Any]:
    section = {"sizes": list(config.sizes), "ensembles": {}}
    for name, records in grouped.items():
        medians = {}
        for size in config.sizes:
            values = np.array([r.stats["sup_distance"][str(size)] for r in records], dtype=np.float64)
            medians[str(size)] = float(np.median(values)) if values.size else None
        series = [medians[str(size)] for size in config.sizes]
        monotone = None not in series and all(a > b for a, b in zip(series, series[1:]))
        section["ensembles"][name] = {"count": len(records), "median_sup_distance": medians, "monotone": monotone}
    return section


_SECTIONS = {
    "figure1": _figure1_section,
    "fourmoment": lambda config, grouped: {"rows": fourmoment_rows(config, grouped)},
    "gaps": _gaps_section,
    "deloc": _deloc_section,
    "concentration": _concentration_section,
    "mp_convergence": _convergence_section,
}


def summarize(config: ExperimentConfig, records: Iterable[RunRecord]) -> dict[str, Any]:
    """
    Summary of a record set; a pure function of the config and the records.

    Failed trials are counted and excluded. The experiment is marked invalid
    when the failure fraction exceeds `max_failure_rate`.
    """
    records = sort_records(records)
    failed = sum(1 for r in records if not r.ok)
    failure_rate = failed / len(records) if records else 0.0
    grouped = _by_ensemble(config, records)
    return {
        "config_hash": config.config_hash(),
        "kind": config.kind,
        "p": config.p,
        "n": config.n,
        "trials": config.trials,
        "master_seed": config.master_seed,
        "records": len(records),
        "failed": failed,
        "failure_rate": failure_rate,
        "valid": failure_rate <= config.max_failure_rate,
        "complete": len(records) == config.trials * len(config.slots),
        config.kind: _SECTIONS[config.kind](config, grouped),
    }


def write_summary(path: Path, summary: dict[str, Any]) -> Path:
    path.write_text(dumps(summary, indent=2) + "\n", encoding="utf-8")
    return path


def _emit_artifacts(config: ExperimentConfig, out_dir: Path, records: Sequence[RunRecord]) -> dict[str, Path]:
    """Kind-specific CSV outputs derived from the record set."""
    grouped = _by_ensemble(config, records)
    files: dict[str, Path] = {}
    if config.kind == "figure1":
        samples = {slot: _column(grouped[slot], "edge") for slot in config.slots}
        if all(values.size for values in samples.values()):
            files["pdf"] = write_csv(aligned_histograms(samples, config.bins), out_dir / PDF_FILENAME)
            files["cdf"] = write_csv(aligned_ecdfs(samples), out_dir / CDF_FILENAME)
        else:
            logger.warning("Skipping figure1 CSVs: an ensemble has no successful trials")
    elif config.kind == "fourmoment":
        files["table"] = write_csv(pd.DataFrame(fourmoment_rows(config, grouped)), out_dir / TABLE_FILENAME)
    return files


# ============================================================================
# Experiments
# ============================================================================

@log_execution_time()
def run(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> RunArtifact:
    """
    Execute the config's trials into `out_dir`, skipping completed ones.

    Writes config.json, appends to records.jsonl and rewrites summary.json
    plus any kind-specific CSVs.

    Raises:
        ConfigHashMismatchError: out_dir holds records of another config
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config.config_hash()
    set_experiment_context(digest)

    saved = read_saved_hash(out / CONFIG_FILENAME)
    if saved is not None and saved != digest:
        raise ConfigHashMismatchError(expected=digest, found=saved)
    save_config(config, out / CONFIG_FILENAME)

    store = RecordStore(out / RECORDS_FILENAME)
    store.repair()
    done = store.completed_keys(digest)
    tasks = [
        (trial, name)
        for trial in config.trial_indices
        for name in config.slots
        if (trial, name) not in done
    ]
    logger.info(
        "Running experiment",
        extra_fields={"kind": config.kind, "pending": len(tasks), "completed": len(done), "workers": config.workers},
    )

    new_records = 0
    for record in _execute(config, tasks, progress):
        store.append(record)
        new_records += 1

    records = sort_records(store.read())
    summary = summarize(config, records)
    write_summary(out / SUMMARY_FILENAME, summary)
    files = _emit_artifacts(config, out, records)
    return RunArtifact(out_dir=out, summary=summary, new_records=new_records, files=files)


def _require_kind(config: ExperimentConfig, kind: str) -> None:
    if config.kind != kind:
        raise ConfigurationError(f"Expected a {kind} config", details={"kind": config.kind})


def figure1(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> RunArtifact:
    """Normalized sigma_min^2 samples for two ensembles: pdf.csv, cdf.csv and KS in summary.json."""
    _require_kind(config, "figure1")
    if config.p == config.n:
        raise HardEdgeError(details={"p": config.p, "n": config.n})
    return run(config, out_dir, progress)


def four_moment_experiment(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> pd.DataFrame:
    """
    Compare E G(n lambda_{i_1}, ..., n lambda_{i_k}) across ensembles.

    All ensembles use the same master seed and trial indices. Returns the
    table also written to table.csv.

    Raises:
        IndexConstraintError: indices not strictly increasing within 1..p
    """
    _require_kind(config, "fourmoment")
    indices = config.indices
    if any(i < 1 or i > config.p for i in indices) or any(a >= b for a, b in zip(indices, indices[1:])):
        raise IndexConstraintError(
            "Indices must satisfy 1 <= i_1 < ... < i_k <= p", details={"indices": indices, "p": config.p}
        )
    artifact = run(config, out_dir, progress)
    return pd.read_csv(artifact.files["table"])


def gap_survey(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> dict[str, Any]:
    _require_kind(config, "gaps")
    return run(config, out_dir, progress).summary["gaps"]


def deloc_survey(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> dict[str, Any]:
    _require_kind(config, "deloc")
    return run(config, out_dir, progress).summary["deloc"]


def concentration_survey(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> dict[str, Any]:
    _require_kind(config, "concentration")
    return run(config, out_dir, progress).summary["concentration"]


def convergence_survey(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> dict[str, Any]:
    _require_kind(config, "mp_convergence")
    return run(config, out_dir, progress).summary["mp_convergence"]


def run_experiment(config: ExperimentConfig, out_dir: str | Path, progress: bool = False) -> RunArtifact:
    """Dispatch on the config kind with the kind's own preconditions."""
    if config.kind == "figure1":
        return figure1(config, out_dir, progress)
    if config.kind == "fourmoment":
        four_moment_experiment(config, out_dir, progress)
        return load_artifact(out_dir)
    return run(config, out_dir, progress)


def load_artifact(out_dir: str | Path) -> RunArtifact:
    """Re-read an existing output directory."""
    out = Path(out_dir)
    summary = json.loads((out / SUMMARY_FILENAME).read_text(encoding="utf-8"))
    files = {
        key: out / filename
        for key, filename in (("pdf", PDF_FILENAME), ("cdf", CDF_FILENAME), ("table", TABLE_FILENAME))
        if (out / filename).exists()
    }
    return RunArtifact(out_dir=out, summary=summary, files=files)


@log_execution_time()
def merge(paths: Sequence[str | Path], out_dir: str | Path) -> RunArtifact:
    """
    Deduplicated union of experiment directories sharing one config hash.

    Raises:
        ConfigHashMismatchError: inputs come from different configs
        DataIntegrityError: one key carries two different record bodies
    """
    if not paths:
        raise InvalidInputError("merge needs at least one input directory")
    configs = [load_config(Path(path) / CONFIG_FILENAME) for path in paths]
    digest = configs[0].config_hash()
    for other in configs[1:]:
        if other.config_hash() != digest:
            raise ConfigHashMismatchError(expected=digest, found=other.config_hash())
    config = configs[0].model_copy(update={"trial_range": None})

    records = merge_records((RecordStore(Path(path) / RECORDS_FILENAME).read() for path in paths), digest)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / CONFIG_FILENAME)
    RecordStore(out / RECORDS_FILENAME).write_all(records)
    summary = summarize(config, records)
    write_summary(out / SUMMARY_FILENAME, summary)
    files = _emit_artifacts(config, out, records)
    logger.info("Merged experiment directories", extra_fields={"inputs": len(paths), "records": len(records)})
    return RunArtifact(out_dir=out, summary=summary, files=files)
