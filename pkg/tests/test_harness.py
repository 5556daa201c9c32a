"""
Integration Tests for the Monte Carlo Harness

Exercises seeded execution, resume, parallel determinism, merging and the
per-kind summaries on small configurations.
"""

import json

import numpy as np
import pandas as pd
import pytest


def _summary_bytes(out_dir):
    return (out_dir / "summary.json").read_bytes()


def _bodies(out_dir):
    from src.records import RecordStore, sort_records

    return [r.body() for r in sort_records(RecordStore(out_dir / "records.jsonl").read())]


@pytest.mark.integration
class TestRun:
    """Tests for run and figure1"""

    def test_figure1_outputs(self, small_config, out_dir):
        from src.harness import figure1

        artifact = figure1(small_config, out_dir)
        summary = artifact.summary

        assert artifact.new_records == 16
        assert summary["records"] == 16
        assert summary["complete"] is True
        assert summary["valid"] is True
        assert 0.0 <= summary["figure1"]["ks_distance"] <= 1.0
        assert set(artifact.files) == {"pdf", "cdf"}
        assert json.loads(artifact.summary_path.read_text()) == summary

    def test_pdf_csv_integrates_to_one(self, small_config, out_dir):
        from src.harness import figure1

        figure1(small_config, out_dir)
        pdf = pd.read_csv(out_dir / "pdf.csv")
        width = pdf["x"].iloc[1] - pdf["x"].iloc[0]

        assert list(pdf.columns) == ["x", "pdf_gaussian_real", "pdf_rademacher"]
        for column in ("pdf_gaussian_real", "pdf_rademacher"):
            assert pdf[column].sum() * width == pytest.approx(1.0, rel=1e-9)

    def test_cdf_csv_ends_at_one(self, small_config, out_dir):
        from src.harness import figure1

        figure1(small_config, out_dir)
        cdf = pd.read_csv(out_dir / "cdf.csv")

        assert cdf.iloc[-1]["cdf_gaussian_real"] == 1.0
        assert cdf.iloc[-1]["cdf_rademacher"] == 1.0
        assert np.all(np.diff(cdf["x"]) > 0)

    def test_same_ensemble_twice_draws_independent_slots(self, small_config, out_dir):
        """A repeated ensemble gets its own stream, records and column"""
        from src.harness import figure1
        from src.records import RecordStore

        config = small_config.with_overrides(ensembles=["gaussian_real", "gaussian_real"])
        artifact = figure1(config, out_dir)
        pdf = pd.read_csv(out_dir / "pdf.csv")
        records = RecordStore(out_dir / "records.jsonl").read()
        edges = {
            slot: sorted(r.stats["edge"] for r in records if r.ensemble == slot)
            for slot in ("gaussian_real", "gaussian_real#2")
        }

        assert artifact.summary["records"] == 16
        assert artifact.summary["complete"] is True
        assert artifact.summary["figure1"]["ks_distance"] > 0.0
        assert set(artifact.summary["figure1"]["ensembles"]) == {"gaussian_real", "gaussian_real#2"}
        assert edges["gaussian_real"] != edges["gaussian_real#2"]
        assert list(pdf.columns) == ["x", "pdf_gaussian_real", "pdf_gaussian_real#2"]

    def test_slots_do_not_share_entries(self, small_config):
        """Rademacher entries are not the signs of the Gaussian slot's entries"""
        from src.ensembles import resolve_spec, sample_matrix

        seed = small_config.master_seed

        def draw(name):
            stream = small_config.stream_index(name)
            return sample_matrix(resolve_spec(name), 40, 50, seed, 0, stream=stream)

        gaussian, bernoulli = draw("gaussian_real"), draw("rademacher")

        agreement = np.mean(np.sign(gaussian.entries) == bernoulli.entries)

        assert 0.4 < agreement < 0.6

    @pytest.mark.slow
    def test_null_ks_calibration(self):
        """Same ensemble in both slots: KS stays under the 5% critical value at 1000 trials"""
        from src.config import ExperimentConfig
        from src.harness import execute_trial, summarize

        critical = 1.36 * np.sqrt(2 / 1000)
        repetitions = 40
        distances = []
        for seed in range(repetitions):
            config = ExperimentConfig(
                kind="figure1", ensembles=["gaussian_real", "gaussian_real"], p=4, n=8, trials=1000, master_seed=seed
            )
            records = [execute_trial(config, slot, trial) for trial in config.trial_indices for slot in config.slots]
            distances.append(summarize(config, records)["figure1"]["ks_distance"])

        distances = np.array(distances)

        assert critical == pytest.approx(0.0608, abs=1e-4)
        assert np.all(distances > 0.0)
        assert np.sum(distances <= critical) >= 0.85 * repetitions

    def test_determinism_across_runs(self, small_config, tmp_path):
        """Two fresh runs give byte-identical summaries and record bodies"""
        from src.harness import run

        run(small_config, tmp_path / "a")
        run(small_config, tmp_path / "b")

        assert _summary_bytes(tmp_path / "a") == _summary_bytes(tmp_path / "b")
        assert _bodies(tmp_path / "a") == _bodies(tmp_path / "b")

    def test_resume_completes_remaining_trials(self, small_config, tmp_path):
        """A partial range followed by the full config equals a fresh full run"""
        from src.harness import run

        partial = small_config.with_overrides(trial_range=(0, 3))
        first = run(partial, tmp_path / "resumed")
        second = run(small_config, tmp_path / "resumed")
        run(small_config, tmp_path / "fresh")

        assert first.summary["complete"] is False
        assert first.new_records == 6
        assert second.new_records == 10
        assert _summary_bytes(tmp_path / "resumed") == _summary_bytes(tmp_path / "fresh")

    def test_rerun_is_a_no_op(self, small_config, out_dir):
        from src.harness import run

        run(small_config, out_dir)
        again = run(small_config, out_dir)

        assert again.new_records == 0
        assert again.summary["records"] == 16

    def test_resume_after_truncated_write(self, small_config, tmp_path):
        """A killed run's partial last line is dropped and its trial redone"""
        from src.harness import run

        run(small_config, tmp_path / "fresh")
        damaged = tmp_path / "damaged"
        run(small_config, damaged)
        records = damaged / "records.jsonl"
        lines = records.read_text().splitlines(keepends=True)
        records.write_text("".join(lines[:10]) + lines[10][:25])

        resumed = run(small_config, damaged)

        assert resumed.new_records == 6
        assert _summary_bytes(damaged) == _summary_bytes(tmp_path / "fresh")

    @pytest.mark.slow
    def test_worker_count_does_not_change_results(self, small_config, tmp_path):
        from src.harness import run

        run(small_config, tmp_path / "serial")
        run(small_config.with_overrides(workers=2), tmp_path / "parallel")

        assert _summary_bytes(tmp_path / "serial") == _summary_bytes(tmp_path / "parallel")
        assert _bodies(tmp_path / "serial") == _bodies(tmp_path / "parallel")

    def test_foreign_directory_is_refused(self, small_config, out_dir):
        from src.exceptions import ConfigHashMismatchError
        from src.harness import run

        run(small_config, out_dir)

        with pytest.raises(ConfigHashMismatchError):
            run(small_config.with_overrides(master_seed=12), out_dir)

    def test_full_records_keep_eigenvalues(self, small_config, out_dir):
        from src.harness import run
        from src.records import RecordStore

        run(small_config.with_overrides(full=True, trials=2), out_dir)
        records = RecordStore(out_dir / "records.jsonl").read()

        assert all(len(r.lambdas) == 6 for r in records)
        assert all(r.lambdas == sorted(r.lambdas) for r in records)

    def test_hard_edge_refused(self, out_dir):
        from src.config import ExperimentConfig
        from src.exceptions import HardEdgeError
        from src.harness import figure1

        config = ExperimentConfig(p=5, n=5, trials=2)

        with pytest.raises(HardEdgeError):
            figure1(config, out_dir)

    def test_wrong_kind(self, small_config, out_dir):
        from src.exceptions import ConfigurationError
        from src.harness import gap_survey

        with pytest.raises(ConfigurationError):
            gap_survey(small_config, out_dir)

    def test_load_artifact(self, small_config, out_dir):
        from src.harness import figure1, load_artifact

        artifact = figure1(small_config, out_dir)
        loaded = load_artifact(out_dir)

        assert loaded.summary == artifact.summary
        assert set(loaded.files) == {"pdf", "cdf"}


@pytest.mark.integration
class TestFailures:
    """Tests for failed-trial bookkeeping"""

    def test_numerical_failures_are_recorded(self, small_config, out_dir, mocker):
        from src.exceptions import NonConvergenceError
        from src.harness import run

        mocker.patch("src.harness.trial_statistics", side_effect=NonConvergenceError("LAPACK SVD did not converge"))

        artifact = run(small_config.with_overrides(trials=2), out_dir)
        summary = artifact.summary

        assert summary["failed"] == 4
        assert summary["failure_rate"] == 1.0
        assert summary["valid"] is False
        assert summary["figure1"]["ks_distance"] is None
        assert artifact.files == {}

    def test_invalid_only_above_threshold(self, small_config):
        from src.harness import summarize
        from src.records import STATUS_FAILED, RunRecord

        config = small_config.with_overrides(trials=1, max_failure_rate=0.5)
        digest = config.config_hash()
        records = [
            RunRecord(trial_index=0, ensemble="gaussian_real", config_hash=digest, seed=11, stats={"edge": 0.1}),
            RunRecord(trial_index=0, ensemble="rademacher", config_hash=digest, seed=11, status=STATUS_FAILED),
        ]

        summary = summarize(config, records)

        assert summary["failure_rate"] == 0.5
        assert summary["valid"] is True


@pytest.mark.integration
class TestMerge:
    """Tests for merge"""

    def test_split_ranges_merge_to_full_run(self, small_config, tmp_path):
        from src.harness import merge, run

        run(small_config.with_overrides(trial_range=(0, 5)), tmp_path / "a")
        run(small_config.with_overrides(trial_range=(5, 8)), tmp_path / "b")
        run(small_config, tmp_path / "full")

        merged = merge([tmp_path / "a", tmp_path / "b"], tmp_path / "merged")

        assert merged.summary["complete"] is True
        assert _summary_bytes(tmp_path / "merged") == _summary_bytes(tmp_path / "full")
        assert (tmp_path / "merged" / "pdf.csv").read_bytes() == (tmp_path / "full" / "pdf.csv").read_bytes()

    def test_merge_is_idempotent(self, small_config, tmp_path):
        from src.harness import merge, run

        run(small_config, tmp_path / "a")
        merge([tmp_path / "a", tmp_path / "a"], tmp_path / "once")
        merge([tmp_path / "once", tmp_path / "a"], tmp_path / "twice")

        assert _summary_bytes(tmp_path / "once") == _summary_bytes(tmp_path / "twice")
        assert _bodies(tmp_path / "once") == _bodies(tmp_path / "twice")

    def test_conflicting_records(self, small_config, tmp_path):
        from src.exceptions import DataIntegrityError
        from src.harness import merge, run
        from src.records import RecordStore

        run(small_config, tmp_path / "a")
        run(small_config, tmp_path / "b")
        store = RecordStore(tmp_path / "b" / "records.jsonl")
        records = store.read()
        records[0].stats["edge"] = 123.0
        store.write_all(records)

        with pytest.raises(DataIntegrityError):
            merge([tmp_path / "a", tmp_path / "b"], tmp_path / "merged")

    def test_config_mismatch(self, small_config, tmp_path):
        from src.exceptions import ConfigHashMismatchError
        from src.harness import merge, run

        run(small_config, tmp_path / "a")
        run(small_config.with_overrides(master_seed=99), tmp_path / "b")

        with pytest.raises(ConfigHashMismatchError):
            merge([tmp_path / "a", tmp_path / "b"], tmp_path / "merged")

    def test_no_inputs(self, tmp_path):
        from src.exceptions import InvalidInputError
        from src.harness import merge

        with pytest.raises(InvalidInputError):
            merge([], tmp_path / "merged")


@pytest.mark.integration
class TestFourMoment:
    """Tests for four_moment_experiment and match_order"""

    @staticmethod
    def _config(ensembles, **kwargs):
        from src.config import ExperimentConfig

        params = {"kind": "fourmoment", "ensembles": ensembles, "p": 4, "n": 6, "trials": 6, "indices": [2]}
        params.update(kwargs)
        return ExperimentConfig(**params)

    def test_same_ensemble_has_zero_delta(self, out_dir):
        from src.harness import four_moment_experiment

        table = four_moment_experiment(self._config(["gaussian_real", "gaussian_real"]), out_dir)

        assert list(table["slot"]) == ["gaussian_real", "gaussian_real#2"]
        assert table.loc[1, "delta"] == 0.0
        assert table.loc[1, "z"] == 0.0
        assert table.loc[1, "match_order"] == 4
        assert bool(table.loc[1, "passed"]) is True

    def test_partial_match_has_no_verdict(self, out_dir):
        from src.harness import four_moment_experiment

        table = four_moment_experiment(self._config(["gaussian_real", "rademacher"]), out_dir)

        assert table.loc[1, "match_order"] == 3
        assert pd.isna(table.loc[1, "passed"])
        assert pd.isna(table.loc[0, "delta"])

    def test_g_values_bounded(self, out_dir):
        from src.harness import run
        from src.records import RecordStore

        run(self._config(["gaussian_real", "gauss4"], indices=[1, 3]), out_dir)

        for record in RecordStore(out_dir / "records.jsonl").read():
            assert 0.0 < record.stats["g"] <= 1.0
            assert len(record.stats["scaled_lambdas"]) == 2

    @pytest.mark.parametrize("indices", [[3, 2], [0], [5], [2, 2]])
    def test_index_constraints(self, out_dir, indices):
        from src.exceptions import IndexConstraintError
        from src.harness import four_moment_experiment

        with pytest.raises(IndexConstraintError):
            four_moment_experiment(self._config(["gaussian_real", "gauss4"], indices=indices), out_dir)

    def test_match_order(self):
        from src.ensembles import resolve_spec
        from src.harness import match_order

        gaussian = resolve_spec("gaussian_real")

        assert match_order(gaussian, resolve_spec("gauss4")) == 4
        assert match_order(gaussian, resolve_spec("rademacher")) == 3
        assert match_order(gaussian, resolve_spec("match3:m3=1")) == 2
        assert match_order(gaussian, resolve_spec("gaussian_complex")) == 1

    def test_bump_peaks_at_centers(self):
        from src.harness import _bump_parameters, bump_function

        config = self._config(["gaussian_real", "gauss4"], indices=[1, 3])
        centers, widths = _bump_parameters(4, 6, (1, 3), None)

        assert bump_function(config, centers) == pytest.approx(1.0)
        assert np.all(widths > 0)


@pytest.mark.integration
class TestSurveys:
    """Tests for the gaps, deloc, concentration and mp_convergence kinds"""

    def test_gap_survey(self, out_dir):
        from src.config import ExperimentConfig
        from src.harness import gap_survey

        config = ExperimentConfig(kind="gaps", ensembles=["gaussian_real", "rademacher"], p=6, n=10, trials=5)
        section = gap_survey(config, out_dir)

        assert set(section["thresholds"]) == {"0.5", "1"}
        for name in ("gaussian_real", "rademacher"):
            stats = section["ensembles"][name]
            assert stats["count"] == 5
            assert 0.0 <= stats["edge_fraction"] <= 1.0
            assert set(stats["fraction_below"]) == {"0.5", "1"}

    def test_deloc_survey(self, out_dir):
        import math

        from src.config import ExperimentConfig
        from src.harness import deloc_survey

        config = ExperimentConfig(kind="deloc", ensembles=["gaussian_complex"], p=5, n=8, trials=4)
        section = deloc_survey(config, out_dir)
        stats = section["ensembles"]["gaussian_complex"]

        assert section["threshold"] == pytest.approx(10.0 * math.log(8))
        assert stats["count"] == 4
        assert 1.0 <= stats["quantiles"]["q05"] <= stats["max"] <= math.sqrt(8) + 1e-12

    def test_concentration_survey(self, out_dir):
        from src.config import ExperimentConfig
        from src.harness import concentration_survey

        config = ExperimentConfig(kind="concentration", ensembles=["rademacher"], p=20, n=40, trials=3, interval_len=0.5)
        section = concentration_survey(config, out_dir)
        stats = section["ensembles"]["rademacher"]

        assert stats["count"] == 3
        assert len(stats["mean_interval_counts"]) == 6
        assert sum(stats["mean_interval_counts"]) <= 20

    def test_convergence_survey(self, out_dir):
        from src.config import ExperimentConfig
        from src.harness import convergence_survey

        config = ExperimentConfig(
            kind="mp_convergence", ensembles=["gaussian_real"], p=3, n=4, trials=3, sizes=[8, 40]
        )
        section = convergence_survey(config, out_dir)
        medians = section["ensembles"]["gaussian_real"]["median_sup_distance"]

        assert set(medians) == {"8", "40"}
        assert all(0.0 < value <= 1.0 for value in medians.values())
        assert isinstance(section["ensembles"]["gaussian_real"]["monotone"], bool)

    def test_run_experiment_dispatch(self, out_dir):
        from src.config import ExperimentConfig
        from src.harness import run_experiment

        config = ExperimentConfig(kind="fourmoment", ensembles=["gaussian_real", "gauss4"], p=3, n=5, trials=3)
        artifact = run_experiment(config, out_dir)

        assert artifact.summary["kind"] == "fourmoment"
        assert "table" in artifact.files
