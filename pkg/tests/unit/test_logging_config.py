"""
Unit Tests for Logging Configuration

Tests run-context tagging, the two formatters and the timing decorator.
"""

import json
import logging

import pytest


@pytest.fixture(autouse=True)
def restore_logging():
    """Drop handlers installed by setup_logging and reset the run context"""
    from src.logging_config import PrettyFormatter, StructuredFormatter, clear_context

    root = logging.getLogger()
    level = root.level
    clear_context()
    yield
    for handler in list(root.handlers):
        if isinstance(handler.formatter, (PrettyFormatter, StructuredFormatter)):
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)
    clear_context()


def _record(message="Trial failed", level=logging.WARNING):
    return logging.LogRecord("src.harness", level, "/src/harness.py", 42, message, None, None, func="execute_trial")


class TestRunContext:
    """Tests for experiment and trial context handling"""

    def test_empty_context_has_no_fields(self):
        """Test nothing is attached before a run starts"""
        from src.logging_config import current_context

        assert current_context().fields() == {}
        assert current_context().tag() == ""

    def test_trial_context_restores_outer(self):
        """Test the trial tag is dropped when the block exits"""
        from src.logging_config import current_context, set_experiment_context, trial_context

        set_experiment_context("3f2a9c0e1b7d4a55")
        with trial_context("rademacher", 3) as context:
            assert context.trial == 3
            assert context.ensemble == "rademacher"
            assert context.experiment_id == "3f2a9c0e1b7d4a55"

        assert current_context().trial is None
        assert current_context().experiment_id == "3f2a9c0e1b7d4a55"

    def test_trial_context_carries_experiment_id(self):
        """Test workers without a parent context can set the hash"""
        from src.logging_config import current_context, trial_context

        with trial_context("gauss4", 0, experiment_id="00ff00ff00ff00ff"):
            assert current_context().experiment_id == "00ff00ff00ff00ff"

        assert current_context().experiment_id == ""

    def test_new_experiment_clears_trial(self):
        """Test set_experiment_context starts from a clean context"""
        from src.logging_config import current_context, set_experiment_context, trial_context

        with trial_context("gaussian_real", 5):
            set_experiment_context("aaaa")
            assert current_context().trial is None


class TestFormatters:
    """Tests for StructuredFormatter and PrettyFormatter"""

    def test_structured_includes_context(self):
        """Test JSON lines carry hash, ensemble and trial"""
        from src.logging_config import StructuredFormatter, trial_context

        with trial_context("rademacher", 17, experiment_id="3f2a9c0e1b7d4a55"):
            entry = json.loads(StructuredFormatter().format(_record()))

        assert entry["message"] == "Trial failed"
        assert entry["level"] == "WARNING"
        assert entry["experiment_id"] == "3f2a9c0e1b7d4a55"
        assert entry["ensemble"] == "rademacher"
        assert entry["trial"] == 17
        assert entry["location"] == "harness:execute_trial:42"

    def test_structured_without_context(self):
        """Test absent context leaves the keys out"""
        from src.logging_config import StructuredFormatter

        entry = json.loads(StructuredFormatter().format(_record()))

        assert "trial" not in entry
        assert "experiment_id" not in entry

    def test_structured_extra_fields(self):
        """Test extra_fields land under 'extra' and non-JSON values are stringified"""
        from pathlib import Path

        from src.logging_config import StructuredFormatter

        record = _record()
        record.extra_fields = {"out_dir": Path("runs/a"), "trials": 8}
        entry = json.loads(StructuredFormatter().format(record))

        assert entry["extra"] == {"out_dir": "runs/a", "trials": 8}

    def test_pretty_tag_without_color(self):
        """Test the console line ends with the short context tag"""
        from src.logging_config import PrettyFormatter, trial_context

        with trial_context("gauss4", 2, experiment_id="abcdef1234567890"):
            line = PrettyFormatter(color=False).format(_record())

        assert "\033[" not in line
        assert "WARNING" in line
        assert line.endswith("Trial failed [exp=abcdef12, ens=gauss4, trial=2]")

    def test_pretty_color(self):
        """Test levels are colored when asked"""
        from src.logging_config import PrettyFormatter

        line = PrettyFormatter(color=True).format(_record(level=logging.ERROR))

        assert PrettyFormatter.COLORS["ERROR"] in line


class TestSetupLogging:
    """Tests for setup_logging and get_logger"""

    def test_logs_go_to_stderr(self, capsys):
        """Test stdout stays free for data"""
        from src.logging_config import get_logger, setup_logging

        setup_logging(level="INFO", json_output=True)
        get_logger("src.harness").info("hello", extra_fields={"n": 3})

        captured = capsys.readouterr()
        entry = json.loads(captured.err.strip().splitlines()[-1])

        assert captured.out == ""
        assert entry["message"] == "hello"
        assert entry["extra"] == {"n": 3}

    def test_level_filters(self, capsys):
        """Test records below the configured level are dropped"""
        from src.logging_config import get_logger, setup_logging

        setup_logging(level="ERROR")
        get_logger("src.harness").warning("quiet")

        assert "quiet" not in capsys.readouterr().err

    def test_log_file_gets_json(self, tmp_path):
        """Test the optional file handler writes JSON lines"""
        from src.logging_config import get_logger, setup_logging

        path = tmp_path / "lab.log"
        setup_logging(level="INFO", log_file=str(path))
        get_logger("src.harness").info("to file")
        logging.getLogger().handlers[-1].flush()

        entry = json.loads(path.read_text().strip().splitlines()[-1])

        assert entry["message"] == "to file"

    def test_noisy_loggers_quieted(self):
        """Test third-party loggers are raised to WARNING"""
        from src.logging_config import NOISY_LOGGERS, setup_logging

        setup_logging(level="DEBUG")

        for name in NOISY_LOGGERS:
            assert logging.getLogger(name).level == logging.WARNING

    def test_noisy_loggers_are_dependencies(self):
        """Test only installed packages are named"""
        import importlib.util

        from src.logging_config import NOISY_LOGGERS

        assert NOISY_LOGGERS == ("joblib",)
        for name in NOISY_LOGGERS:
            assert importlib.util.find_spec(name) is not None


class TestLogExecutionTime:
    """Tests for the timing decorator"""

    def test_success_logs_seconds(self, caplog):
        """Test a finished call logs its wall time"""
        from src.logging_config import log_execution_time

        @log_execution_time()
        def tiny():
            return 7

        with caplog.at_level(logging.INFO):
            assert tiny() == 7

        record = caplog.records[-1]
        assert record.getMessage() == "tiny finished"
        assert record.extra_fields["seconds"] >= 0

    def test_failure_logs_and_reraises(self, caplog):
        """Test a raising call logs the exception type and propagates"""
        from src.logging_config import log_execution_time

        @log_execution_time()
        def broken():
            raise ValueError("boom")

        with caplog.at_level(logging.INFO), pytest.raises(ValueError):
            broken()

        record = caplog.records[-1]
        assert record.levelname == "ERROR"
        assert record.extra_fields["error"] == "ValueError"
