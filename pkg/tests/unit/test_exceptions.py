"""
Unit Tests for Exceptions

Tests for the custom exception hierarchy and its exit codes.
"""

import pytest


class TestExceptionHierarchy:
    """Tests for exception class structure"""

    def test_rmt_lab_error_base(self):
        """Test base RmtLabError"""
        from src.exceptions import RmtLabError

        error = RmtLabError("Test error", details={"key": "value"})

        assert str(error) == "Test error | Details: {'key': 'value'}"
        assert error.message == "Test error"
        assert error.details == {"key": "value"}

    def test_error_without_details(self):
        """Test string form without details"""
        from src.exceptions import ShapeError

        assert str(ShapeError()) == "Invalid matrix shape"

    def test_unknown_ensemble_error_keeps_name(self):
        """Test UnknownEnsembleError records the name"""
        from src.exceptions import InvalidInputError, UnknownEnsembleError

        error = UnknownEnsembleError("cauchy")

        assert error.name == "cauchy"
        assert "cauchy" in str(error)
        assert isinstance(error, InvalidInputError)

    def test_degenerate_spectrum_names_index(self):
        """Test DegenerateSpectrumError names the colliding index"""
        from src.exceptions import DegenerateSpectrumError, PreconditionError

        error = DegenerateSpectrumError(index=3)

        assert error.index == 3
        assert "index 3" in str(error)
        assert isinstance(error, PreconditionError)

    def test_config_hash_mismatch(self):
        """Test ConfigHashMismatchError carries both hashes"""
        from src.exceptions import ConfigHashMismatchError, ConfigurationError

        error = ConfigHashMismatchError(expected="aaaa", found="bbbb")

        assert error.expected == "aaaa"
        assert error.found == "bbbb"
        assert isinstance(error, ConfigurationError)

    def test_edge_errors_are_domain_errors(self):
        """Test hard-edge and branch-cut errors specialize DomainError"""
        from src.exceptions import BranchCutError, DomainError, HardEdgeError

        assert issubclass(HardEdgeError, DomainError)
        assert issubclass(BranchCutError, DomainError)


class TestExitCodes:
    """Tests for the exit code carried by each family"""

    @pytest.mark.parametrize(
        "name, code",
        [
            ("InvalidInputError", 1),
            ("ShapeError", 1),
            ("UnsortedInputError", 1),
            ("ConfigurationError", 1),
            ("NonConvergenceError", 2),
            ("PreconditionError", 2),
            ("RejectionLimitError", 2),
            ("DegenerateDenominatorError", 2),
            ("StorageError", 3),
            ("DataIntegrityError", 3),
        ],
    )
    def test_exit_code(self, name, code):
        """Test each family maps to its CLI exit status"""
        import src.exceptions as exceptions

        assert getattr(exceptions, name).exit_code == code

    def test_catch_all(self):
        """Test every error is catchable as RmtLabError"""
        from src.exceptions import DataIntegrityError, RmtLabError

        with pytest.raises(RmtLabError):
            raise DataIntegrityError("conflict")
