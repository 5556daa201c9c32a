"""
RMT Lab Command Line

Subcommands map onto library operations. Data (CSV or JSON) goes to stdout
or to files; diagnostics go to stderr through logging.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.config import ExperimentConfig, LabSettings, get_settings, load_config
from src.constants import CSV_FLOAT_FORMAT, DEFAULT_BINS, EXIT_IO, EXIT_OK, EXIT_USAGE
from src.ensembles import builtin_names, resolve_spec, sample_matrix, spec_to_dict
from src.exceptions import ConfigurationError, InvalidInputError, RmtLabError
from src.harness import merge, run_experiment
from src.logging_config import get_logger, setup_logging
from src.mp_law import (
    MPModel,
    cdf,
    density,
    pv_edge_integral,
    quantile,
    stieltjes,
    verify_functional_equation,
)
from src.records import dumps
from src.spectra import (
    augmented,
    covariance_spectrum,
    verify_coordinate_formula,
    verify_interlacing_identity,
    verify_interlacing_law,
    verify_schur_stieltjes,
    verify_weyl,
)
from src.stats import esd, mp_sup_distance

logger = get_logger(__name__)

# Defaults per experiment kind when no --config file is given.
KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "figure1": {"p": 600, "n": 800, "trials": 1000, "ensembles": ["gaussian_real", "rademacher"]},
    "fourmoment": {"p": 150, "n": 200, "trials": 2000, "ensembles": ["gaussian_real", "gauss4"]},
    "gaps": {"p": 300, "n": 400, "trials": 100, "ensembles": ["gaussian_real", "rademacher"]},
    "deloc": {"p": 300, "n": 400, "trials": 100, "ensembles": ["gaussian_real", "rademacher"]},
    "concentration": {"p": 300, "n": 400, "trials": 100, "ensembles": ["gaussian_real"]},
    "mp_convergence": {"p": 300, "n": 400, "trials": 50, "ensembles": ["gaussian_real"]},
}


class LabArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from e


def _seed(args: argparse.Namespace, settings: LabSettings) -> int:
    return settings.seed if args.seed is None else args.seed


def _emit(payload: Any) -> None:
    sys.stdout.write(dumps(payload, indent=2) + "\n")


def _emit_frame(frame: pd.DataFrame, out: Path | None) -> None:
    if out is None:
        frame.to_csv(sys.stdout, index=False, float_format=CSV_FLOAT_FORMAT)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, float_format=CSV_FLOAT_FORMAT)


# ============================================================================
# Library subcommands
# ============================================================================

def cmd_sample(args: argparse.Namespace, settings: LabSettings) -> int:
    spec = resolve_spec(args.ensemble[0] if args.ensemble else "gaussian_real")
    sample = sample_matrix(spec, args.p, args.n, _seed(args, settings), args.trial)
    entries = sample.entries
    payload: dict[str, Any] = {
        "ensemble": spec.name,
        "spec": spec_to_dict(spec),
        "spec_id": sample.spec_id,
        "p": sample.p,
        "n": sample.n,
        "seed": sample.seed,
        "trial": sample.trial_index,
    }
    if np.iscomplexobj(entries):
        payload["entries"] = {"re": entries.real, "im": entries.imag}
    else:
        payload["entries"] = entries
    _emit(payload)
    return EXIT_OK


def cmd_esd(args: argparse.Namespace, settings: LabSettings) -> int:
    spec = resolve_spec(args.ensemble[0] if args.ensemble else "gaussian_real")
    sample = sample_matrix(spec, args.p, args.n, _seed(args, settings), args.trial)
    lambdas = covariance_spectrum(sample)
    dist = esd(lambdas)
    model = MPModel.from_shape(args.p, args.n)
    if args.pdf:
        frame = dist.pdf_frame(args.bins or DEFAULT_BINS)
        frame["mp_pdf"] = density(model, frame["x"].to_numpy())
    else:
        frame = dist.cdf_frame()
        frame["mp_cdf"] = [cdf(model, x) for x in frame["x"]]
    logger.info("ESD computed", extra_fields={"sup_distance": mp_sup_distance(lambdas, model), "p": args.p})
    _emit_frame(frame, Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, settings: LabSettings) -> int:
    spec = resolve_spec(args.ensemble[0] if args.ensemble else "gaussian_real")
    seed = _seed(args, settings)
    sample = sample_matrix(spec, args.p, args.n, seed, args.trial)
    M = sample.entries
    payload: dict[str, Any] = {"op": args.op, "p": args.p, "n": args.n, "seed": seed, "ensemble": spec.name}

    if args.op == "interlacing":
        payload.update(verify_interlacing_law(M).to_dict())
    elif args.op == "weyl":
        E = sample_matrix(spec, args.p, args.n, seed, args.trial + 1).entries
        E = E / np.linalg.norm(E, 2)
        payload.update(verify_weyl(M, M + args.eps * E).to_dict())
    elif args.op == "coordinate":
        payload["index"] = args.index
        payload["residual"] = verify_coordinate_formula(M, args.index)
    elif args.op == "identity":
        payload.update(verify_interlacing_identity(M).to_dict())
    elif args.op == "schur":
        H = (M @ M.conj().T) / args.n
        payload["z"] = [args.z.real, args.z.imag]
        payload["residual"] = verify_schur_stieltjes(H, args.z)
    elif args.op == "augmented":
        aug = augmented(M)
        sigma = np.sqrt(np.clip(covariance_spectrum(M), 0.0, None) * args.n)
        expected = aug.expected_spectrum(sigma, args.n)
        payload["residual"] = float(np.max(np.abs(aug.eigenvalues() - expected)))
    _emit(payload)
    return EXIT_OK


def cmd_mp(args: argparse.Namespace, settings: LabSettings) -> int:
    model = MPModel(args.y)

    def need(value: Any, flag: str) -> Any:
        if value is None:
            raise InvalidInputError(f"--eval {args.eval} requires {flag}")
        return value

    result: Any
    if args.eval == "density":
        result = density(model, need(args.x, "--x"))
    elif args.eval == "cdf":
        result = cdf(model, need(args.x, "--x"))
    elif args.eval == "quantile":
        result = quantile(model, need(args.q, "--q"))
    elif args.eval == "stieltjes":
        s = stieltjes(model, need(args.z, "--z"))
        result = {"re": s.real, "im": s.imag}
    elif args.eval == "functional":
        result = verify_functional_equation(model, need(args.z, "--z"))
    else:
        result = pv_edge_integral(model, need(args.x, "--x"), method=args.method)
    sys.stdout.write(dumps(result) + "\n")
    return EXIT_OK


def cmd_ensembles(args: argparse.Namespace, settings: LabSettings) -> int:
    _emit({name: spec_to_dict(resolve_spec(name)) for name in builtin_names()})
    return EXIT_OK


# ============================================================================
# Experiment subcommands
# ============================================================================

def build_config(kind: str, args: argparse.Namespace, settings: LabSettings) -> ExperimentConfig:
    """Config file (or kind defaults) with command-line overrides applied."""
    if args.config:
        base = load_config(args.config)
        if base.kind != kind:
            raise ConfigurationError(
                f"Config file describes a {base.kind} experiment", details={"subcommand": kind}
            )
    else:
        base = ExperimentConfig(kind=kind, master_seed=settings.seed, workers=settings.workers, **KIND_DEFAULTS[kind])

    overrides: dict[str, Any] = {
        "p": args.p,
        "n": args.n,
        "trials": args.trials,
        "master_seed": args.seed,
        "ensembles": args.ensemble,
        "bins": args.bins,
        "workers": args.workers,
        "trial_range": tuple(args.trial_range) if args.trial_range else None,
        "full": True if args.full else None,
    }
    for option in ("indices", "g_scale", "gap_exponents", "gap_scale", "deloc_factor", "interval_len", "sizes"):
        overrides[option] = getattr(args, option, None)
    overrides["concentration_threshold"] = getattr(args, "threshold", None)
    overrides["tw_convention"] = getattr(args, "tw_convention", None)
    return base.with_overrides(**overrides)


def _experiment(kind: str) -> Callable[[argparse.Namespace, LabSettings], int]:
    def handler(args: argparse.Namespace, settings: LabSettings) -> int:
        config = build_config(kind, args, settings)
        out = Path(args.out) if args.out else settings.output_dir / f"{kind}-{config.config_hash()}"
        artifact = run_experiment(config, out, progress=args.progress)
        logger.info("Experiment written", extra_fields={"out_dir": str(artifact.out_dir)})
        _emit(artifact.summary)
        return EXIT_OK

    return handler


def cmd_merge(args: argparse.Namespace, settings: LabSettings) -> int:
    artifact = merge([Path(path) for path in args.paths], Path(args.out))
    _emit(artifact.summary)
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================

def _matrix_flags(parser: argparse.ArgumentParser, p: int, n: int) -> None:
    parser.add_argument("--p", type=int, default=p, help=f"row count p (default {p})")
    parser.add_argument("--n", type=int, default=n, help=f"column count n >= p (default {n})")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: RMT_LAB_SEED or 0)")
    parser.add_argument("--trial", type=int, default=0, help="trial index (default 0)")
    parser.add_argument("--ensemble", action="append", help="ensemble name, e.g. bernoulli or gauss-div:t=0.5:base=bernoulli")


def _experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config; flags override its fields")
    parser.add_argument("--p", type=int, help="row count p")
    parser.add_argument("--n", type=int, help="column count n >= p")
    parser.add_argument("--trials", type=int, help="number of trials")
    parser.add_argument("--seed", type=int, help="master seed (default: config, else RMT_LAB_SEED)")
    parser.add_argument("--ensemble", action="append", help="ensemble name; repeat for several")
    parser.add_argument("--bins", type=int, help="histogram bin count")
    parser.add_argument("--workers", type=int, help="parallel trial workers")
    parser.add_argument("--trial-range", type=int, nargs=2, metavar=("START", "STOP"), help="run trials [START, STOP) only")
    parser.add_argument("--full", action="store_true", help="persist per-trial eigenvalue lists")
    parser.add_argument("--out", help="output directory (default: RMT_LAB_OUTPUT_DIR/<kind>-<hash>)")
    parser.add_argument("--progress", action="store_true", help="show a progress bar on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = LabArgumentParser(prog="rmt-lab", description="Random covariance matrix numerics lab")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], help="log level")
    parser.add_argument("--json-logs", action="store_true", help="JSON log lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("sample", help="draw one matrix and print it as JSON")
    _matrix_flags(p, 3, 4)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("esd", help="ESD of one sample against the Marchenko-Pastur law (CSV)")
    _matrix_flags(p, 300, 400)
    p.add_argument("--pdf", action="store_true", help="histogram density instead of the ecdf")
    p.add_argument("--bins", type=int, help=f"histogram bins (default {DEFAULT_BINS})")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(handler=cmd_esd)

    p = sub.add_parser("verify", help="check an exact spectral identity on one sample")
    _matrix_flags(p, 5, 8)
    p.add_argument(
        "--op",
        required=True,
        choices=["interlacing", "weyl", "coordinate", "identity", "schur", "augmented"],
        help="identity to verify",
    )
    p.add_argument("--index", type=int, default=1, help="singular value index for --op coordinate")
    p.add_argument("--eps", type=float, default=1e-3, help="perturbation size for --op weyl")
    p.add_argument("--z", type=_complex, default=complex(2, 1), help="spectral parameter for --op schur")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("mp", help="evaluate Marchenko-Pastur closed forms")
    p.add_argument("--y", type=float, required=True, help="aspect ratio in (0, 1]")
    p.add_argument(
        "--eval",
        required=True,
        choices=["density", "cdf", "quantile", "stieltjes", "functional", "pv"],
        help="quantity to evaluate",
    )
    p.add_argument("--x", type=float, help="point for density, cdf and pv")
    p.add_argument("--q", type=float, help="probability for quantile")
    p.add_argument("--z", type=_complex, help="complex point for stieltjes and functional, e.g. 1+1j")
    p.add_argument("--method", choices=["excision", "qawc"], default="excision", help="interior p.v. method")
    p.set_defaults(handler=cmd_mp)

    p = sub.add_parser("ensembles", help="list built-in ensembles as JSON")
    p.set_defaults(handler=cmd_ensembles)

    p = sub.add_parser("figure1", help="soft-edge sigma_min^2 comparison of two ensembles")
    _experiment_flags(p)
    p.add_argument("--tw-convention", choices=["standard", "literal"], help="edge normalization")
    p.set_defaults(handler=_experiment("figure1"))

    p = sub.add_parser("fourmoment", help="E G(n lambda_i) across ensembles")
    _experiment_flags(p)
    p.add_argument("--indices", type=int, nargs="+", help="1-based eigenvalue indices i_1 < ... < i_k")
    p.add_argument("--g-scale", type=float, help="bump width s (default n times the MP quantile spacing)")
    p.set_defaults(handler=_experiment("fourmoment"))

    p = sub.add_parser("gaps", help="minimum eigenvalue gap survey")
    _experiment_flags(p)
    p.add_argument("--gap-exponent", dest="gap_exponents", type=float, action="append", help="threshold n^-c; repeatable")
    p.add_argument("--gap-scale", choices=["eigenvalue", "sigma"], help="gaps of lambda (n) or sigma (sqrt(p+n))")
    p.set_defaults(handler=_experiment("gaps"))

    p = sub.add_parser("deloc", help="singular vector delocalization survey")
    _experiment_flags(p)
    p.add_argument("--deloc-factor", type=float, help="threshold factor on log n")
    p.set_defaults(handler=_experiment("deloc"))

    p = sub.add_parser("concentration", help="interval counts against the Marchenko-Pastur mass")
    _experiment_flags(p)
    p.add_argument("--interval-len", type=float, help="interval length")
    p.add_argument("--threshold", type=float, help="pass threshold on the worst deviation")
    p.set_defaults(handler=_experiment("concentration"))

    p = sub.add_parser("convergence", help="ESD to Marchenko-Pastur distance across sizes")
    _experiment_flags(p)
    p.add_argument("--sizes", type=int, nargs="+", help="column counts n; p follows the config ratio")
    p.set_defaults(handler=_experiment("mp_convergence"))

    p = sub.add_parser("merge", help="merge experiment directories of one config")
    p.add_argument("paths", nargs="+", help="experiment directories")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_merge)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    settings = get_settings().lab
    setup_logging(
        level=args.log_level or settings.log_level,
        json_output=args.json_logs or settings.log_json,
        log_file=str(settings.log_file) if settings.log_file else None,
    )

    try:
        return args.handler(args, settings)
    except RmtLabError as e:
        logger.error(str(e), extra_fields={"error_type": type(e).__name__})
        return e.exit_code
    except ValidationError as e:
        logger.error("Invalid configuration", extra_fields={"errors": [err["msg"] for err in e.errors()]})
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
