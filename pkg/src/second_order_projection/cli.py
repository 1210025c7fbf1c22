"""Command-line front end: solve | converge | pseudospec | perturb | oracle."""

import argparse
import functools
import json
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from second_order_projection.config import get_settings
from second_order_projection.errors import (
    ConfigError,
    EigensolverError,
    NumericalError,
    OracleError,
    QuadratureError,
)
from second_order_projection.helpers import to_csv, to_json, write_files_atomic
from second_order_projection.matpoly import PseudospectraWeights, Rect, grid_centres, grid_sample, pseudospectrum_radius
from second_order_projection.models import ErrorResponse, FDConfig, OperatorConfig, RunConfig
from second_order_projection.operators import ModelKind, OperatorModel, build_pencil, gap_distance, make_model
from second_order_projection.oracle import (
    OracleCache,
    band_bottom,
    reference_eigenvalue,
    resolve_spectrum,
    schrodinger_fd,
    secular_roots,
)
from second_order_projection.pipeline import (
    convergence_study,
    method_pipeline,
    perturbation_experiment,
    relative_weights,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

ERROR_MESSAGES = {
    "config_missing": "Configuration file not found.",
    "config_parse": "Configuration file is neither valid TOML nor valid JSON.",
    "config_invalid": "Invalid run configuration. Check keys and values against the schema.",
    "precondition": "A precondition of the requested computation is violated.",
    "eigensolver": "The dense eigensolver failed to converge.",
    "quadrature": "Quadrature did not reach the requested accuracy.",
    "oracle": "The reference computation failed its own consistency checks.",
    "numerical": "A numerical component failed.",
    "internal": "Unexpected failure.",
}

Rendered = dict[str, str]


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a TOML or JSON run configuration.

    Raises:
        ConfigError: if the file is missing, unparsable or fails validation

    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{ERROR_MESSAGES['config_missing']} ({path})")
    raw = path.read_bytes()
    data: Any
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"{ERROR_MESSAGES['config_parse']} {e}") from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{ERROR_MESSAGES['config_invalid']}\n{e}") from e


def model_from_config(cfg: OperatorConfig) -> OperatorModel:
    params = cfg.model_dump(exclude={"kind"}, exclude_none=True)
    return make_model(cfg.kind, **params)


def _single_n(config: RunConfig) -> int:
    ns = config.truncations()
    if len(ns) != 1:
        raise ConfigError(f"This command needs exactly one truncation index, got {len(ns)}")
    return ns[0]


def _check_preconditions(config: RunConfig, model: OperatorModel) -> None:
    """Reject a perturbation block whose radius is not below a quarter of the gap distance."""
    p = config.perturbation
    if p is None:
        return
    lam = reference_eigenvalue(model, p.target)
    mu = gap_distance(resolve_spectrum(model), lam)
    if not p.delta < mu / 4:
        raise ConfigError(f"perturbation.delta={p.delta} must be below mu/4={mu / 4:.6g} (mu={mu:.6g})")


def _solve(config: RunConfig, model: OperatorModel, threads: int) -> Rendered:
    n = _single_n(config)
    targets = [reference_eigenvalue(model, t) for t in config.targets]
    result = method_pipeline(model, n, targets, config.imag_cut)
    spec = result.spectrum
    files = {
        "spectrum.csv": to_csv(
            ["re", "im", "residual"],
            ([z.real, z.imag, r] for z, r in zip(spec.eigenvalues, spec.residuals)),
        ),
        "enclosures.csv": to_csv(
            ["lo", "hi", "witness_re", "witness_im"],
            ([e.lo, e.hi, e.witness_re, e.witness_im] for e in result.enclosures),
        ),
    }
    if result.nearest:
        files["nearest.csv"] = to_csv(
            ["target", "re", "im", "err"],
            ([t, z.real, z.imag, abs(z - t)] for t, z in result.nearest.items()),
        )
    return files


def _converge(config: RunConfig, model: OperatorModel, threads: int) -> Rendered:
    ns = config.truncations()
    if not ns:
        raise ConfigError("converge needs n or a sweep")
    reference = config.reference if config.reference is not None else (config.targets[0] if config.targets else None)
    if reference is None:
        raise ConfigError("converge needs a reference eigenvalue")
    lam = reference_eigenvalue(model, reference)
    records = convergence_study(model, lam, ns, workers=threads)
    return {
        "convergence.csv": to_csv(
            ["n", "err", "log_err", "log_n", "slope"],
            ([r.n, r.err, r.log_err, r.log_n, r.slope] for r in records),
        )
    }


def _pseudospec(config: RunConfig, model: OperatorModel, threads: int) -> Rendered:
    grid = config.grid
    if grid is None:
        raise ConfigError("pseudospec needs a [grid] block")
    n = _single_n(config)
    pencil = build_pencil(model, n)
    rect = Rect(grid.re_min, grid.re_max, grid.im_min, grid.im_max)
    re, im = grid_centres(rect, (grid.nx, grid.ny))
    sigma = grid_sample(pencil, rect, (grid.nx, grid.ny), workers=threads)
    weights = None
    if grid.eps is not None:
        weights = PseudospectraWeights.of(*grid.weights)
        if len(weights.w) != pencil.degree + 1:
            raise ConfigError(f"grid.weights needs {pencil.degree + 1} entries")

    header = ["i", "j", "re", "im", "sigma"] + (["member"] if weights else [])
    rows = []
    for j, y in enumerate(im):
        for i, x in enumerate(re):
            row: list[Any] = [i, j, float(x), float(y), float(sigma[j, i])]
            if weights:
                row.append(bool(sigma[j, i] <= pseudospectrum_radius(pencil, complex(x, y), grid.eps, weights)))
            rows.append(row)
    logger.info(f"Sampled spectral function on a {grid.nx} x {grid.ny} grid (min {np.min(sigma):.3e})")
    meta = {
        "schema_version": config.schema_version,
        "kind": str(model.kind),
        "n": n,
        "rect": list(rect),
        "resolution": [grid.nx, grid.ny],
        "eps": grid.eps,
        "weights": grid.weights,
        "layout": "row-major, j indexes im (outer), i indexes re (inner), cell centres",
    }
    return {"pseudospectrum.csv": to_csv(header, rows), "pseudospectrum.json": to_json(meta)}


def _perturb(config: RunConfig, model: OperatorModel, threads: int) -> Rendered:
    p = config.perturbation
    if p is None:
        raise ConfigError("perturb needs a [perturbation] block")
    n = _single_n(config)
    lam = reference_eigenvalue(model, p.target)
    w0, w1 = p.w0, p.w1
    if p.relative:
        mu = gap_distance(resolve_spectrum(model), lam)
        w0, w1 = relative_weights(p.delta, mu, lam)
    report = perturbation_experiment(
        model, n, lam, p.delta, w0, w1, p.trials, config.seed, eps_fraction=p.eps_fraction, workers=threads
    )
    return {"perturbation.json": to_json(report.model_dump(mode="json"))}


def _oracle_payload(model: OperatorModel, fd: FDConfig) -> tuple[dict[str, Any], Callable[[], dict[str, Any]]]:
    request: dict[str, Any] = {"kind": str(model.kind), "parameters": dict(model.parameters)}
    match model.kind:
        case ModelKind.FOURIER_B1 | ModelKind.DIRECT_SUM_B2:
            request["oracle"] = "secular"
            return request, lambda: secular_roots().model_dump(mode="json")
        case ModelKind.SCHRODINGER_HERMITE | ModelKind.HARMONIC_SANITY:
            request["oracle"] = "finite_difference"
            request["fd"] = fd.model_dump()

            def compute() -> dict[str, Any]:
                result = schrodinger_fd(model.potential, fd.halfwidth, fd.grid_points, fd.count, fd.extrapolate)
                return {"band_bottom": band_bottom(model), **result.model_dump(mode="json")}

            return request, compute
    raise ConfigError(f"No oracle is defined for {model.kind}")


def _oracle(config: RunConfig, model: OperatorModel, threads: int) -> Rendered:
    request, compute = _oracle_payload(model, config.fd or FDConfig())
    payload = OracleCache().get_or_compute(request, compute)
    return {"oracle.json": to_json(payload)}


def _guarded(command: Callable[[RunConfig, OperatorModel, int], Rendered]) -> Callable[..., int]:
    """Run a command, write its files only on success and map failures to exit codes."""

    @functools.wraps(command)
    def wrapper(config: RunConfig, out_dir: str | Path = "out", threads: int = 1) -> int:
        name = command.__name__.lstrip("_")
        try:
            model = model_from_config(config.operator)
            _check_preconditions(config, model)
            files = command(config, model, threads)
        except ConfigError as e:
            return _fail("config_invalid", e, EXIT_CONFIG)
        except EigensolverError as e:
            return _fail("eigensolver", e, EXIT_NUMERICAL)
        except QuadratureError as e:
            return _fail("quadrature", e, EXIT_NUMERICAL)
        except OracleError as e:
            return _fail("oracle", e, EXIT_NUMERICAL)
        except (NumericalError, np.linalg.LinAlgError) as e:
            return _fail("numerical", e, EXIT_NUMERICAL)
        except ValueError as e:
            return _fail("precondition", e, EXIT_CONFIG)
        except Exception as e:
            logger.exception(f"{name} failed: {e}")
            return _fail("internal", e, EXIT_FAILURE)
        out = Path(out_dir)
        written = write_files_atomic({out / fname: text for fname, text in files.items()})
        for path in written:
            logger.info(f"Wrote {path}")
        return EXIT_OK

    return wrapper


def _fail(code: str, error: Exception, status: int) -> int:
    message = ERROR_MESSAGES.get(code, code)
    logger.error(f"{message} {error}")
    response = ErrorResponse(error=message, error_code=code, details={"reason": str(error), "exit_status": status})
    print(response.model_dump_json(), file=sys.stderr)
    return status


cmd_solve = _guarded(_solve)
cmd_converge = _guarded(_converge)
cmd_pseudospec = _guarded(_pseudospec)
cmd_perturb = _guarded(_perturb)
cmd_oracle = _guarded(_oracle)

COMMANDS = {
    "solve": (cmd_solve, "Eigenvalues, enclosures and nearest eigenvalues at one truncation"),
    "converge": (cmd_converge, "Convergence table of the nearest eigenvalue over a sweep"),
    "pseudospec": (cmd_pseudospec, "Spectral function and pseudospectrum membership on a grid"),
    "perturb": (cmd_perturb, "Random coefficient perturbations around an eigenvalue"),
    "oracle": (cmd_oracle, "Reference eigenvalues, cached by request hash"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="second-order-projection",
        description="Second-order projection method for eigenvalues in spectral gaps",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=True, help="TOML or JSON run configuration")
        p.add_argument("--out", type=Path, default=Path("out"), help="Output directory")
        p.add_argument("--threads", type=int, default=None, help="Worker pool size")
        p.add_argument("--seed", type=int, default=None, help="Seed for random perturbations (u64)")
        p.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="Log at DEBUG level")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()

    logging.basicConfig(level=logging.INFO)
    level = "DEBUG" if args.verbose else settings.log_level.upper()
    logging.getLogger().setLevel(getattr(logging, level, logging.INFO))

    try:
        config = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
            config = config.model_copy(update={"seed": args.seed})
        threads = args.threads if args.threads is not None else settings.default_threads
        if threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {threads}")
    except ConfigError as e:
        return _fail("config_invalid", e, EXIT_CONFIG)

    command, _ = COMMANDS[args.command]
    logger.debug(f"Running {args.command} with {threads} threads")
    return command(config, args.out, threads)
