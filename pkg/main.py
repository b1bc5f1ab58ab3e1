import logging
import os
import sys
from typing import Optional

import click

import config
from errors import GmolError, NoConvergence, ShapeMismatch, TargetNotReached
from geometry import build_coefficients, make_grid
from models import Command, DomainGrid, FlowState, GeometryCoefficients
from schemas import RunConfig
from services.ansatz_service import ansatz_service, coefficient_names
from services.boundary_service import boundary_service
from services.config_service import config_service
from services.file_service import file_service
from services.potential_service import potential_service
from services.residual_service import residual_service
from services.solver_service import solver_service

logger = logging.getLogger(__name__)


def _setup(run_config: RunConfig):
    grid = make_grid(run_config.N, run_config.M)
    geo = build_coefficients(run_config.shape, grid)
    return grid, geo


def _residual_entries(state: FlowState, geo: GeometryCoefficients, grid: DomainGrid, run_config: RunConfig) -> dict:
    report = residual_service.evaluate_J(state, geo, grid, run_config.nu, run_config.quadrature, run_config.scaling)
    return {f"residual.{key}": value for key, value in report.model_dump().items()}


def _run_solve(run_config: RunConfig, out: str) -> int:
    grid, geo = _setup(run_config)
    boundary = boundary_service.load(run_config.boundary, grid)
    exit_code = 0
    try:
        state, report = solver_service.solve(boundary, geo, grid, run_config.solver_config())
    except NoConvergence as e:
        click.echo(f"Error: {e.detail}", err=True)
        state, report, exit_code = e.state, e.report, e.exit_code

    file_service.write_fields(state, grid, out)
    entries = {"command": Command.SOLVE, "boundary": run_config.boundary, "N": grid.n_lines, "M": grid.n_theta}
    entries.update({f"solve.{key}": value for key, value in report.model_dump().items()})
    entries.update(_residual_entries(state, geo, grid, run_config))
    file_service.write_report(os.path.join(out, "report.txt"), entries)
    return exit_code


def _run_fit(run_config: RunConfig, out: str) -> int:
    grid, geo = _setup(run_config)
    boundary = boundary_service.load(run_config.boundary, grid)
    exit_code = 0
    try:
        result = ansatz_service.fit(boundary, geo, grid, run_config.nu, run_config.fit)
    except TargetNotReached as e:
        # the best result is still written
        click.echo(f"Error: {e.detail}", err=True)
        result, exit_code = e.result, e.exit_code

    file_service.write_fields(result.state, grid, out)
    file_service.write_coefficients(result.coeffs, {k: coefficient_names(k) for k in ("a", "b", "c")}, out)
    file_service.write_line(os.path.join(out, "P0.csv"), grid.theta, result.P0)

    entries = {"command": Command.FIT, "boundary": run_config.boundary, "N": grid.n_lines, "M": grid.n_theta,
               "figure_lines": [n for n in config.FIGURE_LINES if 0 < n < grid.n_lines]}
    entries.update({f"fit.{key}": value for key, value in result.fit_report.model_dump().items()})
    entries.update({f"residual.{key}": value for key, value in result.report.model_dump().items()})
    entries["fit.objective_history"] = result.history
    file_service.write_report(os.path.join(out, "report.txt"), entries)
    return exit_code


def _run_verify_theorem(run_config: RunConfig, out: str) -> int:
    report = potential_service.certify(run_config.theorem)
    entries = {"command": Command.VERIFY_THEOREM}
    entries.update(report.model_dump())
    file_service.write_report(os.path.join(out, "theorem_report.txt"), entries)
    return 0


def _run_report(run_config: RunConfig, out: str) -> int:
    grid, geo = _setup(run_config)
    state, theta = file_service.read_fields(out)
    if state.u.shape != grid.shape or not (theta.shape == grid.theta.shape and
                                           abs(theta - grid.theta).max() <= 1e-12):
        raise ShapeMismatch(f"fields in '{out}' do not match the configured {grid.n_lines}x{grid.n_theta} grid")
    entries = {"command": Command.REPORT, "N": grid.n_lines, "M": grid.n_theta}
    entries.update(_residual_entries(state, geo, grid, run_config))
    file_service.write_report(os.path.join(out, "j_report.txt"), entries)
    return 0


RUNNERS = {
    Command.SOLVE: _run_solve,
    Command.FIT: _run_fit,
    Command.VERIFY_THEOREM: _run_verify_theorem,
    Command.REPORT: _run_report,
}


def run(command: Command, run_config: RunConfig, out: Optional[str] = None) -> int:
    """Run one command under the output-directory lock and return its exit code."""
    out = out or run_config.outputs
    with file_service.locked(out):
        logger.info("running %s into %s", Command(command).value, out)
        return RUNNERS[Command(command)](run_config, out)


def _invoke(command: Command, config_path: str, out: Optional[str]) -> None:
    try:
        run_config = config_service.load_config(config_path)
        exit_code = run(command, run_config, out)
    except GmolError as e:
        click.echo(f"Error: {e.detail}", err=True)
        sys.exit(e.exit_code)
    sys.exit(exit_code)


config_option = click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
                             help="Run configuration file (key = value lines).")
out_option = click.option("--out", default=None, type=click.Path(file_okay=False),
                          help="Output directory; defaults to the configured outputs.")


@click.group()
def cli():
    """Generalized method of lines for steady 2-D Navier-Stokes on star-shaped annuli."""
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@cli.command()
@config_option
@out_option
def solve(config_path, out):
    """Solve the line system by ordered sweeps."""
    _invoke(Command.SOLVE, config_path, out)


@cli.command()
@config_option
@out_option
def fit(config_path, out):
    """Fit the per-line ansatz coefficients by minimizing J."""
    _invoke(Command.FIT, config_path, out)


@cli.command("verify-theorem")
@config_option
@out_option
def verify_theorem(config_path, out):
    """Certify the potential construction on a rectangle."""
    _invoke(Command.VERIFY_THEOREM, config_path, out)


@cli.command()
@config_option
@out_option
def report(config_path, out):
    """Re-read written line fields and re-evaluate J."""
    _invoke(Command.REPORT, config_path, out)


if __name__ == "__main__":
    cli()
