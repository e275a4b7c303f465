"""Command line entry point: ``digeo <task> --space PATH ...``."""

from __future__ import annotations

import sys

import click

from . import io as dio
from .fixtures import FIXTURES


def _grid(ctx, param, value):
    try:
        return dio.parse_eps_grid(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _list_fixtures(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    for fx in FIXTURES.values():
        click.echo(f"{fx.name:18s} {fx.group:18s} {fx.description}")
    ctx.exit(0)


def _task_command(task: str, help_text: str):
    @click.command(task, help=help_text)
    @click.option("--space", required=True, help="Descriptor JSON path or fixture:NAME.")
    @click.option("--eps-grid", default="0.25:2:0.25", callback=_grid, show_default=True,
                  help="start:stop:step or a comma separated list, values in (0, 2].")
    @click.option("--budget", default=20000, show_default=True, type=click.IntRange(min=1))
    @click.option("--seed", default=0, show_default=True, type=int)
    @click.option("--format", "fmt", default="csv", show_default=True, type=click.Choice(dio.FORMATS))
    @click.option("--out", default=None, type=click.Path(dir_okay=False), help="Output file (written atomically).")
    @click.option("--results-dir", default=None, type=click.Path(file_okay=False),
                  help=f"Result log directory (default: ${dio.RESULTS_ENV} or ./digeo-results).")
    @click.option("--functionals", default=20, show_default=True, type=click.IntRange(min=1),
                  help="Number of random functionals for the dual task.")
    def cmd(space, eps_grid, budget, seed, fmt, out, results_dir, functionals):
        try:
            cfg = dio.ExperimentConfig(space, task, eps_grid, budget, seed, fmt, out, results_dir, functionals)
            result = dio.run_experiment(cfg, echo=lambda line: click.echo(line, err=out is None))
        except Exception as exc:  # mapped to distinct exit codes
            code = dio.exit_code_for(exc)
            click.echo(f"error: {exc}", err=True)
            sys.exit(code)
        if out is None:
            click.echo(result.text, nl=False)
        if result.witness_path is not None:
            click.echo(f"witness written to {result.witness_path}", err=True)
        sys.exit(result.exit_code)

    return cmd


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--list-fixtures", is_flag=True, expose_value=False, is_eager=True, callback=_list_fixtures,
              help="List bundled exemplar spaces and exit.")
@click.version_option(package_name="artifact")
def main():
    """Geometry of direct integrals of finite-dimensional normed spaces."""


main.add_command(_task_command("modulus", "Modulus of convexity curve (upper estimates, certified bounds)."))
main.add_command(_task_command("day-bound", "Compose and verify the uniform convexity bound per eps."))
main.add_command(_task_command("check", "Strict, pointwise and strong convexity suites."))
main.add_command(_task_command("dual", "Duality isometry on random functionals, norming functional residuals."))
main.add_command(_task_command("report", "Summary of a space descriptor."))


if __name__ == "__main__":
    main()
