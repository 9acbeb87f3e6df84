"""
Command line entry point: ``heatobs <task> --config cfg.json [--seed S] [--out DIR] [--jobs J]``.
"""
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import pandas as pd
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError

from heatobs.cli.config import ConfigError, ExperimentConfig, load_config
from heatobs.cli.fit import fit_exponent
from heatobs.cli.sweep import SweepRunner, spawn_seeds
from heatobs.cli.tasks import library
from heatobs.core.pde.base import SolverError
from heatobs.logging_config import configure_logging

logger = logging.getLogger(__name__)

DEFAULT_OUT = "results"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


class RunResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    task: str
    summary: Path
    tables: List[Path]
    row: Dict[str, Any]


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    if hasattr(value, 'item'):
        return _json_safe(value.item())
    return value


def _write_csv(table: pd.DataFrame, path: Path) -> Path:
    table.to_csv(path, index=False, float_format='%.17g')
    return path


def output_dir(out: Optional[str], config: ExperimentConfig) -> Path:
    '''
    Flag, then the configuration's `output`, then HEATOBS_OUT, then ./results.
    '''
    return Path(out or config.output or os.getenv("HEATOBS_OUT") or DEFAULT_OUT)


def run(config: ExperimentConfig, out: Optional[str] = None, jobs: int = 1, verbose: bool = False) -> RunResult:
    '''
    Description
    -----------
    Runs the configured task and writes `<task>_summary.json` plus one CSV
    per result table into the output directory. Identical (config, seed)
    produce identical files.
    '''
    directory = output_dir(out, config)
    directory.mkdir(parents=True, exist_ok=True)
    task = config.task

    if task == 'sweep':
        runner = SweepRunner(config=config, jobs=jobs, verbose=verbose)
        tables = {'sweep': runner.run()}
        row = {'rows': runner.total_iter, 'success_iter': runner.success_iter, 'fail_iter': runner.fail_iter}
    else:
        seed = spawn_seeds(config.seed, 1)[0]
        output = library[task](config, seed)
        tables, row = output.tables, output.row

    paths = [_write_csv(table, directory / f"{task}_{name}.csv") for name, table in tables.items()]
    summary = {
        'task': task,
        'config': config.model_dump(mode='json', by_alias=True),
        'result': row,
        'tables': [path.name for path in paths],
    }
    summary_path = directory / f"{task}_summary.json"
    summary_path.write_text(json.dumps(_json_safe(summary), indent=2) + "\n", encoding='utf-8')
    logger.info(f"Task {task} wrote {len(paths)} table(s) to {directory}")
    return RunResult(task=task, summary=summary_path, tables=paths, row=_json_safe(row))


def error_payload(exc: BaseException, context: Dict[str, Any]) -> Dict[str, Any]:
    if isinstance(exc, ValidationError):
        message = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors())
    else:
        message = str(exc)
    if isinstance(exc, SolverError) and exc.step is not None:
        context = {**context, 'step': exc.step}
    return {'error': type(exc).__name__, 'message': message, 'context': context}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ValidationError, ConfigError)):
        return EXIT_VALIDATION
    if isinstance(exc, (SolverError, FloatingPointError)):
        return EXIT_SOLVER
    return EXIT_FAILURE


def execute(task: str, config_path: str, seed: Optional[int], out: Optional[str], jobs: Optional[int]) -> int:
    '''
    Loads, runs and reports; every failure becomes a JSON line on stderr and
    an exit code.
    '''
    context: Dict[str, Any] = {'task': task, 'config': config_path}
    try:
        config = load_config(config_path, task=task, seed=seed)
        result = run(config, out=out, jobs=jobs if jobs is not None else default_jobs())
    except Exception as exc:
        logger.debug("Task failed", exc_info=True)
        click.echo(json.dumps(_json_safe(error_payload(exc, context))), err=True)
        return exit_code(exc)
    click.echo(json.dumps({'task': task, 'summary': str(result.summary), 'tables': [str(p) for p in result.tables]}))
    return EXIT_OK


def default_jobs() -> int:
    value = os.getenv("HEATOBS_JOBS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning(f"Ignoring HEATOBS_JOBS={value!r}")
        return 1


def task_options(fn):
    fn = click.option('--jobs', type=click.IntRange(min=1), default=None, help='Parallel sweep rows (HEATOBS_JOBS).')(fn)
    fn = click.option('--out', type=click.Path(file_okay=False), default=None, help='Output directory (HEATOBS_OUT).')(fn)
    fn = click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=None, help='Master seed, overrides the configuration.')(fn)
    fn = click.option('--config', 'config_path', type=click.Path(dir_okay=False), required=True, help='JSON experiment configuration.')(fn)
    return fn


@click.group()
@click.option('--log-level', default=None, help='Logging level (HEATOBS_LOG_LEVEL).')
def cli(log_level: Optional[str]) -> None:
    '''Numerical observability and control experiments for 1D heat equations with potentials.'''
    load_dotenv()
    configure_logging(log_level)


def _register(task: str, help_text: str) -> None:
    @cli.command(name=task, help=help_text)
    @task_options
    @click.pass_context
    def command(ctx: click.Context, config_path: str, seed: Optional[int], out: Optional[str], jobs: Optional[int]) -> None:
        ctx.exit(execute(task, config_path, seed, out, jobs))


for _name in library.keys():
    _register(_name, library[_name].desc)
_register('sweep', "Run one task over a list of values of a configuration path")


@cli.command(name='fit')
@click.argument('table', type=click.Path(exists=True, dir_okay=False))
@click.option('--x', 'x_column', required=True, help='Abscissa column.')
@click.option('--y', 'y_column', required=True, help='Ordinate column.')
@click.option('--p', 'exponents', type=float, multiple=True, help='Candidate exponent, repeatable (default 1/3, 1/2, 2/3).')
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Write the fit report JSON here.')
@click.pass_context
def fit_command(ctx: click.Context, table: str, x_column: str, y_column: str, exponents, out: Optional[str]) -> None:
    '''Fit y = a + b x^p for each candidate exponent.'''
    try:
        report = fit_exponent(pd.read_csv(table), x_column, y_column, exponents or None)
    except Exception as exc:
        click.echo(json.dumps(error_payload(exc, {'task': 'fit', 'table': table})), err=True)
        ctx.exit(EXIT_VALIDATION if isinstance(exc, (ValueError, KeyError)) else EXIT_FAILURE)
    text = report.model_dump_json(indent=2)
    if out is not None:
        Path(out).write_text(text + "\n", encoding='utf-8')
    click.echo(text)


if __name__ == '__main__':
    cli()
