import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, PrivateAttr, model_validator
from tqdm import tqdm

from heatobs.cli.config import TASK_PARAMS, ConfigError, ExperimentConfig, SweepParams, resolve_axis, set_axis

logger = logging.getLogger(__name__)

BASE_COLUMNS = ['index', 'status', 'error', 'message']


def spawn_seeds(master: int, count: int) -> List[int]:
    '''
    Child seeds of `master` via numpy's SeedSequence spawning; child i only
    depends on (master, i).
    '''
    children = np.random.SeedSequence(master).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def run_row(index: int, data: Dict[str, Any], seed: int) -> Dict[str, Any]:
    '''
    Validates and runs one sweep row; failures become a row with status
    'error' instead of an exception.
    '''
    from heatobs.cli.tasks import library

    row: Dict[str, Any] = {'index': index, 'status': 'ok', 'error': None, 'message': None}
    try:
        config = ExperimentConfig.model_validate(data)
        output = library[config.task](config, seed)
        row.update(output.row)
    except Exception as exc:
        row.update({'status': 'error', 'error': type(exc).__name__, 'message': str(exc)})
    return row


class SweepRunner(BaseModel):
    '''
    Description
    -----------
    Runs one task over a list of values of a dotted configuration path and
    collects one summary row per value. Rows are keyed by their input index,
    so the table order never depends on execution order.

    Attributes
    ----------
    ```
    config : ExperimentConfig
    ```
    A configuration whose task is 'sweep'
    ```
    jobs : int
    ```
    Parallel workers; 1 runs in-process
    ```
    verbose : bool
    ```
    Show a progress bar

    Methods
    -------
    ```
    def run() -> pd.DataFrame
    ```
    Runs every row and returns the combined table
    '''
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ExperimentConfig
    jobs: int = 1
    verbose: bool = True

    _success_iter: int = PrivateAttr(default=0)
    _fail_iter: int = PrivateAttr(default=0)

    @model_validator(mode='after')
    def validate_runner(self) -> 'SweepRunner':
        if self.config.task != 'sweep':
            raise ValueError(f"SweepRunner needs a 'sweep' configuration, got '{self.config.task}'")
        if self.jobs < 1:
            raise ValueError(f"jobs must be at least 1, got {self.jobs}")
        return self

    @property
    def params(self) -> SweepParams:
        return self.config.task_params

    @property
    def success_iter(self) -> int:
        return self._success_iter

    @property
    def fail_iter(self) -> int:
        return self._fail_iter

    @property
    def total_iter(self) -> int:
        return self._success_iter + self._fail_iter

    def _reset_run_stats(self) -> None:
        self._success_iter = 0
        self._fail_iter = 0

    def base_data(self) -> Dict[str, Any]:
        '''
        Configuration of a single row before the axis value is applied,
        with every task parameter spelled out so that `params.*` axes resolve.
        '''
        params = self.params
        data = self.config.model_dump(mode='json', by_alias=True, exclude={'output'})
        task_params = TASK_PARAMS[params.task].model_validate(params.task_params)
        data['task'] = params.task
        data['params'] = task_params.model_dump(mode='json', by_alias=True)
        try:
            resolve_axis(data, params.axis)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from exc
        return data

    def _row_data(self) -> List[Dict[str, Any]]:
        base = self.base_data()
        return [set_axis(copy.deepcopy(base), self.params.axis, value) for value in self.params.values]

    def run(self) -> pd.DataFrame:
        self._reset_run_stats()
        params = self.params
        rows_data = self._row_data()
        seeds = spawn_seeds(self.config.seed, len(rows_data))
        iterator = tqdm(list(enumerate(rows_data)), desc=f"Sweep {params.axis}", disable=not self.verbose)

        if self.jobs > 1:
            rows = Parallel(n_jobs=self.jobs)(delayed(run_row)(i, data, seeds[i]) for i, data in iterator)
        else:
            rows = [run_row(i, data, seeds[i]) for i, data in iterator]

        rows = sorted(rows, key=lambda row: row['index'])
        for value, row in zip(params.values, rows):
            row[params.axis] = value
            if row['status'] == 'ok':
                self._success_iter += 1
            else:
                self._fail_iter += 1
                logger.warning(f"Sweep row {row['index']} ({params.axis}={value}) failed: {row['error']}: {row['message']}")

        columns = ['index', params.axis] + BASE_COLUMNS[1:]
        for row in rows:
            columns += [key for key in row if key not in columns]
        self._info_log()
        return pd.DataFrame(rows, columns=columns)

    def _get_info(self) -> Dict[str, Any]:
        return {
            'task': self.params.task,
            'axis': self.params.axis,
            'rows': self.total_iter,
            'success_iter': self.success_iter,
            'fail_iter': self.fail_iter,
            'jobs': self.jobs,
        }

    def _info_log(self) -> None:
        logger.info(f"Sweep summary: {json.dumps(self._get_info())}")


def sweep(config: ExperimentConfig, jobs: int = 1, out: Optional[Union[str, Path]] = None, verbose: bool = False) -> pd.DataFrame:
    runner = SweepRunner(config=config, jobs=jobs, verbose=verbose)
    table = runner.run()
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, float_format='%.17g')
    return table
