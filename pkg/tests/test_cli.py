"""
Command line tests for heatobs.

Runs the click commands on small JSON configurations written to a temporary
directory and checks the files they leave behind, the error contract and
the exponent fitter.
"""
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner
from pydantic import ValidationError

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from heatobs.cli.config import ConfigError, ExperimentConfig, load_config, set_axis  # noqa: E402
from heatobs.cli.fit import fit_exponent  # noqa: E402
from heatobs.cli.main import EXIT_VALIDATION, cli, execute, output_dir  # noqa: E402
from heatobs.cli.sweep import spawn_seeds  # noqa: E402


SMALL = {
    'domain': {'n': 15},
    'time': {'T': 0.5, 'steps': 8},
    'potential': {'kind': 'constant', 'value': 2.0},
    'omega': [[0.3, 0.7]],
}


def _write_config(directory: Path, **updates) -> Path:
    path = directory / "config.json"
    path.write_text(json.dumps({**SMALL, **updates}), encoding='utf-8')
    return path


class TestConfig:
    def test_unknown_keys_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(_write_config(tmp_path, colour='blue'))

    def test_task_params_validated(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(_write_config(tmp_path, task='hum', params={'eps': -1.0}))

    def test_overrides_replace_top_level_keys(self, tmp_path):
        config = load_config(_write_config(tmp_path, seed=3), task='obscost', seed=11)
        assert config.task == 'obscost'
        assert config.seed == 11
        assert config.potential.value == 2.0

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding='utf-8')
        with pytest.raises(ConfigError):
            load_config(path)

    def test_set_axis_needs_existing_path(self):
        data = {'potential': {'kind': 'constant', 'value': 0.0}}
        assert set_axis(data, 'potential.value', 4.0)['potential']['value'] == 4.0
        with pytest.raises(KeyError):
            set_axis(data, 'potential.amplitude', 1.0)

    def test_output_directory_precedence(self, monkeypatch):
        config = ExperimentConfig.model_validate(SMALL)
        monkeypatch.delenv("HEATOBS_OUT", raising=False)
        assert output_dir(None, config) == Path("results")
        monkeypatch.setenv("HEATOBS_OUT", "from_env")
        assert output_dir(None, config) == Path("from_env")
        configured = ExperimentConfig.model_validate({**SMALL, 'output': 'from_config'})
        assert output_dir(None, configured) == Path("from_config")
        assert output_dir("from_flag", configured) == Path("from_flag")


class TestSeeds:
    def test_spawned_seeds_are_stable(self):
        assert spawn_seeds(5, 3) == spawn_seeds(5, 3)
        assert spawn_seeds(5, 3)[:2] == spawn_seeds(5, 2)
        assert len(set(spawn_seeds(5, 8))) == 8
        assert spawn_seeds(5, 1) != spawn_seeds(6, 1)


class TestTasks:
    def test_solve_writes_field_table(self, tmp_path):
        config = _write_config(tmp_path)
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ['solve', '--config', str(config), '--out', str(out)])
        assert result.exit_code == 0

        table = pd.read_csv(out / "solve_field.csv")
        assert list(table.columns) == ["t", "x", "value"]
        assert len(table) == 9 * 15
        summary = json.loads((out / "solve_summary.json").read_text(encoding='utf-8'))
        assert summary['task'] == 'solve'
        assert summary['tables'] == ["solve_field.csv"]
        assert summary['result']['n'] == 15

    def test_same_seed_gives_identical_files(self, tmp_path):
        config = _write_config(tmp_path, params={'initial': {'kind': 'random', 'modes': 4}})
        runner = CliRunner()
        for name in ("a", "b"):
            result = runner.invoke(cli, ['solve', '--config', str(config), '--seed', '7', '--out', str(tmp_path / name)])
            assert result.exit_code == 0
        first = (tmp_path / "a" / "solve_field.csv").read_bytes()
        assert first == (tmp_path / "b" / "solve_field.csv").read_bytes()

    def test_spectral_task(self, tmp_path):
        config = _write_config(tmp_path, domain={'b': 0.5, 'n': 31}, omega=[[0.0, 0.25]])
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ['spectral', '--config', str(config), '--out', str(out)])
        assert result.exit_code == 0
        table = pd.read_csv(out / "spectral_spectral.csv")
        assert len(table) == 4
        assert table["K"].is_monotonic_increasing

    def test_overlapping_omega_exits_with_validation_code(self, tmp_path, capsys):
        config = _write_config(tmp_path, omega=[[0.2, 0.5], [0.4, 0.7]])
        code = execute('solve', str(config), None, str(tmp_path / "out"), 1)
        assert code == EXIT_VALIDATION
        lines = [line for line in capsys.readouterr().err.splitlines() if line.strip()]
        payload = json.loads(lines[-1])
        assert payload['error'] == 'ValidationError'
        assert payload['context'] == {'task': 'solve', 'config': str(config)}
        assert not (tmp_path / "out").exists()

    def test_missing_config_exit_code(self, tmp_path):
        result = CliRunner().invoke(cli, ['hum', '--config', str(tmp_path / "missing.json")])
        assert result.exit_code == EXIT_VALIDATION


class TestSweep:
    def test_amplitude_sweep(self, tmp_path):
        params = {'task': 'solve', 'axis': 'potential.value', 'values': [0.0, 1.0, 4.0]}
        config = _write_config(tmp_path, task='sweep', params=params)
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ['sweep', '--config', str(config), '--out', str(out)])
        assert result.exit_code == 0

        table = pd.read_csv(out / "sweep_sweep.csv")
        assert table["index"].tolist() == [0, 1, 2]
        assert table["potential.value"].tolist() == [0.0, 1.0, 4.0]
        assert (table["status"] == "ok").all()
        norms = table["terminal_norm"].to_numpy()
        assert np.all(np.diff(norms) < 0)

    def test_failed_row_is_recorded(self, tmp_path):
        params = {'task': 'solve', 'axis': 'domain.n', 'values': [15, 1]}
        config = _write_config(tmp_path, task='sweep', params=params)
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ['sweep', '--config', str(config), '--out', str(out)])
        assert result.exit_code == 0
        table = pd.read_csv(out / "sweep_sweep.csv")
        assert table["status"].tolist() == ["ok", "error"]
        assert table["error"].iloc[1] == "ValidationError"

    def test_empty_sweep_writes_header_only(self, tmp_path):
        params = {'task': 'solve', 'axis': 'potential.value', 'values': []}
        config = _write_config(tmp_path, task='sweep', params=params)
        out = tmp_path / "out"
        result = CliRunner().invoke(cli, ['sweep', '--config', str(config), '--out', str(out)])
        assert result.exit_code == 0
        header = (out / "sweep_sweep.csv").read_text(encoding='utf-8').strip()
        assert header == "index,potential.value,status,error,message"

    def test_unresolved_axis(self, tmp_path):
        params = {'task': 'solve', 'axis': 'potential.amplitude', 'values': [1.0]}
        config = _write_config(tmp_path, task='sweep', params=params)
        result = CliRunner().invoke(cli, ['sweep', '--config', str(config), '--out', str(tmp_path / "out")])
        assert result.exit_code == EXIT_VALIDATION


class TestFit:
    @pytest.fixture
    def sqrt_table(self):
        x = np.array([1.0, 4.0, 9.0, 16.0])
        return pd.DataFrame({'M': x, 'log_cost': 3.0 + 2.0 * np.sqrt(x)})

    def test_square_root_law_wins(self, sqrt_table):
        report = fit_exponent(sqrt_table, 'M', 'log_cost')
        assert report.best.exponent == 0.5
        assert report.best.model == "y = a + b*x^(1/2)"
        assert report.best.coefficients == pytest.approx([3.0, 2.0])
        assert report.best.r_squared == pytest.approx(1.0)
        assert len(report.fits) == 3

    def test_failed_rows_are_dropped(self, sqrt_table):
        table = pd.concat([sqrt_table, pd.DataFrame({'M': [25.0], 'log_cost': [np.nan]})])
        assert fit_exponent(table, 'M', 'log_cost').rows == 4

    def test_invalid_tables(self, sqrt_table):
        with pytest.raises(KeyError):
            fit_exponent(sqrt_table, 'M', 'missing')
        with pytest.raises(ValueError):
            fit_exponent(sqrt_table.iloc[:1], 'M', 'log_cost')
        with pytest.raises(ValueError):
            fit_exponent(sqrt_table.assign(M=[0.0, 1.0, 2.0, 3.0]), 'M', 'log_cost')

    def test_fit_command_writes_report(self, tmp_path, sqrt_table):
        table_path = tmp_path / "table.csv"
        sqrt_table.to_csv(table_path, index=False)
        report_path = tmp_path / "fit.json"
        result = CliRunner().invoke(cli, ['fit', str(table_path), '--x', 'M', '--y', 'log_cost',
                                          '--p', '0.5', '--p', '1.0', '--out', str(report_path)])
        assert result.exit_code == 0
        report = json.loads(report_path.read_text(encoding='utf-8'))
        assert report['best']['exponent'] == 0.5
        assert report['rows'] == 4


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
