"""
Dependency verification tests for heatobs.

This test suite verifies that the numerical stack and every heatobs module
can be imported.
"""
import sys
from dotenv import load_dotenv
from pathlib import Path

# Get the project root directory (heatobs root)
current_dir = Path(__file__).parent
project_root = current_dir.parent

# Load .env file from project root
env_path = project_root / '.env'
if env_path.exists():
    load_dotenv(dotenv_path=str(env_path))
else:
    load_dotenv()

# Add project root to Python path
sys.path.insert(0, str(project_root))


def test_pydantic_v2():
    """Test Pydantic v2"""
    import pydantic
    from pydantic import model_validator

    version = getattr(pydantic, '__version__', 'unknown')
    if version != 'unknown':
        major_version = int(version.split('.')[0])
        assert major_version >= 2, f"Expected Pydantic v2, got {version}"

    # Verify v2-specific features are available
    assert model_validator is not None


def test_numerical_stack():
    """Test numpy and the scipy routines the solvers rely on"""
    import numpy as np
    from scipy.linalg import cho_factor, eigh_tridiagonal, solve_banded
    from scipy.optimize import brentq
    from scipy.stats import linregress

    assert np.__version__
    assert cho_factor is not None
    assert eigh_tridiagonal is not None
    assert solve_banded is not None
    assert brentq is not None
    assert linregress is not None


def test_tooling_imports():
    """Test table, progress, parallel and command line packages"""
    import click
    import joblib
    import pandas
    import tqdm
    import dotenv

    assert click is not None
    assert joblib is not None
    assert pandas is not None
    assert tqdm is not None
    assert dotenv is not None


def test_heatobs_imports():
    """Test every heatobs module"""
    from heatobs.core.mesh.base import SpaceGrid
    from heatobs.core.potential.base import Potential
    from heatobs.core.potential.norms import norms
    from heatobs.core.pde.base import HeatSolver
    from heatobs.core.linalg.base import conjugate_gradient
    from heatobs.analysis.carleman.inequality import min_tau_search
    from heatobs.analysis.observability.base import cobs_estimate
    from heatobs.analysis.control.regular import regular_control
    from heatobs.analysis.spectral.extension import extension_check
    from heatobs.cli.main import cli

    assert SpaceGrid is not None
    assert Potential is not None
    assert norms is not None
    assert HeatSolver is not None
    assert conjugate_gradient is not None
    assert min_tau_search is not None
    assert cobs_estimate is not None
    assert regular_control is not None
    assert extension_check is not None
    assert cli is not None
