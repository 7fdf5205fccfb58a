"""Shared parameter sets and (lazily built) solver fixtures."""

from __future__ import annotations

import pytest

from twopoisson.model import DiscountMode, ModelParams
from twopoisson.solver import SolverConfig, solve

# One representative parameter set per case of the taxonomy (rederived mode).
PARAMS_CASE_I = ModelParams.make(alpha=3.0, beta=1.0, lam=2.5, c=2.0)
PARAMS_CASE_II_A = ModelParams.make(alpha=3.0, beta=1.0, lam=0.5, c=1.0)
PARAMS_CASE_II_B_I_1 = ModelParams.make(alpha=3.0, beta=1.0, lam=0.5, c=4.0)
PARAMS_CASE_II_B_I_2 = ModelParams.make(alpha=3.0, beta=1.0, lam=0.5, c=2.0)
PARAMS_CASE_II_B_II_1 = ModelParams.make(alpha=2.5, beta=1.0, lam=1.2, c=1.0)
PARAMS_CASE_II_B_II_2 = ModelParams.make(alpha=2.5, beta=1.0, lam=1.2, c=0.3)
PARAMS_CASE_III = ModelParams.make(alpha=1.0, beta=2.0, lam=0.5, c=1.0)

ALL_CASE_PARAMS = (
    PARAMS_CASE_I,
    PARAMS_CASE_II_A,
    PARAMS_CASE_II_B_I_1,
    PARAMS_CASE_II_B_I_2,
    PARAMS_CASE_II_B_II_1,
    PARAMS_CASE_II_B_II_2,
    PARAMS_CASE_III,
)

PARAMS_CASE_I_LITERAL = ModelParams.make(
    alpha=3.0, beta=1.0, lam=2.5, c=2.0, mode=DiscountMode.PAPER_LITERAL)

ACCEPTANCE_GRID = SolverConfig(nx=48, ny=48, nz=32)
SMALL_GRID = SolverConfig(nx=20, ny=20, nz=12)


@pytest.fixture(scope="session")
def solve_case_i():
    return solve(PARAMS_CASE_I, ACCEPTANCE_GRID)


@pytest.fixture(scope="session")
def solve_case_ii_b_i_2():
    return solve(PARAMS_CASE_II_B_I_2, ACCEPTANCE_GRID)


@pytest.fixture(scope="session")
def solve_case_iii():
    return solve(PARAMS_CASE_III, ACCEPTANCE_GRID)


@pytest.fixture(scope="session")
def solve_case_i_small():
    return solve(PARAMS_CASE_I, SMALL_GRID)


@pytest.fixture(scope="session")
def solve_case_ii_b_i_2_small():
    return solve(PARAMS_CASE_II_B_I_2, SMALL_GRID)
