import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evacplan import dp
from evacplan.domain import FamilyMixture, Level, ModelParams
from evacplan.policies import TableSet


@pytest.fixture(scope="session")
def default_params():
    return ModelParams()


@pytest.fixture(scope="session")
def mini_params():
    # three populated categories, family sizes {1, 2}: 5*5*2*5 = 250 indexable states
    return ModelParams(
        c_max=3,
        t_max=4,
        f_max=2,
        populations=(1.0, 1.0, 0.0, 1.0, 0.0),
        family_mixture=FamilyMixture(means=(1.0, 2.0), sds=(0.7, 0.7), weights=(0.6, 0.4)),
    )


@pytest.fixture(scope="session")
def tiny_params():
    # c_max=1, horizon 2, families always size 1, categories AMCIT/VULNERABLE 50/50,
    # deterministic boarding, no tie bonus: hand-checkable by enumeration
    return ModelParams(
        c_max=1,
        t_max=2,
        f_max=1,
        populations=(1.0, 0.0, 0.0, 1.0, 0.0),
        family_mixture=FamilyMixture(means=(1.0,), sds=(1e-6,), weights=(1.0,)),
        p_board=1.0,
        epsilon=0.0,
    )


@pytest.fixture(scope="session")
def small_params():
    # default distributions on a reduced grid: fast solves, same structure
    return ModelParams(c_max=40, t_max=80)


@pytest.fixture(scope="session")
def small_tables(small_params):
    value_i, policy_i = dp.solve(Level.I, small_params)
    value_iib, policy_iib = dp.solve(Level.IIB, small_params)
    return TableSet(
        policy_i=policy_i, value_i=value_i, policy_iib=policy_iib, value_iib=value_iib
    )


@pytest.fixture(scope="session")
def default_tables(default_params):
    value_i, policy_i = dp.solve(Level.I, default_params)
    value_iib, policy_iib = dp.solve(Level.IIB, default_params)
    return TableSet(
        policy_i=policy_i, value_i=value_i, policy_iib=policy_iib, value_iib=value_iib
    )
