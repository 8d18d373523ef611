import numpy as np
import pytest

from trianglecert.inflation import InflationProblem, assemble_lp
from trianglecert.lpsolve import solve_assembled
from trianglecert.quantum import born_rule, fritz_model
from trianglecert.witness import certificate_from_lp

HI = (1 + 1 / np.sqrt(2)) / 16
LO = (1 - 1 / np.sqrt(2)) / 16


@pytest.fixture(scope="session")
def fritz():
    return born_rule(fritz_model(1.0, 0.0))


def brute_force_fritz():
    """Independent oracle for the ideal Fritz distribution: the delta
    structure of the classical bits times the singlet correlators, written
    without any of the production Born-rule machinery."""
    e = {}
    sq = 1 / np.sqrt(2)
    obs_a = {0: np.array([0.0, 0.0, 1.0]), 1: np.array([1.0, 0.0, 0.0])}
    obs_b = {0: np.array([sq, 0.0, -sq]), 1: np.array([sq, 0.0, sq])}
    p = np.zeros((4, 4, 4))
    for a0 in range(2):
        for b0 in range(2):
            corr = -obs_a[a0] @ obs_b[b0]  # singlet: <A x B> = -a.b
            for a1 in range(2):
                for b1 in range(2):
                    q = (1 + (-1) ** (a1 + b1) * corr) / 4
                    for c0 in range(2):
                        for c1 in range(2):
                            if c0 == a0 and c1 == b0:
                                p[2 * a0 + a1, 2 * b0 + b1, 2 * c0 + c1] = q / 4
    return p.reshape(-1)


@pytest.fixture(scope="session")
def fritz_oracle_table():
    return brute_force_fritz()


@pytest.fixture(scope="session")
def d2_problem():
    return InflationProblem(2)


@pytest.fixture(scope="session")
def d4_problem():
    return InflationProblem(4)


@pytest.fixture(scope="session")
def d4_fritz_assembled(d4_problem, fritz):
    """Adapted-mode d=4 system seeded (and targeted) by the ideal Fritz
    distribution.  Expensive; shared across the suite."""
    return assemble_lp(d4_problem, fritz, "adapted")


@pytest.fixture(scope="session")
def d4_fritz_certificate(d4_fritz_assembled):
    result = solve_assembled(d4_fritz_assembled)
    assert result.status == "infeasible"
    return certificate_from_lp(d4_fritz_assembled, result)


@pytest.fixture(scope="session")
def bulk_run():
    """Full synthetic pipeline at v_s = 0.95, eps = 3e-5 with accidentals,
    sized for ~1.4e6 six-fold events."""
    from trianglecert.events import bulk_config, run_pipeline

    p = born_rule(fritz_model(0.95, 3e-5))
    cfg = bulk_config(duration_s=80.0, seed=11)
    streams, twofolds, sixfolds, counts, dist = run_pipeline(p, cfg)
    return {
        "target": p,
        "config": cfg,
        "streams": streams,
        "twofolds": twofolds,
        "sixfolds": sixfolds,
        "counts": counts,
        "dist": dist,
    }
