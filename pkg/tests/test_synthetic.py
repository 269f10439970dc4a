import numpy as np
import pytest

from otbounds.bounds import parameter
from otbounds.data import validate_assumptions
from otbounds.synthetic import two_cell_design


def test_population_bounds_agree_across_solvers():
    d = two_cell_design()
    p = parameter("identity")
    lp = d.population_bounds(p, 200, "lp")
    mono = d.population_bounds(p, 200, "monotone")
    assert lp[:2] == pytest.approx(mono[:2], abs=1e-6)
    # comonotone E[Y1 Y0] for Y1 = 1 + 2U, Y0 = 2U is 7/3
    assert mono[2][0, 1] == pytest.approx(7 / 3, abs=1e-4)


def test_draws():
    d = two_cell_design(exogenous=False, complier_share=0.6)
    s = d.draw(2000, np.random.default_rng(0))
    assert not s.exogenous and set(s.cells) == {"a", "b"}
    fs = validate_assumptions(s).first_stage()
    for v in fs.values():
        assert v == pytest.approx(0.6, abs=0.08)
    exo = two_cell_design().draw(50, np.random.default_rng(1))
    assert exo.exogenous
