import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otbounds.data import BinRule, Observation, Sample, Schema, load_sample, validate_assumptions
from otbounds.errors import (
    AssumptionViolationError,
    EmptySampleError,
    SchemaError,
    WeakInstrumentError,
)
from otbounds.measures import cell_probabilities


def _csv(rows, header="y,d,z"):
    return io.StringIO(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")


class TestLoadSample:
    def test_missing_instrument_column_means_exogenous(self):
        s = load_sample(_csv([(1.0, 1), (2.0, 0), (3.0, 1), (4.0, 0)], "y,d"), Schema("y", "d", "z"))
        assert s.exogenous
        assert np.array_equal(s.z, s.d)
        assert s.n == 4

    def test_no_instrument_in_schema(self):
        s = load_sample(_csv([(1.0, 1, 0), (2.0, 0, 1)]), Schema("y", "d"))
        assert np.array_equal(s.z, s.d)

    def test_application_binning_grid(self):
        income = [0, 0, 0, 500, 800, 900]
        age = [17, 22, 30, 19, 25, 40]
        rows = [(float(k), k % 2, inc, a) for k, (inc, a) in enumerate(zip(income, age))]
        binning = {"inc": BinRule((0,), "right"), "age": BinRule((20, 26), "right")}
        s = load_sample(_csv(rows, "y,d,inc,age"), Schema("y", "d", x=("inc", "age")), binning)
        assert s.n_cells == 6
        assert s.cells[0] == "inc:(-inf, 0]|age:(-inf, 20]"
        assert "inc:(0, inf)|age:(26, inf)" in s.cells
        assert "inc:(0, inf)|age:(20, 26]" in s.cells

    def test_half_open_default(self):
        rule = BinRule((1.0, 2.0))
        assert list(rule.assign(np.array([0.5, 1.0, 1.5, 2.0, 3.0]))) == [0, 1, 1, 2, 2]
        right = BinRule((1.0, 2.0), "right")
        assert list(right.assign(np.array([0.5, 1.0, 1.5, 2.0, 3.0]))) == [0, 0, 1, 1, 2]

    def test_bad_treatment_names_row(self):
        with pytest.raises(SchemaError, match="row 2"):
            load_sample(_csv([(1.0, 1, 1), (2.0, 2, 0)]), Schema("y", "d", "z"))

    def test_unparseable_outcome_names_row(self):
        with pytest.raises(SchemaError, match="row 1"):
            load_sample(_csv([("abc", 1, 1)]), Schema("y", "d", "z"))

    def test_missing_column(self):
        with pytest.raises(SchemaError, match="missing columns"):
            load_sample(_csv([(1.0, 1, 1)]), Schema("y", "treat", "z"))

    def test_empty_inputs(self):
        with pytest.raises(EmptySampleError):
            load_sample(io.StringIO(""), Schema("y", "d"))
        with pytest.raises(EmptySampleError):
            load_sample(io.StringIO("y,d\n"), Schema("y", "d"))

    def test_deterministic(self):
        text = "y,d,z,x\n" + "\n".join(f"{k * 0.5},{k % 2},{(k // 2) % 2},{'ab'[k % 3 == 0]}" for k in range(30))
        a = load_sample(io.StringIO(text), Schema("y", "d", "z", ("x",)))
        b = load_sample(io.StringIO(text), Schema("y", "d", "z", ("x",)))
        assert a.cells == b.cells
        for f in ("y", "d", "z", "x"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_cells_first_appearance(self):
        s = Sample.from_arrays([1, 2, 3], [0, 1, 0], x=["b", "a", "b"])
        assert s.cells == ("b", "a")
        assert list(s.x) == [0, 1, 0]

    def test_observations_round_trip(self):
        obs = [Observation(1.0, 1, 1, "a"), Observation(2.0, 0, 0, "b")]
        s = Sample.from_observations(obs)
        assert s.observations() == obs
        assert s.exogenous


class TestValidateAssumptions:
    def test_exogenous_first_stage_is_one(self):
        s = Sample.from_arrays(np.arange(8.0), [0, 1] * 4, x=["a"] * 4 + ["b"] * 4)
        diag = validate_assumptions(s)
        assert diag.first_stage() == {"a": 1.0, "b": 1.0}
        assert diag.min_cell_size == 2
        assert any("only 2" in w for w in diag.warnings)

    def test_negative_first_stage(self):
        # P(D=1|Z=1) = 0.2, P(D=1|Z=0) = 0.5
        d = [1] + [0] * 4 + [1] * 5 + [0] * 5
        z = [1] * 5 + [0] * 10
        s = Sample.from_arrays(np.arange(15.0), d, z)
        with pytest.raises(WeakInstrumentError, match="-0.3"):
            validate_assumptions(s)

    def test_empty_instrument_arm(self):
        s = Sample.from_arrays([1.0, 2.0], [1, 0], [1, 1])
        with pytest.raises(AssumptionViolationError, match="z=0"):
            validate_assumptions(s)


@st.composite
def weighted_samples(draw):
    n = draw(st.integers(4, 40))
    d = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    z = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    x = draw(st.lists(st.sampled_from("abc"), min_size=n, max_size=n))
    w = np.array(draw(st.lists(st.floats(0.0, 5.0), min_size=n, max_size=n)))
    if w.sum() <= 0:
        w = np.ones(n)
    return Sample.from_arrays(np.arange(n, dtype=float), d, z, x), w * n / w.sum()


class TestCellProbabilityIdentities:
    @given(weighted_samples())
    @settings(max_examples=60, deadline=None)
    def test_margins_add_up(self, sw):
        s, w = sw
        cp = cell_probabilities(s, w)
        assert cp.p_x.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(cp.p_dxz.sum(axis=0), cp.p_xz, atol=1e-15)
        assert np.allclose(cp.p_xz.sum(axis=1), cp.p_x, atol=1e-15)
