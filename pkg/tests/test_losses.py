import math

import numpy as np
import pytest

from labeldp import ABSOLUTE, POISSON, SQUARED, check_assumption, custom_loss, eval_loss
from labeldp.losses import by_name, BUILTIN_KINDS
from labeldp import make_label_set


def test_eval_spot_values():
    assert eval_loss(SQUARED, 3, 1) == 4.0
    assert eval_loss(ABSOLUTE, 1.5, 4) == 2.5
    assert eval_loss(POISSON, 2, 2) == pytest.approx(2 - 2 * math.log(2), abs=1e-15)


def test_poisson_domain_guard():
    with pytest.raises(ValueError, match="yhat > 0"):
        eval_loss(POISSON, 0.0, 1.0)
    with pytest.raises(ValueError, match="yhat > 0"):
        eval_loss(POISSON, -1.0, 1.0)
    # y = 0 is fine: loss reduces to yhat
    assert eval_loss(POISSON, 0.5, 0.0) == 0.5


def test_zero_at_diagonal():
    for spec in (SQUARED, ABSOLUTE):
        for y in (-2.0, 0.0, 3.5):
            assert eval_loss(spec, y, y) == 0.0


def test_poisson_minimized_at_y():
    for y in (0.5, 1.0, 4.0):
        grid = np.linspace(0.05, 8, 400)
        vals = POISSON.eval_fn(grid, y)
        assert abs(grid[int(np.argmin(vals))] - y) < 0.05


@pytest.mark.parametrize("kind", BUILTIN_KINDS)
def test_valley_shape_on_grid(kind):
    spec = by_name(kind)
    lo = 0.5 if kind == "poisson" else 0.0
    ys = np.linspace(lo, 6, 40)
    for y in ys:
        vals = spec.eval_fn(ys, y)
        m = int(np.argmin(vals))
        assert np.all(np.diff(vals[: m + 1]) <= 1e-12)
        assert np.all(np.diff(vals[m:]) >= -1e-12)


def test_check_assumption_builtins():
    assert check_assumption(SQUARED, make_label_set(range(6)), 50)
    assert check_assumption(POISSON, make_label_set(range(1, 11)), 50)
    assert check_assumption(ABSOLUTE, make_label_set(range(6)), 50)


def test_check_assumption_rejects_oscillation():
    wavy = custom_loss(lambda yhat, y: np.sin(np.asarray(yhat) - np.asarray(y)) ** 2,
                       convex_in_first_arg=False)
    assert not check_assumption(wavy, make_label_set(range(7)), 50)


def test_check_assumption_grid_guard():
    with pytest.raises(ValueError):
        check_assumption(SQUARED, make_label_set([0, 1]), 2)


def test_by_name_rejects_unknown():
    with pytest.raises(ValueError, match="unknown loss"):
        by_name("hinge")
