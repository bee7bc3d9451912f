"""Forward-mode dual-number arithmetic against closed forms and finite
differences."""

import math

import numpy as np
import pytest

import cassim.dual as dm


def test_seed_identity_tangents():
    a, b, c = dm.seed([1.5, -2.0, 0.25])
    assert a.value == 1.5 and b.value == -2.0 and c.value == 0.25
    assert np.array_equal(a.tangent, [1.0, 0.0, 0.0])
    assert np.array_equal(b.tangent, [0.0, 1.0, 0.0])
    assert np.array_equal(c.tangent, [0.0, 0.0, 1.0])


def test_seed_empty_rejected():
    with pytest.raises(ValueError):
        dm.seed([])


def test_value_and_tangent_accessors():
    (x,) = dm.seed([3.0])
    assert dm.value_of(x) == 3.0
    assert dm.value_of(7.0) == 7.0
    assert np.array_equal(dm.tangent_of(x), [1.0])
    assert np.array_equal(dm.tangent_of(5.0, k=2), [0.0, 0.0])
    with pytest.raises(ValueError):
        dm.tangent_of(5.0)


def test_arithmetic_chain_rule():
    x, y = dm.seed([2.0, 3.0])
    f = (x * y + x / y - 2.0) * y          # f = x*y^2 + x - 2y
    assert dm.value_of(f) == pytest.approx(2 * 9 + 2 - 6)
    # df/dx = y^2 + 1 = 10, df/dy = 2xy - 2 = 10
    assert dm.tangent_of(f) == pytest.approx([10.0, 10.0])


def test_power_and_reciprocal():
    (x,) = dm.seed([4.0])
    assert dm.tangent_of(x ** 3)[0] == pytest.approx(3 * 16.0)
    assert dm.tangent_of(1.0 / x)[0] == pytest.approx(-1.0 / 16.0)
    with pytest.raises(TypeError):
        x ** x


def test_trig_closed_forms():
    (x,) = dm.seed([0.3])
    assert dm.tangent_of(dm.sin(x))[0] == pytest.approx(math.cos(0.3))
    assert dm.tangent_of(dm.cos(x))[0] == pytest.approx(-math.sin(0.3))
    assert dm.tangent_of(dm.tan(x))[0] == pytest.approx(1 / math.cos(0.3) ** 2)
    assert dm.tangent_of(dm.arcsin(x))[0] == pytest.approx(
        1 / math.sqrt(1 - 0.09))


def test_exp_log_sqrt():
    (x,) = dm.seed([1.7])
    assert dm.tangent_of(dm.exp(x))[0] == pytest.approx(math.exp(1.7))
    assert dm.tangent_of(dm.log(x))[0] == pytest.approx(1 / 1.7)
    assert dm.tangent_of(dm.log1p(x))[0] == pytest.approx(1 / 2.7)
    assert dm.tangent_of(dm.sqrt(x))[0] == pytest.approx(0.5 / math.sqrt(1.7))


def test_arctan2_both_arguments():
    y, x = dm.seed([1.0, 2.0])
    f = dm.arctan2(y, x)
    assert dm.value_of(f) == pytest.approx(math.atan2(1.0, 2.0))
    # d/dy = x/(x^2+y^2), d/dx = -y/(x^2+y^2)
    assert dm.tangent_of(f) == pytest.approx([2 / 5, -1 / 5])
    assert dm.arctan2(1.0, 2.0) == pytest.approx(math.atan2(1.0, 2.0))


def test_absolute_zero_derivative_at_zero():
    (x,) = dm.seed([0.0])
    assert dm.tangent_of(dm.absolute(x))[0] == 0.0
    (y,) = dm.seed([-2.0])
    assert dm.tangent_of(dm.absolute(y))[0] == -1.0


def test_minimum_maximum_branch_tangents():
    x, y = dm.seed([1.0, 2.0])
    assert dm.tangent_of(dm.minimum(x, y)) == pytest.approx([1.0, 0.0])
    assert dm.tangent_of(dm.maximum(x, y)) == pytest.approx([0.0, 1.0])
    # tie selects the first argument's tangent
    z, w = dm.seed([5.0, 5.0])
    assert dm.tangent_of(dm.minimum(z, w)) == pytest.approx([1.0, 0.0])
    assert dm.tangent_of(dm.maximum(z, w)) == pytest.approx([1.0, 0.0])


def test_softplus_values_and_overflow_safety():
    assert dm.softplus(0.0) == pytest.approx(math.log(2.0), rel=1e-15)
    assert dm.softplus(1.0) == pytest.approx(math.log1p(math.e), rel=1e-15)
    # identity softplus(x) - softplus(-x) = x
    assert dm.softplus(1.0) - dm.softplus(-1.0) == pytest.approx(1.0)
    # naive log(1+exp(800)) overflows; the safe form returns 800 exactly
    assert dm.softplus(800.0) == 800.0
    assert dm.softplus(-800.0) == 0.0
    (x,) = dm.seed([0.5])
    sig = 1.0 / (1.0 + math.exp(-0.5))
    assert dm.tangent_of(dm.softplus(x))[0] == pytest.approx(sig, rel=1e-14)


def test_where_selects_tangents():
    x, y = dm.seed([1.0, 2.0])
    a = x * np.array([1.0, 1.0])
    b = y * np.array([1.0, 1.0])
    out = dm.where(np.array([True, False]), a, b)
    assert dm.value_of(out) == pytest.approx([1.0, 2.0])
    assert np.allclose(dm.tangent_of(out), [[1.0, 0.0], [0.0, 1.0]])


def test_dsum_axes():
    (x,) = dm.seed([2.0])
    arr = x * np.arange(6.0).reshape(2, 3)
    total = dm.dsum(arr)
    assert dm.value_of(total) == pytest.approx(30.0)
    assert dm.tangent_of(total)[0] == pytest.approx(15.0)
    rows = dm.dsum(arr, axis=1)
    assert dm.value_of(rows) == pytest.approx([6.0, 24.0])
    assert dm.tangent_of(rows)[0] == pytest.approx([3.0, 12.0])


def test_concat_mixed_inputs():
    (x,) = dm.seed([3.0])
    out = dm.concat([x, np.array([1.0, 2.0]), x * 2.0])
    assert dm.value_of(out) == pytest.approx([3.0, 1.0, 2.0, 6.0])
    assert dm.tangent_of(out)[0] == pytest.approx([1.0, 0.0, 0.0, 2.0])


def test_smooth_max_limits():
    x = np.array([1.0, 3.0, 2.0])
    # far below the gap scale the soft max is numerically exact
    assert dm.smooth_max(x, 1e-3) == pytest.approx(3.0, abs=1e-12)
    # upper bound: max <= smooth_max <= max + T*log(n)
    t = 0.5
    sm = dm.smooth_max(x, t)
    assert 3.0 <= sm <= 3.0 + t * math.log(3)


def test_getitem_slices_tangent():
    (x,) = dm.seed([2.0])
    arr = x * np.arange(4.0)
    sub = arr[1:3]
    assert dm.value_of(sub) == pytest.approx([2.0, 4.0])
    assert dm.tangent_of(sub)[0] == pytest.approx([1.0, 2.0])


def test_comparisons_use_values():
    x, y = dm.seed([1.0, 2.0])
    assert (x < y) and (x <= y) and (y > x) and (y >= x)


def test_gradient_of_scalar_function():
    def f(a, b):
        return dm.sin(a) * b + a * a

    g = dm.gradient(f, [0.4, 1.5])
    assert g == pytest.approx([1.5 * math.cos(0.4) + 0.8, math.sin(0.4)])


def test_gradient_check_agrees_with_fd():
    def f(a, b, c):
        return dm.exp(dm.sin(a) * b) + dm.sqrt(c) / (1.0 + a * a)

    assert dm.gradient_check(f, [0.3, 1.2, 2.5]) < 1e-7


def test_gradient_check_flags_nonfinite():
    def f(a):
        return dm.log(a)       # probes at -step go nonfinite

    assert dm.gradient_check(f, [0.0000005], step=1e-6) == math.inf


def test_broadcast_value_against_array():
    (x,) = dm.seed([2.0])
    out = x + np.array([1.0, 2.0, 3.0])
    assert dm.value_of(out) == pytest.approx([3.0, 4.0, 5.0])
    assert dm.tangent_of(out)[0] == pytest.approx([1.0, 1.0, 1.0])
    out2 = np.array([1.0, 2.0]) * x
    assert dm.tangent_of(out2)[0] == pytest.approx([1.0, 2.0])
