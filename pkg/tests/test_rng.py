import numpy as np
from hypothesis import given, strategies as st

from stochtunnel.rng import (PURPOSE_DYNAMICS, PURPOSE_INITIAL, normals, step_counters,
                             uniforms, walker_keys)


def test_draws_are_pure_functions_of_seed_walker_counter():
    a = uniforms(walker_keys(42, np.arange(1000)), 17)
    b = uniforms(walker_keys(42, np.arange(1000)), 17)
    assert np.array_equal(a, b)


def test_draws_do_not_depend_on_walker_order():
    ids = np.arange(500)
    perm = np.random.default_rng(0).permutation(ids)
    a = uniforms(walker_keys(9, ids), 3)
    b = uniforms(walker_keys(9, perm), 3)
    assert np.array_equal(a[perm], b)


def test_purposes_and_seeds_give_distinct_streams():
    ids = np.arange(2000)
    a = uniforms(walker_keys(1, ids, PURPOSE_DYNAMICS), 0)
    b = uniforms(walker_keys(1, ids, PURPOSE_INITIAL), 0)
    c = uniforms(walker_keys(2, ids, PURPOSE_DYNAMICS), 0)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.1 and abs(np.corrcoef(a, c)[0, 1]) < 0.1


@given(seed=st.integers(0, 2**64 - 1), counter=st.integers(0, 2**40))
def test_uniforms_in_half_open_unit_interval(seed, counter):
    u = uniforms(walker_keys(seed, np.arange(64)), counter)
    assert np.all((u >= 0) & (u < 1))


def test_uniform_moments():
    u = uniforms(walker_keys(5, np.arange(200000)), 11)
    assert abs(u.mean() - 0.5) < 0.003
    assert abs(u.var() - 1 / 12) < 0.001


def test_normal_moments():
    z = normals(walker_keys(5, np.arange(200000)), 7)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.015
    assert abs(np.mean(z**4) - 3) < 0.06


def test_counters_within_a_step_are_distinct():
    a, b, j = step_counters(10)
    assert len({a, b, j}) == 3
    assert max(a, b, j) < step_counters(11)[0]
