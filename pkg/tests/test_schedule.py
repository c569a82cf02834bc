import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lemane.schedule import (ALPHA_FLOOR, Schedule, init_schedule, load_schedule, parse_init, save_schedule,
                             stop_mass)


def test_constant_half_stop_mass():
    s = Schedule(np.full(6, 0.5))
    assert stop_mass(s, 2) == pytest.approx(0.125, abs=1e-15)


def test_half_half_one():
    s = Schedule([0.5, 0.5, 1.0])
    assert np.allclose(s.stop_masses(), [0.5, 0.25, 0.25], atol=1e-15)
    assert s.stop_masses().sum() == pytest.approx(1.0, abs=1e-15)
    assert s.tail_mass() == 0.0


def test_alpha0_one_absorbs():
    s = Schedule([1.0, 0.3, 0.3])
    assert s.stop_masses().tolist() == [1.0, 0.0, 0.0]


def test_stop_mass_out_of_range():
    s = Schedule([0.5, 0.5])
    with pytest.raises(IndexError):
        stop_mass(s, 2)
    with pytest.raises(IndexError):
        stop_mass(s, -1)


def test_clamp_and_length():
    s = Schedule([0.0, 2.0, 0.5])
    assert s.alphas.tolist() == [ALPHA_FLOOR, 1.0, 0.5]
    with pytest.raises(ValueError):
        Schedule([0.5])
    with pytest.raises(ValueError):
        Schedule([0.5, float("nan")])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30))
def test_mass_partition(alphas):
    s = Schedule(alphas)
    assert np.all((s.alphas >= ALPHA_FLOOR) & (s.alphas <= 1.0))
    phi = s.stop_masses()
    assert np.all(phi >= 0)
    assert phi.sum() + s.tail_mass() == pytest.approx(1.0, abs=1e-12)
    assert phi.sum() == pytest.approx(1 - np.prod(1 - s.alphas), abs=1e-12)


@pytest.mark.parametrize("a", [0.05, 0.2, 0.5, 0.9])
def test_geometric_is_constant(a):
    s = init_schedule("geometric", a, L=12)
    assert np.allclose(s.alphas, a, atol=1e-15)
    l = np.arange(13)
    assert np.allclose(s.stop_masses(), a * (1 - a) ** l, atol=1e-12, rtol=0)


def test_poisson_first_alpha():
    s = init_schedule("poisson", 5.0, L=15)
    assert s.alphas[0] == pytest.approx(math.exp(-5), rel=1e-12)
    assert s.alphas[0] == pytest.approx(0.0067379, abs=1e-7)
    # recovered stop masses reproduce the pmf
    pmf = np.array([math.exp(-5) * 5 ** k / math.factorial(k) for k in range(16)])
    assert np.allclose(s.stop_masses(), pmf, rtol=1e-9, atol=1e-15)


def test_uniform_init():
    s = init_schedule("uniform", L=9)
    assert np.allclose(s.stop_masses(), 0.1, atol=1e-12)
    assert s.alphas[-1] == pytest.approx(1.0)


def test_exhausted_mass_sets_ones():
    # nearly all mass on hop 0; once the survival underflows to zero the rest are 1
    s = init_schedule("poisson", 1e-3, L=150)
    assert s.alphas[-1] == 1.0
    assert np.all((s.alphas >= ALPHA_FLOOR) & (s.alphas <= 1))


@pytest.mark.parametrize("kind,param", [("geometric", 0.0), ("geometric", 1.0), ("poisson", -1.0), ("nope", 1.0)])
def test_init_rejects(kind, param):
    with pytest.raises(ValueError):
        init_schedule(kind, param)


def test_init_rejects_small_L():
    with pytest.raises(ValueError):
        init_schedule("geometric", 0.5, L=0)


def test_parse_init():
    assert parse_init("poisson:1", 15) == init_schedule("poisson", 1.0, 15)
    assert parse_init("geometric:0.5", 4) == init_schedule("geometric", 0.5, 4)
    assert parse_init("uniform", 4).L == 4
    with pytest.raises(ValueError):
        parse_init("poisson", 4)


def test_round_trip(tmp_path):
    s = init_schedule("poisson", 5.0)
    save_schedule(s, tmp_path / "s.txt")
    lines = (tmp_path / "s.txt").read_text().splitlines()
    assert lines[0] == "L=15" and len(lines) == 17
    t = load_schedule(tmp_path / "s.txt")
    assert np.array_equal(t.alphas, s.alphas)


def test_load_rejects_bad_files(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("L=3\n0.5\n0.5\n")
    with pytest.raises(ValueError):
        load_schedule(p)
    p.write_text("0.5\n0.5\n")
    with pytest.raises(ValueError):
        load_schedule(p)
