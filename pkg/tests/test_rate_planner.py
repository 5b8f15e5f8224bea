import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from atomlink import rate_planner as rp
from atomlink.rate_planner import (
    FOOTNOTES,
    LinkParams,
    bell_pair_throughput,
    crossover_distance,
    load_link_params,
    report,
    shuttle_time,
    spatial_capacity,
    time_mux_limit,
)

pos = st.floats(1e-3, 1e5, allow_nan=False, allow_infinity=False)


def test_time_mux_examples():
    assert time_mux_limit(55, 20) == 13
    assert rp.time_mux_limit_real(55, 20) == pytest.approx(13.75)
    assert time_mux_limit(1e4, 20) == 2500
    assert time_mux_limit(55, math.inf) == 0
    assert time_mux_limit(55, 1e9) == 0


def test_time_mux_rejects_bad_inputs():
    with pytest.raises(ValueError):
        time_mux_limit(0, 20)
    with pytest.raises(ValueError):
        time_mux_limit(10, -1)


@given(pos, pos, pos)
def test_time_mux_monotone_in_distance(L, dL, tau):
    assert time_mux_limit(L + dL, tau) >= time_mux_limit(L, tau)


@given(pos, pos, pos)
def test_time_mux_monotone_in_period(L, tau, dtau):
    assert time_mux_limit(L, tau + dtau) <= time_mux_limit(L, tau)


@given(pos, pos)
def test_time_mux_is_floor(L, tau):
    n = time_mux_limit(L, tau)
    assert isinstance(n, int)
    assert n <= 5 * L / tau + 1e-6 < n + 1 + 1e-6


def test_shuttle_time():
    assert shuttle_time(5, 0.3) == pytest.approx(16.67, abs=0.01)
    assert shuttle_time(0, 0.3) == 0
    assert shuttle_time(10, 0.3) == pytest.approx(2 * shuttle_time(5, 0.3))
    with pytest.raises(ValueError):
        shuttle_time(5, 0)


def test_spatial_capacity():
    assert spatial_capacity(1500, 7.5) == 200
    assert spatial_capacity(1500, 25) == 60
    assert spatial_capacity(5, 7.5) == 0
    with pytest.raises(ValueError):
        spatial_capacity(1500, 0)


def test_bell_pair_throughput():
    # modes * (2000 us / 1 us) * p
    assert bell_pair_throughput(100, 0.004, 1, 2) == pytest.approx(800)
    assert bell_pair_throughput(100, 0.0, 1, 2) == 0
    assert bell_pair_throughput(200, 0.004, 1, 2) == pytest.approx(2 * bell_pair_throughput(100, 0.004, 1, 2))
    with pytest.raises(ValueError):
        bell_pair_throughput(100, 1.5, 1, 2)
    with pytest.raises(ValueError):
        bell_pair_throughput(100, 0.1, 0, 2)


def test_crossover_distance():
    assert crossover_distance(6000, 20) == pytest.approx(24000)
    assert crossover_distance(0, 20) == 0
    with pytest.raises(ValueError):
        crossover_distance(10, 0)


@given(st.floats(0, 1e5), st.floats(1e-2, 1e3), st.floats(1e-3, 1e3))
def test_crossover_monotone(q, tau, d):
    assert crossover_distance(q + d, tau) >= crossover_distance(q, tau)
    assert crossover_distance(q, tau + d) >= crossover_distance(q, tau)


@given(st.integers(1, 10**6), st.floats(1e-2, 1e3))
def test_crossover_consistent_with_time_mux(q, tau):
    L = crossover_distance(q, tau)
    assume(L > 0)
    assert abs(time_mux_limit(L, tau) - q) <= 1


def test_report_contents():
    text = report()
    assert "spatial_capacity" in text and " 200 " in text
    assert "13 (13.7500)" in text
    for note in FOOTNOTES:
        assert note in text
    # fixed order
    keys = [line.split()[0] for line in text.splitlines()[:7]]
    assert keys == [
        "distance_km",
        "tau_us",
        "time_mux_limit",
        "shuttle_time_us",
        "spatial_capacity",
        "crossover_distance_km",
        "bell_pair_throughput",
    ]


def test_footnotes_name_the_inconsistencies():
    joined = " ".join(FOOTNOTES)
    assert "30 modes" in joined and "13.75" in joined
    assert "24000 km" in joined and "8.3 us" in joined
    assert "40 Bell pairs" in joined


def test_link_params_validation():
    with pytest.raises(ValueError):
        LinkParams(distance=0)
    with pytest.raises(ValueError):
        LinkParams(success_prob=2)


def test_load_link_params(tmp_path):
    p = tmp_path / "link.txt"
    p.write_text("# link\ndistance = 100\ntau=10  # us\navailable_qubits = 50\n\n")
    params = load_link_params(p)
    assert params.distance == 100 and params.tau == 10 and params.available_qubits == 50
    assert isinstance(params.available_qubits, int)
    line = next(l for l in report(params).splitlines() if l.startswith("time_mux_limit"))
    assert line.split()[1] == "50"


@pytest.mark.parametrize("body", ["distance 100\n", "speed_of_light = 3\n", "tau = -1\n"])
def test_load_link_params_errors(tmp_path, body):
    p = tmp_path / "bad.txt"
    p.write_text(body)
    with pytest.raises(ValueError):
        load_link_params(p)
