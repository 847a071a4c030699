"""Tests for the sparse AND-OR split optimizer and its containers."""

import numpy as np
import pytest

from ilens.errors import DataError
from ilens.extraction import (
    ExtractConfig,
    InteractionSet,
    SplitParams,
    _split_effects,
    extract,
    load_interactions,
    matching_error,
    max_order,
    mean_interactions,
    salient_filter,
    save_interactions,
    with_tau,
)
from ilens.subset_lattice import as_lattice_vector, reconstruct_all
from ilens.value_table import ValueTable


def planted_table(n, seed, signed=True):
    """Random sparse ground-truth decomposition and the table it induces."""
    rng = np.random.default_rng(seed)
    size = 1 << n
    k = min(int(rng.integers(3, 16)), size - 1)
    i_and = np.zeros(size)
    i_or = np.zeros(size)
    masks = rng.choice(np.arange(1, size), size=k, replace=False)
    for m in masks:
        eff = rng.uniform(0.5, 3.0)
        if signed and rng.random() < 0.5:
            eff = -eff
        if rng.random() < 0.5:
            i_and[m] += eff
        else:
            i_or[m] += eff
    bias = float(rng.normal())
    v = reconstruct_all(bias, i_and, i_or)
    planted = np.abs(i_and).sum() + np.abs(i_or).sum()
    return ValueTable(n=n, values=v), planted


def test_matching_identity_for_arbitrary_split_params():
    # Any gamma and any bounded noise yield an exact reconstruction.
    rng = np.random.default_rng(5)
    n = 6
    size = 1 << n
    for _ in range(25):
        v = rng.normal(size=size)
        table = ValueTable(n=n, values=v)
        gamma = rng.normal(size=size)
        gamma[0] = 0.0
        delta = rng.uniform(-0.05, 0.05, size=size)
        delta[0] = 0.0
        i_and, i_or = _split_effects(table.centered() - delta, gamma, n)
        iset = InteractionSet(
            n=n,
            i_and=as_lattice_vector(i_and),
            i_or=as_lattice_vector(i_or),
            bias=table.bias,
            tau=0.0,
        )
        params = SplitParams(
            gamma=as_lattice_vector(gamma),
            noise=as_lattice_vector(delta),
            zeta=0.05,
        )
        assert matching_error(table, iset, params) <= 1e-9


def test_planted_recovery_without_noise_slack():
    cfg = ExtractConfig(enable_noise=False)
    for seed in range(6):
        table, planted = planted_table(6, 100 + seed)
        iset, params, trace = extract(table, cfg)
        assert iset.total_l1() <= planted + 1e-3
        assert matching_error(table, iset, params) <= 1e-6
        assert np.abs(params.noise.values).max() == 0.0


def test_planted_recovery_with_noise_slack():
    cfg = ExtractConfig(enable_noise=True)
    for seed in range(4):
        table, planted = planted_table(6, 200 + seed)
        iset, params, trace = extract(table, cfg)
        # The slack can only help, so the planted mass still bounds the fit.
        assert iset.total_l1() <= planted + 1e-3
        assert matching_error(table, iset, params) <= 1e-6
        assert np.abs(params.noise.values).max() <= params.zeta + 1e-12


def test_constant_table_extracts_nothing():
    table = ValueTable(n=4, values=np.full(16, 2.5))
    iset, params, trace = extract(table)
    assert iset.bias == 2.5
    assert iset.total_l1() == 0.0
    assert not iset.omega_and and not iset.omega_or
    assert np.abs(params.gamma.values).max() == 0.0
    assert matching_error(table, iset, params) == 0.0


def test_never_worse_than_symmetric_split():
    rng = np.random.default_rng(31)
    n = 5
    for _ in range(5):
        v = rng.normal(size=1 << n)
        table = ValueTable(n=n, values=v)
        c = table.centered()
        base_and, base_or = _split_effects(c, np.zeros(1 << n), n)
        base = np.abs(base_and).sum() + np.abs(base_or).sum()
        iset, _, _ = extract(table, ExtractConfig(iterations=800, enable_noise=False))
        assert iset.total_l1() <= base + 1e-9


def test_scale_equivariance():
    table, _ = planted_table(5, 77)
    cfg = ExtractConfig(iterations=1500)
    small, _, _ = extract(table, cfg)
    big, _, _ = extract(ValueTable(n=5, values=3.0 * table.values.values), cfg)
    assert abs(big.total_l1() - 3.0 * small.total_l1()) <= 1e-8 * max(
        1.0, big.total_l1()
    )
    assert np.isclose(big.tau, 3.0 * small.tau)


def test_population_scale_overrides_table_scale():
    table, _ = planted_table(4, 9)
    iset, params, _ = extract(table, ExtractConfig(iterations=50), population_scale=10.0)
    assert np.isclose(iset.tau, 0.2)
    assert np.isclose(params.zeta, 0.2)


def test_trace_is_non_increasing():
    table, _ = planted_table(6, 55)
    _, _, trace = extract(table, ExtractConfig(iterations=1000))
    assert trace.iterations[0] == 0
    assert trace.iterations[-1] == 1000
    assert np.all(np.diff(trace.loss) <= 1e-12)
    tail = trace.loss[-max(1, len(trace.loss) // 10) :]
    assert tail.max() - tail.min() <= 1e-6 * max(1.0, tail.max()) + 1e-6


def test_trace_csv(tmp_path):
    table, _ = planted_table(3, 1)
    _, _, trace = extract(table, ExtractConfig(iterations=60))
    path = tmp_path / "trace.csv"
    trace.save_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "iteration,loss,step"
    assert len(lines) == len(trace.iterations) + 1
    it, lo, st = lines[1].split(",")
    assert int(it) == 0 and float(lo) == trace.loss[0] and float(st) == trace.step[0]


def test_salient_sets_and_threshold_tools():
    n = 3
    i_and = np.array([0.0, 2.0, 0.0, 0.005, 0.0, 0.0, 0.0, 1.0])
    i_or = np.array([0.0, 0.0, -1.5, 0.0, 0.0, 0.03, 0.0, 0.0])
    iset = InteractionSet(
        n=n,
        i_and=as_lattice_vector(i_and),
        i_or=as_lattice_vector(i_or),
        bias=0.0,
        tau=0.01,
        omega_and=frozenset({1, 7}),
        omega_or=frozenset({2, 5}),
    )
    oa, oo = salient_filter(iset, 0.01)
    assert oa == frozenset({1, 7}) and oo == frozenset({2, 5})
    oa, oo = salient_filter(iset, 1.6)
    assert oa == frozenset({1}) and oo == frozenset()
    strict = with_tau(iset, 1.6)
    assert strict.tau == 1.6 and strict.omega_and == frozenset({1})
    assert max_order(iset) == 3  # mask 7 is salient at tau=0.01
    assert max_order(iset, 1.6) == 1
    assert max_order(iset, 10.0) == 0
    with pytest.raises(DataError):
        salient_filter(iset, -0.5)


def test_interactions_round_trip(tmp_path):
    table, _ = planted_table(4, 3)
    iset, _, _ = extract(table, ExtractConfig(iterations=200))
    path = tmp_path / "interactions.json"
    save_interactions(iset, path)
    back = load_interactions(path)
    assert back.n == iset.n
    assert back.bias == iset.bias and back.tau == iset.tau
    assert np.array_equal(back.i_and.values, iset.i_and.values)
    assert np.array_equal(back.i_or.values, iset.i_or.values)
    assert back.omega_and == iset.omega_and and back.omega_or == iset.omega_or


def test_interactions_io_errors(tmp_path):
    table, _ = planted_table(2, 4)
    iset, _, _ = extract(table, ExtractConfig(iterations=20))
    with pytest.raises(DataError):
        save_interactions(iset, tmp_path / "missing" / "x.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError):
        load_interactions(bad)
    bad.write_text('{"format_version": 99}')
    with pytest.raises(DataError):
        load_interactions(bad)
    bad.write_text('{"format_version": 1, "n": 2}')
    with pytest.raises(DataError):
        load_interactions(bad)
    with pytest.raises(DataError):
        load_interactions(tmp_path / "nope.json")


def test_validation_errors():
    with pytest.raises(DataError):
        ExtractConfig(learning_rate=0.0)
    with pytest.raises(DataError):
        ExtractConfig(iterations=0)
    with pytest.raises(DataError):
        ExtractConfig(zeta_coeff=-1.0)
    with pytest.raises(DataError):
        extract(ValueTable(n=15, values=np.zeros(1 << 15)))
    with pytest.raises(DataError):
        SplitParams(
            gamma=as_lattice_vector(np.zeros(4)),
            noise=as_lattice_vector(np.array([0.0, 0.5, 0.0, 0.0])),
            zeta=0.1,
        )
    with pytest.raises(DataError):
        InteractionSet(
            n=2,
            i_and=as_lattice_vector(np.zeros(4)),
            i_or=as_lattice_vector(np.array([1.0, 0.0, 0.0, 0.0])),
            bias=0.0,
            tau=0.0,
        )
    with pytest.raises(DataError):
        matching_error(
            ValueTable(n=2, values=np.zeros(4)),
            InteractionSet(
                n=3,
                i_and=as_lattice_vector(np.zeros(8)),
                i_or=as_lattice_vector(np.zeros(8)),
                bias=0.0,
                tau=0.0,
            ),
            SplitParams(
                gamma=as_lattice_vector(np.zeros(8)),
                noise=as_lattice_vector(np.zeros(8)),
                zeta=0.0,
            ),
        )


def test_mean_interactions_elementwise_average_and_union():
    a = InteractionSet(
        n=2,
        i_and=as_lattice_vector(np.array([0.0, 2.0, 0.0, 4.0])),
        i_or=as_lattice_vector(np.array([0.0, 0.0, 2.0, 0.0])),
        bias=1.0,
        tau=0.2,
        omega_and={1, 3},
        omega_or={2},
    )
    b = InteractionSet(
        n=2,
        i_and=as_lattice_vector(np.array([0.0, 0.0, 0.0, -2.0])),
        i_or=as_lattice_vector(np.array([0.0, 4.0, 0.0, 0.0])),
        bias=3.0,
        tau=0.4,
        omega_and={3},
        omega_or={1},
    )
    mean = mean_interactions([a, b])
    assert np.allclose(mean.i_and.values, [0.0, 1.0, 0.0, 1.0])
    assert np.allclose(mean.i_or.values, [0.0, 2.0, 1.0, 0.0])
    assert mean.bias == 2.0
    assert abs(mean.tau - 0.3) <= 1e-15
    assert mean.omega_and == {1, 3}
    assert mean.omega_or == {1, 2}


def test_mean_interactions_rejects_empty_and_mixed_n():
    with pytest.raises(DataError):
        mean_interactions([])
    a = InteractionSet(
        n=1,
        i_and=as_lattice_vector(np.zeros(2)),
        i_or=as_lattice_vector(np.zeros(2)),
        bias=0.0,
        tau=0.0,
    )
    b = InteractionSet(
        n=2,
        i_and=as_lattice_vector(np.zeros(4)),
        i_or=as_lattice_vector(np.zeros(4)),
        bias=0.0,
        tau=0.0,
    )
    with pytest.raises(DataError):
        mean_interactions([a, b])
