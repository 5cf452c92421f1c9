"""Fitness algebra, dominance layering, operators, and the generational loop."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mtsp.evolution import (
    FitnessTriple,
    GAConfig,
    build_layers,
    build_layers_bruteforce,
    crossover,
    dominates,
    fitness_f,
    fitness_g,
    fitness_h,
    layer_probabilities,
    mutate,
    parse_series_csv,
    random_individual,
    run,
    schedule_p,
    schedule_W,
    select_without_replacement,
    series_csv,
    square_type_bound,
)
from mtsp.metrics import Shape
from mtsp.model import EPS, ModelKind, Seed, build_label_table

M2 = ModelKind.TWO_D
M2R = ModelKind.TWO_DR


# --------------------------------------------------------------------------
# Fitness components


def test_fitness_f_values():
    assert fitness_f(8, 25) == 0.64
    assert fitness_f(0, 1) == 0.0
    assert fitness_f(24, 25) == 0.0
    with pytest.raises(ValueError):
        fitness_f(3, 0)


def test_fitness_g_values():
    assert fitness_g(1, 1, 25) == 2 / 26
    assert fitness_g(20, 30, 25) == 40 / 55
    assert fitness_g(25, 25, 25) == 1.0
    with pytest.raises(ValueError):
        fitness_g(0, 5, 25)


def test_fitness_h_values():
    assert fitness_h(8, 9, 25, 1) == 0.96
    assert fitness_h(8, 0, 25, 1) == 1.0
    assert fitness_h(0, 0, 1, 1) == 0.0  # seed alone: defined as zero


def test_dominance_cases():
    a = FitnessTriple(0.5, 0.5, 0.5)
    assert dominates(FitnessTriple(0.6, 0.5, 0.1), a)
    assert dominates(FitnessTriple(0.5, 0.6, 0.1), a)
    assert dominates(FitnessTriple(0.5, 0.5, 0.6), a)  # f breaks exact ties
    assert not dominates(FitnessTriple(0.6, 0.4, 0.9), a)  # g up, h down
    assert not dominates(a, a)
    # incomparable pair: each better on one axis
    x = FitnessTriple(0.7, 0.2, 0.5)
    y = FitnessTriple(0.2, 0.7, 0.5)
    assert not dominates(x, y) and not dominates(y, x)


triple_st = st.builds(
    FitnessTriple,
    st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]),
    st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]),
    st.sampled_from([0.0, 0.5, 1.0]),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(triple_st, min_size=1, max_size=24))
def test_build_layers_matches_bruteforce(triples):
    assert build_layers(triples) == build_layers_bruteforce(triples)


def test_build_layers_large_random():
    rng = np.random.default_rng(5)
    triples = [FitnessTriple(*(rng.integers(0, 5, 3) / 4)) for _ in range(150)]
    layers = build_layers(triples)
    assert layers == build_layers_bruteforce(triples)
    assert sorted(i for l in layers for i in l) == list(range(150))


def test_build_layers_empty_rejected():
    with pytest.raises(ValueError):
        build_layers([])


# --------------------------------------------------------------------------
# Schedules and selection


def test_schedules_linear():
    assert schedule_p(1, 0.3, 0.7, 1000) == 0.3
    assert schedule_p(1000, 0.3, 0.7, 1000) == 0.7
    assert schedule_p(500, 0.3, 0.7, 1000) == 0.3 + 499 * (0.7 - 0.3) / 999
    assert schedule_W(1, 1.0, 30.0, 100) == 1.0
    assert schedule_W(100, 1.0, 30.0, 100) == 30.0
    assert schedule_p(1, 0.3, 0.7, 1) == 0.3  # single-generation run
    with pytest.raises(ValueError):
        schedule_p(0, 0.3, 0.7, 10)
    with pytest.raises(ValueError):
        schedule_W(11, 1.0, 30.0, 10)


def test_layer_probabilities():
    assert layer_probabilities(1, 30.0).tolist() == [1.0]
    assert layer_probabilities(2, 3.0).tolist() == [0.75, 0.25]
    got = layer_probabilities(3, 3.0)
    assert np.allclose(got, [1 / 2, 1 / 3, 1 / 6])
    assert np.allclose(layer_probabilities(5, 1.0), [0.2] * 5)


def test_select_without_replacement_distinct():
    layers = [[0, 1, 2], [3, 4]]
    rng = np.random.default_rng(0)
    picked = select_without_replacement(layers, 4.0, 5, rng)
    assert sorted(picked) == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        select_without_replacement(layers, 4.0, 6, rng)


def test_top_layer_preferred():
    layers = [[0], [1]]
    rng = np.random.default_rng(1)
    picks = [select_without_replacement(layers, 9.0, 1, rng)[0]
             for _ in range(2000)]
    frac_top = picks.count(0) / len(picks)
    assert abs(frac_top - 0.9) < 0.03


# --------------------------------------------------------------------------
# Crossover


def tiles(n, tag):
    return tuple((i, tag, 0, 0) for i in range(n))


def test_crossover_preserves_lengths_and_material():
    g1, g2 = tiles(30, 0), tiles(40, 1)
    rng = np.random.default_rng(2)
    c1, c2 = crossover(g1, (0, 29), g2, (0, 39), rng)
    assert len(c1) == 30 and len(c2) == 40
    assert sorted(c1 + c2) == sorted(g1 + g2)


def test_crossover_identical_parents_noop():
    g = tiles(12, 0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        c1, c2 = crossover(g, (0, 11), g, (0, 11), rng)
        assert c1 == g and c2 == g


def test_crossover_cuts_land_in_active_regions():
    # equal lengths, disjoint active windows: the sorted cut pair must put
    # one endpoint in each window
    g1, g2 = tiles(10, 0), tiles(10, 1)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        c1, c2 = crossover(g1, (2, 4), g2, (6, 8), rng)
        diff = [x for x in range(10) if c1[x] != g1[x]]
        assert diff == list(range(diff[0], diff[-1] + 1))
        assert 2 <= diff[0] <= 4
        assert 6 <= diff[-1] <= 8
        for x in diff:
            assert c1[x] == g2[x] and c2[x] == g1[x]


def test_crossover_alignment_swaps_matching_windows():
    g1, g2 = tiles(4, 0), tiles(12, 1)
    rng = np.random.default_rng(5)
    for _ in range(200):
        c1, c2 = crossover(g1, (0, 3), g2, (0, 11), rng)
        assert len(c1) == 4 and len(c2) == 12
        moved = [x for x in range(4) if c1[x] != g1[x]]
        # the short child's replaced block comes from one contiguous run of
        # the long parent, preserving order
        if moved:
            src = [c1[x][0] for x in moved]
            assert src == list(range(src[0], src[0] + len(src)))


# --------------------------------------------------------------------------
# Mutation


def test_mutate_changes_exactly_one_side():
    table = build_label_table(4, 2)
    g = (tuple([EPS] * 4), (8, 8, 8, 8))
    rng = np.random.default_rng(6)
    for _ in range(200):
        out = mutate(g, table, M2, rng)
        changed = [(t, s) for t in range(2) for s in range(4)
                   if out[t][s] != g[t][s]]
        assert len(changed) == 1
        t, s = changed[0]
        assert out[t][s] != g[t][s]
        assert out[t][s] == EPS or out[t][s] % 4 == 0  # plain model: no polarity


def test_mutate_polarity_in_rotational_model():
    table = build_label_table(4, 2)
    g = (tuple([EPS] * 4),)
    rng = np.random.default_rng(7)
    pols = set()
    for _ in range(100):
        out = mutate(g, table, M2R, rng)
        side = [c for c in out[0] if c != EPS][0]
        pols.add(side & 3)
    assert pols == {1, 2}


def test_mutate_uniform_over_sides_and_labels():
    # from an all-blank tile every (side, new label) cell should be equally
    # likely; chi-square against the uniform at a generous threshold
    table = build_label_table(4, 2)
    g = (tuple([EPS] * 4),)
    rng = np.random.default_rng(8)
    counts = {}
    n = 6000
    for _ in range(n):
        out = mutate(g, table, M2, rng)
        (s,) = [i for i in range(4) if out[0][i] != EPS]
        counts[(s, out[0][s] >> 2)] = counts.get((s, out[0][s] >> 2), 0) + 1
    assert sorted({k[1] for k in counts}) == [1, 2, 3]
    observed = [counts.get((s, l), 0) for s in range(4) for l in (1, 2, 3)]
    p = stats.chisquare(observed).pvalue
    assert p > 1e-3


def test_mutate_guards():
    table = build_label_table(4, 2)
    with pytest.raises(ValueError):
        mutate((), table, M2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        mutate(((EPS,) * 4,), build_label_table(1, 2), M2,
               np.random.default_rng(0))


# --------------------------------------------------------------------------
# Random individuals


def test_random_individual_sizes_and_alphabet():
    table = build_label_table(5, 2)
    sizes = set()
    for k in range(50):
        g = random_individual(3, 7, table, M2, np.random.default_rng(k))
        sizes.add(len(g))
        for tile in g:
            assert len(tile) == 4
            for c in tile:
                assert c == EPS or (c % 4 == 0 and 1 <= c >> 2 <= 4)
    assert sizes == {3, 4, 5, 6, 7}


def test_random_individual_eps_weight_zero():
    table = build_label_table(5, 2)
    g = random_individual(5, 5, table, M2R, np.random.default_rng(1), 0.0)
    for tile in g:
        for c in tile:
            assert c >= 4 and c & 3 in (1, 2)


# --------------------------------------------------------------------------
# Config validation


def test_config_validation():
    def cfg(**kw):
        base = dict(generations=10, population=10, elitist_frac=0.1,
                    diversity_frac=0.1, p1=0.3, pG=0.7, W1=1.0, WG=30.0,
                    min_distance=0.0, crossover_attempts=10, min_size=2,
                    max_size=4, label_count=3, tau=2, model=M2, extent=10,
                    max_tiles=20, max_sims=2, master_seed=0)
        base.update(kw)
        return GAConfig(**base)

    cfg()  # baseline accepted
    with pytest.raises(ValueError):
        cfg(elitist_frac=0.6, diversity_frac=0.5)
    with pytest.raises(ValueError):
        cfg(W1=0.5)
    with pytest.raises(ValueError):
        cfg(min_size=5)
    with pytest.raises(ValueError):
        cfg(workers=0)
    with pytest.raises(ValueError):
        cfg(population=1)


def test_square_type_bound():
    assert square_type_bound(2) is None
    assert square_type_bound(5) == 9
    assert square_type_bound(23) == 27
    assert square_type_bound(24) == 27
    assert square_type_bound(1000) == 32


# --------------------------------------------------------------------------
# Full runs (tiny instances)


def domino_config(**kw):
    base = dict(generations=25, population=24, elitist_frac=0.1,
                diversity_frac=0.05, p1=0.3, pG=0.7, W1=1.0, WG=5.0,
                min_distance=0.0, crossover_attempts=50, min_size=1,
                max_size=2, label_count=2, tau=2, model=M2, extent=8,
                max_tiles=6, max_sims=2, master_seed=11,
                stop_on_success=True, success_max_types=2)
    base.update(kw)
    return GAConfig(**base)


DOMINO = Shape.from_cells([(0, 0), (0, 1)])


def test_run_solves_domino():
    res = run(domino_config(), DOMINO, Seed.simple(M2))
    assert res.success and res.solution is not None
    assert res.success_generation <= 10
    sol = res.solution
    assert sol.fitness.g == 1.0 and sol.fitness.h == 1.0
    assert sol.metrics.fullness
    assert 1 + sol.metrics.theta <= 2
    # series g column tracks the best so far: never decreases
    gs = [r.g for r in res.rows]
    assert all(b >= a for a, b in zip(gs, gs[1:]))
    assert res.generations_run == res.success_generation


def test_run_without_stop_flag_keeps_going():
    res = run(domino_config(stop_on_success=False, generations=5), DOMINO,
              Seed.simple(M2))
    assert res.generations_run == 5
    assert len(res.rows) == 5


def test_run_worker_count_does_not_change_results():
    base = domino_config(stop_on_success=False, generations=3, population=12)
    twin = domino_config(stop_on_success=False, generations=3, population=12,
                         workers=2)
    r1 = run(base, DOMINO, Seed.simple(M2))
    r2 = run(twin, DOMINO, Seed.simple(M2))
    assert r1.rows == r2.rows
    assert r1.best.genome == r2.best.genome
    assert r1.best.fitness == r2.best.fitness


def test_run_rejects_mismatched_dimensions():
    with pytest.raises(ValueError):
        run(domino_config(), Shape.cube(2), Seed.simple(M2))


# --------------------------------------------------------------------------
# Series serialization


def test_series_round_trip():
    res = run(domino_config(stop_on_success=False, generations=4), DOMINO,
              Seed.simple(M2))
    text = series_csv(res.rows)
    assert parse_series_csv(text) == res.rows


def test_series_rejects_bad_input():
    with pytest.raises(ValueError):
        parse_series_csv("nonsense\n1,2,3\n")
    with pytest.raises(ValueError):
        parse_series_csv("generation,g,h,f,theta,omega_size,layers\n1,2\n")
