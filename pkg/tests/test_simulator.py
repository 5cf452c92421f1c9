"""Growth state, selection, hollows, collisions, and traces."""

from pathlib import Path

import pytest

from mtsp.model import (
    EPS,
    LabelTable,
    ModelKind,
    Seed,
    build_label_table,
    parse_tiles,
    side_code,
)
from mtsp.rng import PHASE_SIM, substream
from mtsp.simulator import (
    GrowthState,
    SimConfig,
    _neighbor_table,
    format_trace,
    parse_trace,
    recompute_lists,
    simulate,
    simulate_once,
    step,
)

M2 = ModelKind.TWO_D
M2R = ModelKind.TWO_DR
M3R = ModelKind.THREE_DR

DATA = Path(__file__).parent / "data"


def load_fixture(name, model, tau=2):
    tf = parse_tiles((DATA / name).read_text(), model)
    genome = tuple(t for _, t in tf.tiles)
    return genome, tf.seed(), tf.label_table(tau)


# --------------------------------------------------------------------------
# Lattice plumbing


def test_neighbor_table_wraps():
    tbl = _neighbor_table(5, M2)
    assert tbl[(0, 0)] == ((0, 1), (1, 0), (0, 4), (4, 0))
    assert tbl[(4, 4)] == ((4, 0), (0, 4), (4, 3), (3, 4))
    t3 = _neighbor_table(4, M3R)
    assert t3[(0, 0, 3)][4] == (0, 0, 0)  # up from the top wraps
    assert len(t3) == 64


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(2, 10)
    with pytest.raises(ValueError):
        SimConfig(10, 0)


# --------------------------------------------------------------------------
# Selection


def test_selection_frequencies_proportional_to_weight():
    # seed offers one strong (3) and one weak (1) binding site: the strong
    # candidate must win about 3 of 4 draws
    table = LabelTable.from_pairs([("s", 3), ("w", 1)], tau=1)
    seed = Seed((((0, 0), (table.code("s"), table.code("w"), EPS, EPS)),), M2)
    genome = (
        (EPS, EPS, table.code("s"), EPS),   # binds north of the seed
        (EPS, EPS, EPS, table.code("w")),   # binds east of the seed
    )
    state = GrowthState(genome, seed, table, M2, 1, 9, 10)
    assert state.n_candidates == 2 and state.total_weight == 4
    rng = substream(11, PHASE_SIM, 0)
    n = 8000
    strong = sum(1 for _ in range(n) if state.select(rng)[1] == 0)
    assert abs(strong / n - 0.75) < 0.02


# --------------------------------------------------------------------------
# Hollows and the closing-bond rule


def build_pocket(h_intensity):
    """Two-high walls around a one-cell pocket, open at the top.

    The cap tile bridges the wall tops on two weak c bonds and presents f
    into the pocket; the filler tile needs its f bond to the cap plus the h
    bond to the floor.  With the cap recorded as the pocket's closing tile,
    only the floor bond counts toward the temperature.
    """
    table = LabelTable.from_pairs([("c", 1), ("f", 1), ("h", h_intensity)], 2)
    e = EPS
    cells = []
    for off in ((0, 0), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (2, 2)):
        sides = [e, e, e, e]
        if off == (1, 0):
            sides[0] = table.code("h")
        if off == (0, 2):
            sides[1] = table.code("c")
        if off == (2, 2):
            sides[3] = table.code("c")
        cells.append((off, tuple(sides)))
    seed = Seed(tuple(cells), M2)
    genome = (
        (e, table.code("c"), table.code("f"), table.code("c")),  # cap
        (table.code("f"), e, table.code("h"), e),                # filler
    )
    state = GrowthState(genome, seed, table, M2, 2, 11, 20)
    center = (11 // 2, 11 // 2)
    at = lambda off: (center[0] + off[0], center[1] + off[1])
    return state, at


def test_cap_creates_hollow_and_closing_bond_is_excluded():
    state, at = build_pocket(h_intensity=2)
    cap_pos, hole = at((1, 2)), at((1, 1))
    assert [k for k, _ in state.entries[cap_pos]] == [0]
    state.place(cap_pos, 0)
    # the pocket is now recorded with the cap as its closing tile
    assert state.hollow_closer == {hole: cap_pos}
    assert state.closing_dir(hole) == 0
    # filler: floor bond 2 alone passes tau, cap bond still counts as weight
    assert state.entries[hole] == [(1, 3)]
    rec = state.place(hole, 1)
    assert rec.hollow == 1 and rec.n_bonds == 2 and rec.bond_sum == 3
    assert state.n_candidates == 0


def test_weak_floor_cannot_fill_hollow():
    state, at = build_pocket(h_intensity=1)
    cap_pos, hole = at((1, 2)), at((1, 1))
    assert state.entries[hole] == []  # floor bond alone is below tau
    state.place(cap_pos, 0)
    # cap bond would reach tau but is excluded as the closing bond
    assert state.entries[hole] == []
    assert state.n_candidates == 0


def test_hollow_flag_reaches_the_outcome_trace():
    # both orders are possible; substream 1 is one where the cap goes first
    state, at = build_pocket(h_intensity=2)
    rng = substream(1, PHASE_SIM, 0)
    while state.n_candidates:
        step(state, rng)
    flags = [s.hollow for s in state.trace_steps]
    assert flags == [0, 1]  # cap outside, then the filler inside the pocket


# --------------------------------------------------------------------------
# Wrap collisions


def test_wrap_collision_taints_the_run():
    table = build_label_table(3, 2)
    a = table.code("l2")  # intensity 2
    genome = ((EPS, a, EPS, a),)  # grows an endless east-west rod
    seed = Seed.simple(M2)
    out = simulate_once(genome, seed, table, M2, 2, SimConfig(5, 20),
                        substream(1, PHASE_SIM, 0))
    assert out.collision and not out.terminal
    assert out.size == 4  # seed plus three tiles before the rod meets itself


def test_no_collision_when_budget_stops_first():
    table = build_label_table(3, 2)
    a = table.code("l2")
    genome = ((EPS, a, EPS, a),)
    out = simulate_once(genome, Seed.simple(M2), table, M2, 2,
                        SimConfig(50, 10), substream(1, PHASE_SIM, 0))
    assert not out.collision and not out.terminal and out.size == 10


# --------------------------------------------------------------------------
# Incremental audit


@pytest.mark.parametrize("model,extent", [(M2, 12), (M2R, 12), (M3R, 7)])
def test_incremental_lists_match_recomputation(model, extent):
    from mtsp.evolution import random_individual

    table = build_label_table(9, 2)
    for ms in range(8):
        genome = random_individual(8, 25, table, model,
                                   substream(ms, 0, 2), 1.0)
        state = GrowthState(genome, Seed.simple(model), table, model, 2,
                            extent, 30)
        rng = substream(ms, PHASE_SIM, 5)
        while state.n_candidates and state.size < 30:
            step(state, rng)
            positions, cands, unwrapped = recompute_lists(state)
            assert positions == set(state.entries)
            for p in positions:
                assert cands[p] == frozenset(state.entries[p])
            for p, u in state.unwrapped.items():
                assert unwrapped[p] == u


# --------------------------------------------------------------------------
# simulate() aggregation and determinism


def test_simulate_stops_at_first_terminal():
    genome, seed, table = load_fixture("solution-2d-n5.tiles", M2)
    out = simulate(genome, seed, table, M2, 2, SimConfig(30, 100, max_sims=10),
                   77, (0, 0))
    assert out.terminal and out.sims_run == 1


def test_simulate_exhausts_sims_on_runaway():
    table = build_label_table(3, 2)
    a = table.code("l2")
    genome = ((EPS, a, EPS, a),)
    out = simulate(genome, Seed.simple(M2), table, M2, 2,
                   SimConfig(50, 10, max_sims=4), 77, (0, 0))
    assert not out.terminal and out.sims_run == 4


def test_same_substream_same_trace():
    genome, seed, table = load_fixture("solution-2d-n5.tiles", M2)
    cfg = SimConfig(30, 100)
    a = simulate_once(genome, seed, table, M2, 2, cfg, substream(9, PHASE_SIM, 1))
    b = simulate_once(genome, seed, table, M2, 2, cfg, substream(9, PHASE_SIM, 1))
    assert a.trace == b.trace
    c = simulate_once(genome, seed, table, M2, 2, cfg, substream(9, PHASE_SIM, 2))
    assert c.trace != a.trace  # different substream orders differently


# --------------------------------------------------------------------------
# Reference tile sets


def test_square_solution_assembles_completely():
    genome, seed, table = load_fixture("solution-2d-n5.tiles", M2)
    for r in range(5):
        out = simulate_once(genome, seed, table, M2, 2, SimConfig(30, 100),
                            substream(123, PHASE_SIM, r))
        assert out.terminal and not out.collision
        assert out.size == 25 and out.bonds == 40
        assert len(out.trace.steps) == 24
        xs = [c[0] for c in out.cells]
        ys = [c[1] for c in out.cells]
        assert max(xs) - min(xs) == 4 and max(ys) - min(ys) == 4


def test_rotating_square_solution_assembles_completely():
    genome, seed, table = load_fixture("solution-2dr-n5.tiles", M2R)
    for r in range(5):
        out = simulate_once(genome, seed, table, M2R, 2, SimConfig(30, 100),
                            substream(55, PHASE_SIM, r))
        assert out.terminal and out.size == 25 and out.bonds == 40


def test_staircase_is_unbounded():
    genome, seed, table = load_fixture("unbounded-2dr.tiles", M2R)
    out = simulate_once(genome, seed, table, M2R, 2, SimConfig(60, 50),
                        substream(1, PHASE_SIM, 0))
    assert not out.terminal and out.size == 50  # runs into the budget


def test_wildcard_seed_binding_is_finalized():
    table = build_label_table(3, 2)
    a_plus = side_code(2, 1)  # l2+, intensity 2
    genome = ((EPS, EPS, a_plus, EPS, EPS, EPS),)
    out = simulate_once(genome, Seed.simple(M3R), table, M3R, 2,
                        SimConfig(9, 20), substream(4, PHASE_SIM, 0))
    assert out.terminal and out.size == 4 and out.bonds == 3
    ((_, fin),) = out.seed_final.cells
    a_minus = a_plus ^ 3
    assert fin[0] == a_minus and fin[1] == a_minus and fin[4] == a_minus
    assert fin[2] == EPS and fin[3] == EPS and fin[5] == EPS


# --------------------------------------------------------------------------
# Trace format


def test_trace_round_trip():
    genome, seed, table = load_fixture("solution-2d-n5.tiles", M2)
    out = simulate_once(genome, seed, table, M2, 2, SimConfig(30, 100),
                        substream(8, PHASE_SIM, 3))
    text = format_trace(out.trace)
    back = parse_trace(text, 30)
    assert back == out.trace


def test_trace_round_trip_3d():
    table = build_label_table(3, 2)
    a_plus = side_code(2, 1)
    genome = ((EPS, EPS, a_plus, EPS, EPS, EPS),)
    out = simulate_once(genome, Seed.simple(M3R), table, M3R, 2,
                        SimConfig(9, 20), substream(4, PHASE_SIM, 0))
    assert parse_trace(format_trace(out.trace), 9) == out.trace


def test_parse_trace_rejects_garbage():
    with pytest.raises(ValueError):
        parse_trace("u=1 pos=zzz type=0 orient=0 bonds=1 sum=2 hollow=0", 9)
