"""Multi-objective evolutionary search over tile-set genomes.

Fitness of an individual combines three components in [0, 1]: f rewards small
type counts relative to the object built, g rewards shape agreement with the
target, h rewards uniqueness of the accretion sequence.  Dominance puts
feasibility first: strictly better g with no worse h (or vice versa) wins, and
f only breaks exact (g, h) ties.  Populations are split into layers by
repeated extraction of the non-dominated front; selection picks a layer with
linearly decaying probability (top-to-bottom factor W_g) and then a member
uniformly.

Each generation is built from the previous one by an elitist step (layered
selection without replacement), a diversity step (uniform draws without
replacement from the rest), and a fill step choosing crossover (probability
p_g) or mutation.  Both p_g and W_g ramp linearly across generations.

Offspring genomes are produced sequentially from the generation's operator
stream; evaluations draw from substreams keyed by (generation, slot), so the
outcome is identical no matter how evaluations are scheduled or parallelized.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricsReport, Shape, evaluate_outcome
from .model import (
    EPS,
    POL_MINUS,
    POL_NONE,
    POL_PLUS,
    LabelTable,
    ModelKind,
    Seed,
    Tile,
    build_label_table,
    side_code,
)
from .rng import PHASE_GEN, PHASE_INIT, substream
from .simulator import SimConfig, SimOutcome, simulate

logger = logging.getLogger(__name__)

# internal retry budget for crossover cut placement before the unconstrained
# fallback kicks in
CUT_RETRIES = 100


@dataclass(frozen=True)
class FitnessTriple:
    g: float
    h: float
    f: float


def fitness_f(theta: int, size: int) -> float:
    """1 - (1+theta)/|omega|; the 1 accounts for the seed's type."""
    if size < 1:
        raise ValueError("object size must be >= 1")
    return 1.0 - (1 + theta) / size


def fitness_g(kappa: int, size: int, star_size: int) -> float:
    """2*kappa/(|omega| + |omega*|); 1 exactly on a terminal shape match."""
    if min(kappa, size, star_size) < 1:
        raise ValueError("kappa and sizes must be >= 1")
    return 2 * kappa / (size + star_size)


def fitness_h(theta: int, alpha: int, size: int, rho: int) -> float:
    """0 when nothing accreted; else 1 - alpha/(rho*|omega|*(1+theta))."""
    if theta == 0:
        return 0.0
    return 1.0 - alpha / (rho * size * (1 + theta))


def dominates(x: FitnessTriple, y: FitnessTriple) -> bool:
    return ((x.g > y.g and x.h >= y.h)
            or (x.g >= y.g and x.h > y.h)
            or (x.g == y.g and x.h == y.h and x.f > y.f))


def build_layers(triples: list[FitnessTriple]) -> list[list[int]]:
    """Partition indices into dominance layers, most dominant first.

    Layer 1 is the non-dominated front of the whole population; each next
    layer is the front of what remains.  Vectorized pairwise dominance keeps
    this usable at population sizes in the thousands.
    """
    if not triples:
        raise ValueError("empty population")
    g = np.array([t.g for t in triples])
    h = np.array([t.h for t in triples])
    f = np.array([t.f for t in triples])
    gc = g[:, None]
    hc = h[:, None]
    fc = f[:, None]
    dom = (((gc > g) & (hc >= h))
           | ((gc >= g) & (hc > h))
           | ((gc == g) & (hc == h) & (fc > f)))  # dom[i, j]: i dominates j
    remaining = np.arange(len(triples))
    layers = []
    while remaining.size:
        sub = dom[np.ix_(remaining, remaining)]
        front = ~sub.any(axis=0)
        layers.append(remaining[front].tolist())
        remaining = remaining[~front]
    return layers


def build_layers_bruteforce(triples: list[FitnessTriple]) -> list[list[int]]:
    """Reference O(P^2) per layer implementation used by tests."""
    remaining = list(range(len(triples)))
    layers = []
    while remaining:
        front = [i for i in remaining
                 if not any(dominates(triples[j], triples[i])
                            for j in remaining if j != i)]
        layers.append(front)
        remaining = [i for i in remaining if i not in front]
    return layers


# --------------------------------------------------------------------------
# Schedules and selection


def schedule_p(g: int, p1: float, pG: float, G: int) -> float:
    """Linear crossover-probability ramp from p1 to pG over the run."""
    if not 1 <= g <= G:
        raise ValueError(f"generation {g} outside [1, {G}]")
    if G == 1:
        return p1
    return p1 + (g - 1) * (pG - p1) / (G - 1)


def schedule_W(g: int, W1: float, WG: float, G: int) -> float:
    """Linear top-layer selection-factor ramp from W1 to WG."""
    if not 1 <= g <= G:
        raise ValueError(f"generation {g} outside [1, {G}]")
    if G == 1:
        return W1
    return W1 + (g - 1) * (WG - W1) / (G - 1)


def layer_probabilities(n_layers: int, W: float) -> np.ndarray:
    """Per-layer selection probabilities: weight W at the top decaying
    linearly to 1 at the bottom; a single layer is forced."""
    if n_layers == 1:
        return np.array([1.0])
    w = np.array([W - l * (W - 1.0) / (n_layers - 1) for l in range(n_layers)])
    return w / w.sum()

def select_individual(layers: list[list[int]], W: float,
                      rng: np.random.Generator) -> int:
    probs = layer_probabilities(len(layers), W)
    li = int(rng.choice(len(layers), p=probs))
    layer = layers[li]
    return layer[int(rng.integers(len(layer)))]


def select_without_replacement(layers: list[list[int]], W: float, count: int,
                               rng: np.random.Generator) -> list[int]:
    """Repeated select_individual, redrawing on repeats."""
    picked: list[int] = []
    taken = set()
    total = sum(len(l) for l in layers)
    if count > total:
        raise ValueError("cannot pick more individuals than exist")
    while len(picked) < count:
        i = select_individual(layers, W, rng)
        if i not in taken:
            taken.add(i)
            picked.append(i)
    return picked


def select_crossover_pair(layers: list[list[int]],
                          triples: list[FitnessTriple], W: float,
                          min_dist: float, max_attempts: int,
                          rng: np.random.Generator) -> tuple[int, int]:
    """Draw parent pairs until their fitness points are at least min_dist
    apart in (g, h, f) space; after max_attempts the last pair is used."""
    i = j = 0
    for _ in range(max_attempts):
        i = select_individual(layers, W, rng)
        j = select_individual(layers, W, rng)
        a, b = triples[i], triples[j]
        d = math.sqrt((a.g - b.g) ** 2 + (a.h - b.h) ** 2 + (a.f - b.f) ** 2)
        if d >= min_dist:
            return i, j
    return i, j


# --------------------------------------------------------------------------
# Operators


def crossover(g1: tuple[Tile, ...], active1: tuple[int, int],
              g2: tuple[Tile, ...], active2: tuple[int, int],
              rng: np.random.Generator) -> tuple[tuple[Tile, ...], tuple[Tile, ...]]:
    """Two-point crossover under containment alignment.

    The shorter genome is aligned at a random offset inside the longer; two
    cut positions are drawn inside the aligned span and the window between
    them (inclusive) is swapped, so each child keeps its parent's exact
    length.  Draws are retried until one cut falls in the first parent's
    active region and the other in the second's; after CUT_RETRIES failures
    the last cuts are used as they are.
    """
    n1, n2 = len(g1), len(g2)
    if min(n1, n2) < 1:
        raise ValueError("empty genome")
    short_len = min(n1, n2)
    span = max(n1, n2) - short_len
    # aligned frame = index space of the longer parent; the shorter occupies
    # [off, off+short_len) and both cuts are drawn from that window, which
    # keeps the swapped segments equal-length and the children their
    # parents' sizes
    off = a = b = 0
    for _ in range(CUT_RETRIES):
        off = int(rng.integers(span + 1))
        a = off + int(rng.integers(short_len))
        b = off + int(rng.integers(short_len))
        lo1, hi1 = (active1[0] + off, active1[1] + off) if n1 <= n2 else active1
        lo2, hi2 = (active2[0] + off, active2[1] + off) if n2 < n1 else active2
        if ((lo1 <= a <= hi1 and lo2 <= b <= hi2)
                or (lo2 <= a <= hi2 and lo1 <= b <= hi1)):
            break
    else:
        logger.debug("crossover fell back to unconstrained cuts")
    if a > b:
        a, b = b, a
    # swap the aligned window [a, b] between the parents
    shift1 = off if n1 <= n2 else 0
    shift2 = off if n2 < n1 else 0
    c1 = list(g1)
    c2 = list(g2)
    for x in range(a, b + 1):
        c1[x - shift1], c2[x - shift2] = c2[x - shift2], c1[x - shift1]
    return tuple(c1), tuple(c2)


def mutate(genome: tuple[Tile, ...], table: LabelTable, m: ModelKind,
           rng: np.random.Generator) -> tuple[Tile, ...]:
    """Replace one uniformly chosen side's label by a different table entry;
    rotation models draw a fresh polarity for non-blank labels."""
    if not genome:
        raise ValueError("empty genome")
    if table.size < 2:
        raise ValueError("mutation needs at least one non-eps label")
    ti = int(rng.integers(len(genome)))
    si = int(rng.integers(m.n_sides))
    cur_id = genome[ti][si] >> 2
    new_id = int(rng.integers(table.size - 1))
    if new_id >= cur_id:
        new_id += 1
    if new_id == 0:
        code = EPS
    elif m.rotational:
        code = side_code(new_id, POL_PLUS if rng.integers(2) else POL_MINUS)
    else:
        code = side_code(new_id, POL_NONE)
    tile = list(genome[ti])
    tile[si] = code
    out = list(genome)
    out[ti] = tuple(tile)
    return tuple(out)


def random_individual(min_size: int, max_size: int, table: LabelTable,
                      m: ModelKind, rng: np.random.Generator,
                      eps_weight: float = 1.0) -> tuple[Tile, ...]:
    """Uniform random genome; eps_weight rescales the blank label's share of
    the per-side label draw (1.0 keeps the table uniform)."""
    n = int(rng.integers(min_size, max_size + 1))
    size = table.size
    weights = np.ones(size)
    weights[0] = eps_weight
    probs = weights / weights.sum()
    sigma = m.n_sides
    ids = rng.choice(size, size=n * sigma, p=probs)
    pols = rng.integers(2, size=n * sigma) if m.rotational else None
    genome = []
    for t in range(n):
        sides = []
        for s in range(sigma):
            lid = int(ids[t * sigma + s])
            if lid == 0:
                sides.append(EPS)
            elif m.rotational:
                sides.append(side_code(lid, POL_PLUS if pols[t * sigma + s] else POL_MINUS))
            else:
                sides.append(side_code(lid, POL_NONE))
        genome.append(tuple(sides))
    return tuple(genome)


# --------------------------------------------------------------------------
# Configuration and evaluation


@dataclass(frozen=True)
class GAConfig:
    generations: int
    population: int
    elitist_frac: float
    diversity_frac: float
    p1: float
    pG: float
    W1: float
    WG: float
    min_distance: float
    crossover_attempts: int
    min_size: int
    max_size: int
    label_count: int            # non-eps labels in the table
    tau: int
    model: ModelKind
    extent: int
    max_tiles: int
    max_sims: int
    master_seed: int
    init_eps_weight: float = 1.0
    stop_on_success: bool = False
    success_max_types: int | None = None  # None: derive from target when known
    workers: int = 1

    def __post_init__(self) -> None:
        if self.generations < 1 or self.population < 2:
            raise ValueError("need generations >= 1 and population >= 2")
        if not (0 <= self.elitist_frac <= 1 and 0 <= self.diversity_frac <= 1
                and self.elitist_frac + self.diversity_frac < 1):
            raise ValueError("elitist/diversity fractions must lie in [0,1] and sum below 1")
        if not (0 <= self.p1 <= 1 and 0 <= self.pG <= 1):
            raise ValueError("crossover probabilities must lie in [0,1]")
        if self.W1 < 1 or self.WG < 1:
            raise ValueError("layer factors must be >= 1")
        if self.min_distance < 0 or self.crossover_attempts < 1:
            raise ValueError("bad crossover-pair parameters")
        if not 1 <= self.min_size <= self.max_size:
            raise ValueError("bad genome size bounds")
        if self.label_count < 1:
            raise ValueError("need at least one non-eps label")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.extent < 3 or self.max_tiles < 1 or self.max_sims < 1:
            raise ValueError("bad simulation budgets")
        if self.init_eps_weight < 0:
            raise ValueError("init_eps_weight must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def table(self) -> LabelTable:
        return build_label_table(self.label_count + 1, self.tau)

    def sim_config(self) -> SimConfig:
        return SimConfig(self.extent, self.max_tiles, self.max_sims)


@dataclass(frozen=True)
class Evaluated:
    genome: tuple[Tile, ...]
    outcome: SimOutcome
    metrics: MetricsReport
    fitness: FitnessTriple


def square_type_bound(n: int) -> int | None:
    """Known tile-type ceiling for an n-square at temperature 2 in the plane:
    n+4 up to n=23, then 22 + ceil(log2 n).  Below n=3 nothing is known."""
    if n < 3:
        return None
    if n <= 23:
        return n + 4
    return 22 + math.ceil(math.log2(n))


def evaluate_genome(genome: tuple[Tile, ...], seed: Seed, table: LabelTable,
                    shape: Shape, cfg: GAConfig,
                    path: tuple[int, int]) -> Evaluated:
    """Simulate and score one genome on the substream keyed by `path`."""
    out = simulate(genome, seed, table, cfg.model, cfg.tau, cfg.sim_config(),
                   cfg.master_seed, path)
    rep = evaluate_outcome(out, genome, shape, table, cfg.model, cfg.tau)
    fit = FitnessTriple(
        g=fitness_g(rep.kappa, rep.size, shape.size),
        h=fitness_h(rep.theta, rep.alpha, rep.size, cfg.model.orientation_count),
        f=fitness_f(rep.theta, rep.size),
    )
    return Evaluated(genome, out, rep, fit)


def _eval_task(args) -> tuple[int, Evaluated]:
    slot, genome, seed, table, shape, cfg, gen = args
    return slot, evaluate_genome(genome, seed, table, shape, cfg, (gen, slot))


def _evaluate_batch(tasks: list[tuple[int, tuple[Tile, ...]]], seed: Seed,
                    table: LabelTable, shape: Shape, cfg: GAConfig,
                    gen: int, pool: ProcessPoolExecutor | None) -> dict[int, Evaluated]:
    """Evaluate (slot, genome) pairs; the result only depends on the keyed
    substreams, so pool scheduling cannot change it."""
    args = [(slot, genome, seed, table, shape, cfg, gen) for slot, genome in tasks]
    if pool is None:
        results = map(_eval_task, args)
    else:
        results = pool.map(_eval_task, args, chunksize=max(1, len(args) // 64))
    return dict(results)


# --------------------------------------------------------------------------
# Generational loop


@dataclass(frozen=True)
class SeriesRow:
    generation: int
    g: float
    h: float
    f: float
    theta: int
    omega_size: int
    layers: int


@dataclass
class RunResult:
    rows: list[SeriesRow]
    best: Evaluated                 # best by lexicographic (g, h, f), earliest
    solution: Evaluated | None      # first individual meeting the success test
    success: bool
    success_generation: int | None
    generations_run: int
    table: LabelTable = field(repr=False)
    shape: Shape = field(repr=False)


def _is_success(e: Evaluated, shape: Shape, cfg: GAConfig) -> bool:
    if not (e.fitness.g == 1.0 and e.fitness.h == 1.0 and e.metrics.fullness):
        return False
    cap = cfg.success_max_types
    if cap is None and cfg.model.dims == 2 and shape.n is not None:
        cap = square_type_bound(shape.n)
    return cap is None or 1 + e.metrics.theta <= cap


def _fitness_key(e: Evaluated) -> tuple[float, float, float]:
    return (e.fitness.g, e.fitness.h, e.fitness.f)


def next_generation(pop: list[Evaluated], layers: list[list[int]],
                    new_gen: int, cfg: GAConfig,
                    seed: Seed, table: LabelTable, shape: Shape,
                    pool: ProcessPoolExecutor | None) -> list[Evaluated]:
    """Build generation `new_gen` from its predecessor.

    Schedules are evaluated at the predecessor's index: selection acts on
    that population.  Offspring genomes come from the generation's operator
    stream in a fixed order; their evaluations are keyed by destination slot.
    """
    P = cfg.population
    sched_g = new_gen - 1
    W = schedule_W(sched_g, cfg.W1, cfg.WG, cfg.generations)
    p_cross = schedule_p(sched_g, cfg.p1, cfg.pG, cfg.generations)
    rng = substream(cfg.master_seed, PHASE_GEN, new_gen)
    triples = [e.fitness for e in pop]

    n_elite = math.ceil(cfg.elitist_frac * P)
    n_div = math.ceil(cfg.diversity_frac * P)
    if n_elite + n_div > P:
        raise ValueError("elitist and diversity counts exceed the population")
    elites = select_without_replacement(layers, W, n_elite, rng)
    eset = set(elites)
    rest = [i for i in range(P) if i not in eset]
    div = [rest[int(k)] for k in rng.choice(len(rest), size=n_div, replace=False)]

    carried = [pop[i] for i in elites] + [pop[i] for i in div]
    offspring: list[tuple[int, tuple[Tile, ...]]] = []
    slot = len(carried)
    while slot + len(offspring) < P:
        if rng.random() < p_cross:
            i, j = select_crossover_pair(layers, triples, W, cfg.min_distance,
                                         cfg.crossover_attempts, rng)
            c1, c2 = crossover(pop[i].genome, pop[i].metrics.active,
                               pop[j].genome, pop[j].metrics.active, rng)
            offspring.append((slot + len(offspring), c1))
            if slot + len(offspring) < P:
                offspring.append((slot + len(offspring), c2))
            # a second child past P is dropped
        else:
            i = select_individual(layers, W, rng)
            offspring.append((slot + len(offspring),
                              mutate(pop[i].genome, table, cfg.model, rng)))
    evals = _evaluate_batch(offspring, seed, table, shape, cfg, new_gen, pool)
    return carried + [evals[s] for s, _ in offspring]


def run(cfg: GAConfig, shape: Shape, seed: Seed,
        progress=None) -> RunResult:
    """Full evolutionary run.

    Generation 1 is random; each later one comes from next_generation.  The
    per-generation series row tracks the best individual so far in the
    lexicographic (g, h, f) order, so its g column never decreases.  With
    stop_on_success the loop ends at the first generation containing a
    success (g = h = 1, full bonding, and the type-count cap when one is
    known for the target).
    """
    if shape.dims != cfg.model.dims:
        raise ValueError("target shape dimensionality does not match the model")
    if seed.model is not cfg.model:
        raise ValueError("seed model does not match")
    table = cfg.table()
    pool = None
    if cfg.workers > 1:
        pool = ProcessPoolExecutor(max_workers=cfg.workers)
    try:
        genomes = [
            random_individual(cfg.min_size, cfg.max_size, table, cfg.model,
                              substream(cfg.master_seed, PHASE_INIT, slot),
                              cfg.init_eps_weight)
            for slot in range(cfg.population)
        ]
        evals = _evaluate_batch(list(enumerate(genomes)), seed, table, shape,
                                cfg, 1, pool)
        pop = [evals[s] for s in range(cfg.population)]

        rows: list[SeriesRow] = []
        best: Evaluated | None = None
        solution: Evaluated | None = None
        success_gen: int | None = None
        gen = 1
        while True:
            for e in pop:
                if best is None or _fitness_key(e) > _fitness_key(best):
                    best = e
            layers = build_layers([e.fitness for e in pop])
            rows.append(SeriesRow(gen, best.fitness.g, best.fitness.h,
                                  best.fitness.f, best.metrics.theta,
                                  best.metrics.size, len(layers)))
            if solution is None:
                for e in pop:
                    if _is_success(e, shape, cfg):
                        solution = e
                        success_gen = gen
                        break
            if progress is not None:
                progress(gen, rows[-1], solution is not None)
            if solution is not None and cfg.stop_on_success:
                break
            if gen >= cfg.generations:
                break
            gen += 1
            pop = next_generation(pop, layers, gen, cfg, seed, table, shape, pool)
        return RunResult(rows, best, solution, solution is not None,
                         success_gen, gen, table, shape)
    finally:
        if pool is not None:
            pool.shutdown()


# --------------------------------------------------------------------------
# Series serialization

CSV_HEADER = "generation,g,h,f,theta,omega_size,layers"


def series_csv(rows: list[SeriesRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{r.generation},{r.g!r},{r.h!r},{r.f!r},"
                     f"{r.theta},{r.omega_size},{r.layers}")
    return "\n".join(lines) + "\n"


def parse_series_csv(text: str) -> list[SeriesRow]:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("series file must start with the standard header")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"bad series row: {line!r}")
        rows.append(SeriesRow(int(parts[0]), float(parts[1]), float(parts[2]),
                              float(parts[3]), int(parts[4]), int(parts[5]),
                              int(parts[6])))
    return rows
