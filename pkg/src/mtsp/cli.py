"""Command-line entry point.

Subcommands: solve (evolutionary search), verify (exhaustive constraint
check), replay (single deterministic simulation), export-plots (best-so-far
series columns plus figures from a finished run).

Exit codes: 0 success, 1 constraint failure, 2 invalid input, 3 I/O error,
4 inconclusive verification.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .metrics import (FAIL, INCONCLUSIVE, PASS, Shape, exhaustive_verify)
from .model import (ModelKind, Seed, TileFormatError, format_tiles,
                    parse_tiles)
from .rng import PHASE_SIM, substream
from .simulator import format_trace, simulate_once
from .evolution import (CSV_HEADER, GAConfig, RunResult, parse_series_csv,
                        run, series_csv)

EXIT_OK = 0
EXIT_CONSTRAINT = 1
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_INCONCLUSIVE = 4


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Config files: flat key=value, '#' comments, unknown keys rejected.

_GA_KEYS = {
    "generations": int,
    "population": int,
    "elitist": float,
    "diversity": float,
    "p1": float,
    "pG": float,
    "W1": float,
    "WG": float,
    "min_distance": float,
    "crossover_attempts": int,
    "min_size": int,
    "max_size": int,
    "labels": int,
    "tau": int,
    "model": str,
    "extent": int,
    "max_tiles": int,
    "max_sims": int,
    "master_seed": int,
    "init_eps_weight": float,
    "stop_on_success": int,
    "success_max_types": int,
    "workers": int,
}
_SHAPE_KEYS = {"square": int, "cube": int, "shape_file": str, "seed_file": str}
_ALL_KEYS = {**_GA_KEYS, **_SHAPE_KEYS}

_DEFAULTS = {
    "generations": 1000,
    "population": 1000,
    "elitist": 0.1,
    "diversity": 0.05,
    "p1": 0.3,
    "pG": 0.7,
    "W1": 1.0,
    "WG": 30.0,
    "min_distance": 0.0,
    "crossover_attempts": 1000,
    "max_sims": 10,
    "master_seed": 1,
    "init_eps_weight": 1.0,
    "stop_on_success": 0,
    "workers": 1,
}

_REQUIRED = ("model", "tau", "extent", "max_tiles", "min_size", "max_size",
             "labels")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse the flat key=value format; typo'd keys are hard errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _ALL_KEYS[key](val)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {val!r}") from None
    return values


def _resolve_model(values: dict) -> ModelKind:
    try:
        return ModelKind(values["model"])
    except (KeyError, ValueError):
        raise ConfigError(f"model must be one of 2d/2dr/3dr, got {values.get('model')!r}") from None


def resolve_shape(values: dict, m: ModelKind, base: Path) -> Shape:
    given = [k for k in ("square", "cube", "shape_file") if k in values]
    if len(given) != 1:
        raise ConfigError("config needs exactly one of square=, cube=, shape_file=")
    if given[0] == "square":
        if m.dims != 2:
            raise ConfigError("square targets need a two-dimensional model")
        return Shape.square(values["square"])
    if given[0] == "cube":
        if m.dims != 3:
            raise ConfigError("cube targets need the 3dr model")
        return Shape.cube(values["cube"])
    cells = []
    path = base / values["shape_file"]
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != m.dims:
            raise ConfigError(f"{path}:{lineno}: cell needs {m.dims} coordinates")
        cells.append(tuple(int(p) for p in parts))
    return Shape.from_cells(cells)


def resolve_seed(values: dict, m: ModelKind, base: Path) -> Seed:
    if "seed_file" not in values:
        return Seed.simple(m)
    tf = parse_tiles((base / values["seed_file"]).read_text(), m)
    seed = tf.seed()
    if seed is None:
        raise ConfigError(f"{values['seed_file']} contains no seed lines")
    if tf.tiles:
        raise ConfigError("seed files must contain only seed lines")
    return seed


def build_ga_config(values: dict, overrides: dict) -> GAConfig:
    merged = {**_DEFAULTS, **values}
    for k, v in overrides.items():
        if v is not None:
            merged[k] = v
    missing = [k for k in _REQUIRED if k not in merged]
    if missing:
        raise ConfigError(f"config is missing required keys: {', '.join(missing)}")
    m = _resolve_model(merged)
    try:
        return GAConfig(
            generations=merged["generations"],
            population=merged["population"],
            elitist_frac=merged["elitist"],
            diversity_frac=merged["diversity"],
            p1=merged["p1"],
            pG=merged["pG"],
            W1=merged["W1"],
            WG=merged["WG"],
            min_distance=merged["min_distance"],
            crossover_attempts=merged["crossover_attempts"],
            min_size=merged["min_size"],
            max_size=merged["max_size"],
            label_count=merged["labels"],
            tau=merged["tau"],
            model=m,
            extent=merged["extent"],
            max_tiles=merged["max_tiles"],
            max_sims=merged["max_sims"],
            master_seed=merged["master_seed"],
            init_eps_weight=merged["init_eps_weight"],
            stop_on_success=bool(merged["stop_on_success"]),
            success_max_types=merged.get("success_max_types"),
            workers=merged["workers"],
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None


def format_config(cfg: GAConfig, values: dict) -> str:
    """The config actually used, in the same key=value format."""
    out = {
        "model": cfg.model.value,
        "tau": cfg.tau,
        "extent": cfg.extent,
        "max_tiles": cfg.max_tiles,
        "max_sims": cfg.max_sims,
        "generations": cfg.generations,
        "population": cfg.population,
        "elitist": cfg.elitist_frac,
        "diversity": cfg.diversity_frac,
        "p1": cfg.p1,
        "pG": cfg.pG,
        "W1": cfg.W1,
        "WG": cfg.WG,
        "min_distance": cfg.min_distance,
        "crossover_attempts": cfg.crossover_attempts,
        "min_size": cfg.min_size,
        "max_size": cfg.max_size,
        "labels": cfg.label_count,
        "init_eps_weight": cfg.init_eps_weight,
        "stop_on_success": int(cfg.stop_on_success),
        "workers": cfg.workers,
        "master_seed": cfg.master_seed,
    }
    if cfg.success_max_types is not None:
        out["success_max_types"] = cfg.success_max_types
    for k in ("square", "cube", "shape_file", "seed_file"):
        if k in values:
            out[k] = values[k]
    return "".join(f"{k} = {v}\n" for k, v in out.items())


# --------------------------------------------------------------------------
# Subcommands


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text, path)


def cmd_solve(args) -> int:
    values = _load_config(args.config)
    overrides = {"master_seed": args.seed, "workers": args.workers,
                 "model": args.model}
    cfg = build_ga_config(values, overrides)
    base = Path(args.config).parent
    shape = resolve_shape(values, cfg.model, base)
    seed = resolve_seed(values, cfg.model, base)

    out_dir = Path(args.out or "run-out")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"cannot create output directory: {e}", file=sys.stderr)
        return EXIT_IO

    def progress(gen, row, have_solution):
        if gen == 1 or gen % 10 == 0 or have_solution:
            print(f"gen {gen}: g={row.g:.4f} h={row.h:.4f} f={row.f:.4f} "
                  f"layers={row.layers}{' [solved]' if have_solution else ''}",
                  flush=True)

    t0 = time.perf_counter()
    result = run(cfg, shape, seed, progress=progress)
    wall = time.perf_counter() - t0

    try:
        _write_artifacts(out_dir, cfg, values, result, wall)
    except OSError as e:
        print(f"cannot write artifacts: {e}", file=sys.stderr)
        return EXIT_IO
    status = "success" if result.success else "no success"
    print(f"{status} after {result.generations_run} generations "
          f"({wall:.1f}s); artifacts in {out_dir}")
    return EXIT_OK if result.success else EXIT_CONSTRAINT


def _write_artifacts(out_dir: Path, cfg: GAConfig, values: dict,
                     result: RunResult, wall: float) -> None:
    from .plotting import (object_cell_types, save_fitness_figure,
                           save_object_figure)

    (out_dir / "config.used").write_text(format_config(cfg, values))
    (out_dir / "series.csv").write_text(series_csv(result.rows))

    chosen = result.solution if result.solution is not None else result.best
    tiles = [(i, t) for i, t in enumerate(chosen.genome)]
    (out_dir / "best_tiles.txt").write_text(
        format_tiles(tiles, result.table, cfg.model,
                     seed=chosen.outcome.seed_final))
    (out_dir / "trace.txt").write_text(format_trace(chosen.outcome.trace))

    lines = [
        f"success = {int(result.success)}",
        f"success_generation = {result.success_generation}",
        f"generations_run = {result.generations_run}",
        f"master_seed = {cfg.master_seed}",
        f"wall_seconds = {wall:.2f}",
        f"best_g = {chosen.fitness.g!r}",
        f"best_h = {chosen.fitness.h!r}",
        f"best_f = {chosen.fitness.f!r}",
        f"types_used = {1 + chosen.metrics.theta}",
        f"object_size = {chosen.metrics.size}",
        f"bonds = {chosen.metrics.b_final}",
        f"bonds_max = {chosen.metrics.b_star}",
    ]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    save_fitness_figure(result.rows, str(out_dir / "fitness_evolution.png"))
    save_object_figure(object_cell_types(chosen.outcome),
                       str(out_dir / "object.png"),
                       title=f"final object ({chosen.metrics.size} tiles)")


def cmd_verify(args) -> int:
    values = _load_config(args.config)
    m = ModelKind(args.model) if args.model else _resolve_model(values)
    base = Path(args.config).parent
    shape = resolve_shape(values, m, base)
    tau = values.get("tau")
    if tau is None:
        raise ConfigError("verify needs tau in the config")
    try:
        text = Path(args.tiles).read_text()
    except OSError as e:
        print(f"cannot read tile file: {e}", file=sys.stderr)
        return EXIT_IO
    tf = parse_tiles(text, m)
    if not tf.tiles:
        raise ConfigError("tile file has no tile lines")
    seed = tf.seed()
    if seed is None:
        raise ConfigError("tile file has no seed lines")
    genome = tuple(t for _, t in tf.tiles)
    table = tf.label_table(tau)
    kw = {}
    if args.state_budget is not None:
        kw["state_budget"] = args.state_budget
    res = exhaustive_verify(genome, seed, shape, table, m, tau,
                            bound=args.bound, **kw)
    print(res.report(), end="")
    if res.any_fail:
        return EXIT_CONSTRAINT
    if INCONCLUSIVE in (res.c1, res.c2, res.c3):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_replay(args) -> int:
    values = _load_config(args.config)
    m = ModelKind(args.model) if args.model else _resolve_model(values)
    tau = values.get("tau")
    extent = values.get("extent")
    max_tiles = values.get("max_tiles")
    if tau is None or extent is None or max_tiles is None:
        raise ConfigError("replay needs tau, extent and max_tiles in the config")
    try:
        text = Path(args.tiles).read_text()
    except OSError as e:
        print(f"cannot read tile file: {e}", file=sys.stderr)
        return EXIT_IO
    tf = parse_tiles(text, m)
    if not tf.tiles:
        raise ConfigError("tile file has no tile lines")
    seed = tf.seed() or Seed.simple(m)
    genome = tuple(t for _, t in tf.tiles)
    table = tf.label_table(tau)
    from .simulator import SimConfig

    master = args.seed if args.seed is not None else values.get("master_seed", 1)
    rng = substream(master, PHASE_SIM, 0)
    out = simulate_once(genome, seed, table, m, tau, SimConfig(extent, max_tiles), rng)
    dump = format_trace(out.trace)
    header = (f"# master_seed={master} terminal={int(out.terminal)} "
              f"size={out.size} bonds={out.bonds}\n")
    if args.out:
        try:
            Path(args.out).write_text(header + dump)
        except OSError as e:
            print(f"cannot write trace: {e}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(header + dump)
    return EXIT_OK


def cmd_export_plots(args) -> int:
    from .plotting import save_fitness_figure

    run_dir = Path(args.run_dir)
    series_path = run_dir / "series.csv"
    if not series_path.exists():
        print(f"no series.csv in {run_dir}", file=sys.stderr)
        return EXIT_INVALID
    rows = parse_series_csv(series_path.read_text())
    if not rows:
        raise ConfigError("series.csv has no data rows")
    for prev, cur in zip(rows, rows[1:]):
        if cur.g < prev.g:
            raise ConfigError(
                f"best-so-far g regresses at generation {cur.generation}")
    out_dir = Path(args.out) if args.out else run_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        cols = ["generation\tg\th\tf"]
        cols += [f"{r.generation}\t{r.g!r}\t{r.h!r}\t{r.f!r}" for r in rows]
        (out_dir / "best_so_far.tsv").write_text("\n".join(cols) + "\n")
        save_fitness_figure(rows, str(out_dir / "fitness_evolution.png"))
    except OSError as e:
        print(f"cannot write plot outputs: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote best_so_far.tsv and fitness_evolution.png to {out_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mtsp",
        description="Evolutionary search, simulation and verification for "
                    "minimum tile sets.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run the evolutionary search")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None,
                    help="master rng seed (overrides the config)")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--model", choices=[m.value for m in ModelKind])
    sp.add_argument("--out", help="artifact directory (default run-out)")
    sp.set_defaults(func=cmd_solve)

    vp = sub.add_parser("verify", help="exhaustively check C1/C2/C3")
    vp.add_argument("tiles", help="tile-set file with seed lines")
    vp.add_argument("--config", required=True,
                    help="config supplying shape, tau and model")
    vp.add_argument("--model", choices=[m.value for m in ModelKind])
    vp.add_argument("--bound", type=int, default=None,
                    help="growth bound in tiles (default: target size)")
    vp.add_argument("--state-budget", type=int, default=None,
                    help="abort with INCONCLUSIVE past this many states")
    vp.set_defaults(func=cmd_verify)

    rp = sub.add_parser("replay", help="one deterministic simulation")
    rp.add_argument("tiles")
    rp.add_argument("--config", required=True)
    rp.add_argument("--seed", type=int, default=None)
    rp.add_argument("--model", choices=[m.value for m in ModelKind])
    rp.add_argument("--out", help="trace file (default stdout)")
    rp.set_defaults(func=cmd_replay)

    ep = sub.add_parser("export-plots",
                        help="series columns and figures from a run directory")
    ep.add_argument("run_dir")
    ep.add_argument("--out", help="output directory (default: run dir)")
    ep.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TileFormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
