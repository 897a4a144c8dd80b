"""Command-line entry point: ``hfdtn <subcommand> [options]``.

Options may come from a JSON file given with ``--config``; flags given on
the command line override it.  Every output embeds the resolved config.
Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import teleport_analysis
from .bounds import BoundInputs, NearSingularWarning, bounds_report
from .experiments import SweepRow, sweep
from .fitting import (
    XI_SCALES,
    FitError,
    fit_fractal_dimension,
    quantize_streets,
    read_segments_csv,
)
from .geometry import DomainError, params_from_df, params_from_p
from .mobility import SpeedProfile, kmh_to_units
from .sampler import Population, busy_street_census, sample_population
from .simulation import (
    FullContamination,
    Horizon,
    NearestNeighbor,
    RadioRange,
    RandomSource,
    SimConfig,
    TargetNode,
    run,
)

log = logging.getLogger("hyperfractal_dtn")

DEFAULTS = {
    "d_F": 3.0,
    "p": None,
    "n": 200,
    "L_max": 5,
    "seed": 0,
    "h": 0.06,
    "speed_profile": "constant",
    "speed_kmh": 40.0,
    "speeds_kmh": None,
    "unit_km": 1.0,
    "reach": "nn",
    "radius": None,
    "epsilon": 0.1,
    "replications": 20,
    "jobs": 1,
    "source": "random",
    "stop": "full",
    "snapshot_times": [],
    "population": None,
    "out": None,
    "out_dir": None,
    "d_F_list": [3.0],
    "n_list": [100, 200, 400, 800, 1600],
    "metric": "broadcast",
    "input": None,
    "A": 1.0,
    "tail_fraction": 0.5,
    "xi": "per-orientation",
    "curve_out": None,
    "tight_turns": False,
}

# keys that only steer where output goes; kept out of the embedded config
_IO_KEYS = {"out", "out_dir", "curve_out", "jobs", "config"}


class InputError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_model(p: argparse.ArgumentParser):
    g = p.add_argument_group("model")
    g.add_argument("--d-F", dest="d_F", type=float, help="fractal dimension (>= 2)")
    g.add_argument("--p", dest="p", type=float, help="mass of the central cross; overrides --d-F")
    g.add_argument("--n", type=int, help="node count")
    g.add_argument("--L-max", dest="L_max", type=int, help="deepest simulated level")
    g.add_argument("--seed", type=int, help="master seed")


def _add_sim(p: argparse.ArgumentParser):
    g = p.add_argument_group("simulation")
    g.add_argument("--h", type=float, help="hop time in seconds")
    g.add_argument("--speed-kmh", dest="speed_kmh", type=float, help="constant speed in km/h")
    g.add_argument("--speed-profile", dest="speed_profile", choices=["constant", "increasing", "decreasing"])
    g.add_argument("--speeds-kmh", dest="speeds_kmh", type=_floats,
                   help="per-level speeds in km/h for level-dependent profiles, e.g. 20,40,60")
    g.add_argument("--unit-km", dest="unit_km", type=float, help="length of a unit map edge in km")
    g.add_argument("--reach", choices=["nn", "radio"], help="nearest-neighbour or radio-range hops")
    g.add_argument("--radius", type=float, help="radio range in map units (default 1/sqrt(n))")
    g.add_argument("--epsilon", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfdtn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", type=Path, help="JSON file with option values")
        return p

    p = command("generate", "sample a population and write it as JSON lines")
    _add_model(p)
    _add_sim(p)
    p.add_argument("--out", type=Path)

    p = command("simulate", "run one broadcast")
    _add_model(p)
    _add_sim(p)
    p.add_argument("--population", type=Path, help="population file from 'generate'")
    p.add_argument("--source", help="node id or 'random'")
    p.add_argument("--stop", help="'full', 'target:ID' or 'horizon:SECONDS'")
    p.add_argument("--snapshot-times", dest="snapshot_times", type=_floats)
    p.add_argument("--out-dir", dest="out_dir", type=Path)

    p = command("sweep", "replicated runs over a (d_F, n) grid")
    _add_model(p)
    _add_sim(p)
    p.add_argument("--d-F-list", dest="d_F_list", type=_floats)
    p.add_argument("--n-list", dest="n_list", type=_ints)
    p.add_argument("--replications", type=int)
    p.add_argument("--metric", choices=["broadcast", "pair"])
    p.add_argument("--jobs", type=int, help="parallel worker processes for replications")
    p.add_argument("--out", type=Path)

    p = command("bounds", "evaluate the closed-form bounds")
    _add_model(p)
    _add_sim(p)
    p.add_argument("--tight-turns", dest="tight_turns", action="store_true")
    p.add_argument("--out", type=Path)

    p = command("fit", "fit d_F to a street traffic table")
    p.add_argument("--input", type=Path, help="CSV: segment_id,street_hint,length_km,density_veh_per_km")
    p.add_argument("--A", dest="A", type=float, help="quantization factor (>= 1)")
    p.add_argument("--tail-fraction", dest="tail_fraction", type=float)
    p.add_argument("--xi", choices=sorted(XI_SCALES), help="cumulate one orientation or both")
    p.add_argument("--out", type=Path)
    p.add_argument("--curve-out", dest="curve_out", type=Path, help="write the xi,lambda curve as CSV")

    p = command("snapshots", "record node states at chosen times")
    _add_model(p)
    _add_sim(p)
    p.add_argument("--population", type=Path)
    p.add_argument("--source")
    p.add_argument("--snapshot-times", dest="snapshot_times", type=_floats)
    p.add_argument("--out-dir", dest="out_dir", type=Path)
    return parser


def resolve_config(ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose")}
    path = flags.pop("config", None)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise InputError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a JSON object")
        loaded = loaded.get("config", loaded)
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    cfg.update(flags)
    if cfg["replications"] < 1:
        raise InputError("replications must be >= 1")
    if cfg["jobs"] < 1:
        raise InputError("jobs must be >= 1")
    if not cfg["unit_km"] > 0:
        raise InputError("unit_km must be positive")
    return cfg


def _embedded(cfg: dict, command: str) -> dict:
    out = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items()) if k not in _IO_KEYS}
    out["command"] = command
    return out


def _params(cfg: dict, n: int | None = None):
    n = cfg["n"] if n is None else n
    if cfg["p"] is not None:
        return params_from_p(cfg["p"], n, cfg["L_max"])
    return params_from_df(cfg["d_F"], n, cfg["L_max"])


def _speed(cfg: dict) -> SpeedProfile:
    kind = cfg["speed_profile"]
    u = cfg["unit_km"]
    if kind == "constant":
        return SpeedProfile.constant(kmh_to_units(cfg["speed_kmh"], u))
    if not cfg["speeds_kmh"]:
        raise InputError(f"speed profile {kind!r} needs --speeds-kmh")
    speeds = [kmh_to_units(s, u) for s in cfg["speeds_kmh"]]
    return SpeedProfile.increasing(speeds) if kind == "increasing" else SpeedProfile.decreasing(speeds)


def _reach(cfg: dict, n: int):
    if cfg["reach"] == "nn":
        return NearestNeighbor()
    return RadioRange(cfg["radius"] if cfg["radius"] is not None else 1.0 / math.sqrt(n))


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _json_safe(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, path: Path | None):
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _population(cfg: dict) -> Population:
    if cfg.get("population"):
        path = Path(cfg["population"])
        try:
            text = path.read_text()
        except FileNotFoundError:
            raise InputError(f"population file not found: {path}") from None
        try:
            pop = Population.from_jsonl(text)
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise InputError(f"population file {path}: {exc}") from None
        header = json.loads(text.splitlines()[0]) if text.strip() else {}
        if "config" in header:
            hc = header["config"]
            try:
                params = params_from_p(hc["p"], len(pop), hc["L_max"]) if hc.get("p") is not None \
                    else params_from_df(hc["d_F"], len(pop), hc["L_max"])
            except (KeyError, DomainError):
                params = None
            pop = Population(pop.orientation, pop.level, pop.index, pop.position, pop.direction, pop.speed, params)
        return pop
    return sample_population(_params(cfg), cfg["seed"], _speed(cfg))


def _source(cfg: dict, n: int):
    src = cfg["source"]
    if src is None or str(src) == "random":
        return RandomSource(cfg["seed"])
    try:
        node = int(src)
    except ValueError:
        raise InputError(f"source must be a node id or 'random', got {src!r}") from None
    if not 0 <= node < n:
        raise InputError(f"source {node} outside 0..{n - 1}")
    return node


def _stop(cfg: dict):
    text = str(cfg["stop"])
    if text == "full":
        return FullContamination()
    kind, _, value = text.partition(":")
    try:
        if kind == "target":
            return TargetNode(int(value))
        if kind == "horizon":
            return Horizon(float(value))
    except ValueError:
        pass
    raise InputError(f"invalid stop rule {text!r}")


# -- subcommands ------------------------------------------------------------

def cmd_generate(cfg: dict) -> int:
    params = _params(cfg)
    pop = sample_population(params, cfg["seed"], _speed(cfg))
    header = json.dumps({"config": _json_safe(_embedded(cfg, "generate"))}, sort_keys=True)
    _emit(header + "\n" + pop.to_jsonl(), cfg["out"])
    census = busy_street_census(pop)
    if cfg["out"] is not None:
        sys.stdout.write(dumps({"records": len(pop), "census": census.to_dict()}))
    else:
        sys.stderr.write(dumps({"records": len(pop), "census": census.to_dict()}))
    return 0


def _simulate(cfg: dict, command: str, snapshot_times) -> tuple[Population, object, dict]:
    pop = _population(cfg)
    n = len(pop)
    config = SimConfig(cfg["h"], _reach(cfg, n), _stop(cfg), _source(cfg, n), tuple(snapshot_times))
    res = run(pop, config)
    reports = teleport_analysis(res)
    doc = {
        "config": _embedded(cfg, command),
        "sim_config": config.to_dict(),
        "summary": res.summary(),
        "teleport": [r.to_dict() for r in reports],
        "census": busy_street_census(pop).to_dict(),
    }
    return pop, res, doc


def _write_infections(pop: Population, res, path: Path):
    rows = [["id", "orientation", "level", "index", "infection_time", "mechanism", "infected_by"]]
    mech = {0: "source", 1: "hop", 2: "handoff", -1: ""}
    for i in range(len(pop)):
        t = res.infection_time[i]
        rows.append([i, "HV"[pop.orientation[i]], int(pop.level[i]), int(pop.index[i]),
                     repr(float(t)) if np.isfinite(t) else "", mech[int(res.mechanism[i])],
                     int(res.infected_by[i]) if res.infected_by[i] >= 0 else ""])
    _write_csv(path, rows)


def _write_snapshots(pop: Population, res, path: Path, cfg: dict, command: str):
    rows = [["t", "id", "orientation", "level", "index", "position", "infected"]]
    for snap in res.snapshots:
        for i in range(len(pop)):
            rows.append([repr(snap.t), i, "HV"[pop.orientation[i]], int(pop.level[i]), int(pop.index[i]),
                         repr(float(snap.position[i])), int(snap.infected[i])])
    _write_csv(path, rows, _embedded(cfg, command))


def _write_csv(path: Path, rows, config: dict | None = None):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if config is not None:
            fh.write("# config=" + json.dumps(_json_safe(config), sort_keys=True) + "\n")
        csv.writer(fh, lineterminator="\n").writerows(rows)


def cmd_simulate(cfg: dict) -> int:
    pop, res, doc = _simulate(cfg, "simulate", cfg["snapshot_times"])
    if cfg["out_dir"] is None:
        sys.stdout.write(dumps(doc))
        return 0
    out = Path(cfg["out_dir"])
    _emit(dumps(doc), out / "result.json")
    _write_infections(pop, res, out / "infection_times.csv")
    if res.snapshots:
        _write_snapshots(pop, res, out / "snapshots.csv", cfg, "simulate")
    return 0


def cmd_snapshots(cfg: dict) -> int:
    times = cfg["snapshot_times"]
    if not times:
        raise InputError("snapshots needs --snapshot-times")
    pop, res, doc = _simulate(cfg, "snapshots", times)
    out = Path(cfg["out_dir"] or ".")
    _write_snapshots(pop, res, out / "snapshots.csv", cfg, "snapshots")
    _emit(dumps({"config": doc["config"], "teleport": doc["teleport"], "summary": doc["summary"]}),
          out / "teleport.json")
    return 0


def cmd_sweep(cfg: dict) -> int:
    rows = sweep(cfg["d_F_list"], cfg["n_list"], cfg["replications"], cfg["seed"], cfg["h"], _speed(cfg),
                 cfg["L_max"], cfg["epsilon"], cfg["jobs"], cfg["metric"],
                 NearestNeighbor() if cfg["reach"] == "nn" else RadioRange(cfg["radius"] or 0.05))
    buf = ["# config=" + json.dumps(_json_safe(_embedded(cfg, "sweep")), sort_keys=True)]
    buf.append(",".join(SweepRow.COLUMNS))
    for r in sorted(rows, key=lambda r: (r.d_F, r.n)):
        buf.append(",".join(_fmt(x) for x in r.values()))
    _emit("\n".join(buf) + "\n", cfg["out"])
    return 0


def cmd_bounds(cfg: dict) -> int:
    params = _params(cfg)
    speed = _speed(cfg)
    inp = BoundInputs(params, cfg["h"], speed.min_speed(cfg["L_max"]), cfg["epsilon"], cfg["reach"] == "radio",
                      cfg["tight_turns"])
    _emit(dumps({"config": _embedded(cfg, "bounds"), "bounds": bounds_report(inp)}), cfg["out"])
    return 0


def cmd_fit(cfg: dict) -> int:
    if cfg["input"] is None:
        raise InputError("fit needs --input")
    path = Path(cfg["input"])
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None
    segments = read_segments_csv(text)
    streets = quantize_streets(segments, cfg["A"])
    report = fit_fractal_dimension(streets, cfg["tail_fraction"], XI_SCALES[cfg["xi"]])
    doc = {"config": _embedded(cfg, "fit"), "streets": len(streets), "fit": report.to_dict()}
    _emit(dumps(doc), cfg["out"])
    if cfg["curve_out"] is not None:
        _write_csv(Path(cfg["curve_out"]), [["xi", "lambda"]] + [[repr(a), repr(b)] for a, b in report.cumulated_curve])
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
    "fit": cmd_fit,
    "snapshots": cmd_snapshots,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(ns)
        return COMMANDS[ns.command](cfg)
    except NearSingularWarning as exc:  # only raised when warnings are errors
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, DomainError, FitError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI maps every other failure to exit code 1
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
