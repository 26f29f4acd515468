"""Command-line front end: seeded experiment runs and the bounds calculator.

    slicekit run --protocol mod-jk --n 1000 --slices 20 --c 20 --cycles 500 --seed 42
    slicekit run --preset fig4b-desk --seeds 0..9 --jobs 4
    slicekit run --config exp.cfg --cycles 50
    slicekit bounds samples --p-hat 0.5 --d 0.005 --alpha 0.05
    slicekit bounds lemma --n 10000 --p 0.01 --beta 0.5 --validate

Settings are resolved as built-in defaults < preset < config file < flags.
A config file holds one `key = value` per line (keys as the long flags, with
`-` or `_`), `#` starts a comment. Each run writes `<label>_seed<S>.csv` and
`<label>_seed<S>.json` into --out, $SLICEKIT_OUT_DIR or ./slicekit-out.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import analysis
from .core import SliceSpec
from .engine import (ChurnCorrelation, ChurnSchedule, Concurrency, Protocol, RunResult,
                     SimConfig, SimulationAborted, run)
from .metrics import CycleMetrics
from .ranking import DEFAULT_WINDOW
from .sampling import SamplingMode

logger = logging.getLogger("slicekit")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
OUT_ENV = "SLICEKIT_OUT_DIR"
CSV_HEADER = ("cycle", "protocol", "gdm", "sdm", "messages", "unsuccessful_swaps", "live_nodes")
THRESHOLD_FACTOR = 2.0  # cycles-to-threshold: first cycle with SDM <= 2 x final SDM


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- settings

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*allowed: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip().lower()
        if t not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {text!r}")
        return t
    return parse


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none") else int(text)


def _boundaries(text: str) -> Optional[tuple[float, ...]]:
    if text.strip().lower() in ("", "none"):
        return None
    return tuple(float(x) for x in text.split(","))


def parse_seeds(text: str) -> list[int]:
    """`7` or an inclusive range `a..b`."""
    lo, sep, hi = text.partition("..")
    first = int(lo)
    last = int(hi) if sep else first
    if last < first:
        raise ValueError(f"empty seed range {text!r}")
    return list(range(first, last + 1))


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str


KEYS: dict[str, Key] = {
    "protocol": Key(_choice(*(p.value for p in Protocol)), "mod-jk", "jk, mod-jk, ranking or ranking-window"),
    "n": Key(int, 1000, "initial number of nodes"),
    "c": Key(int, 20, "view size"),
    "slices": Key(int, 10, "number of equal-width slices"),
    "boundaries": Key(_boundaries, None, "explicit slice boundaries 0,b1,...,1 (overrides --slices)"),
    "cycles": Key(int, 100, "number of cycles"),
    "seed": Key(int, 0, "run seed"),
    "seeds": Key(parse_seeds, None, "seed sweep a..b (inclusive), overrides --seed"),
    "sampling": Key(_choice("cyclon", "uniform"), "cyclon", "peer sampling service"),
    "concurrency": Key(_choice("none", "half", "full"), "none", "message overlap"),
    "attr_dist": Key(_choice("uniform", "exponential", "lognormal", "pareto"), "uniform",
                     "attribute distribution"),
    "window": Key(int, DEFAULT_WINDOW, "sliding-window capacity in bits (ranking-window)"),
    "stop_when_sorted": Key(_bool, False, "ordering: stop once sorted and churn is over"),
    "churn_leave": Key(float, 0.0, "fraction of nodes leaving per churn event"),
    "churn_join": Key(float, 0.0, "fraction of nodes joining per churn event"),
    "churn_period": Key(int, 1, "cycles between churn events"),
    "churn_first": Key(int, 1, "cycle of the first churn event"),
    "churn_last": Key(_optional_int, None, "cycle after which churn stops"),
    "churn_correlation": Key(_choice("correlated", "uniform"), "correlated",
                             "who leaves/joins: lowest/highest attributes or anybody"),
    "jobs": Key(int, 1, "parallel worker processes for sweeps"),
    "out": Key(str, None, "output directory"),
    "preset": Key(str, None, "named experiment, see --list-presets"),
}


@dataclass
class Settings:
    values: dict[str, Any] = field(default_factory=dict)
    origin: dict[str, str] = field(default_factory=dict)

    def set(self, key: str, value: Any, origin: str) -> None:
        self.values[key] = value
        self.origin[key] = origin

    def get(self, key: str) -> Any:
        return self.values.get(key, KEYS[key].default)

    def where(self, *keys: str) -> str:
        spots = [f"{k} from {self.origin[k]}" for k in keys if k in self.origin]
        return f" ({'; '.join(spots)})" if spots else ""


def read_config_file(path: Path, settings: Settings) -> None:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file: {exc.strerror}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip().replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        try:
            settings.set(key, KEYS[key].parse(value.strip()), where)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from exc


def build_config(settings: Settings, seed: int) -> SimConfig:
    """SimConfig from resolved settings; errors name the offending keys."""
    get = settings.get
    n, c = get("n"), get("c")
    if not n > c >= 1:
        raise ConfigError(f"need n > c >= 1, got n={n}, c={c}{settings.where('n', 'c')}")
    if get("cycles") < 1:
        raise ConfigError(f"cycles must be at least 1{settings.where('cycles')}")
    try:
        bounds = get("boundaries")
        spec = SliceSpec(bounds) if bounds is not None else SliceSpec.equal(get("slices"))
    except ValueError as exc:
        raise ConfigError(f"bad slices: {exc}{settings.where('slices', 'boundaries')}") from exc
    try:
        churn = ChurnSchedule(
            leave_rate=get("churn_leave"), join_rate=get("churn_join"),
            event_period=get("churn_period"), first_cycle=get("churn_first"),
            last_cycle=get("churn_last"), correlation=ChurnCorrelation(get("churn_correlation")))
    except ValueError as exc:
        raise ConfigError(f"bad churn schedule: {exc}"
                          f"{settings.where('churn_leave', 'churn_join', 'churn_period')}") from exc
    try:
        return SimConfig(
            n=n, c=c, slices=spec, protocol=Protocol(get("protocol")), cycles=get("cycles"),
            seed=seed, sampling=SamplingMode[get("sampling").upper()],
            concurrency=Concurrency[get("concurrency").upper()], churn=churn,
            attr_dist=get("attr_dist"), window=get("window"),
            stop_when_sorted=get("stop_when_sorted"))
    except ValueError as exc:
        raise ConfigError(f"{exc}{settings.where('seed', 'seeds', 'window')}") from exc


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class Preset:
    """Shared settings plus one override set per compared run. Keys a preset
    varies between its runs win over the config file and flags."""
    doc: str
    base: dict[str, Any]
    runs: dict[str, dict[str, Any]]


_DESK = {"n": 1000}  # 10^4 nodes in the original experiments: every preset is scaled 1/10
_RANKING_SETUP = {**_DESK, "c": 10, "sampling": "uniform", "slices": 100}

PRESETS: dict[str, Preset] = {
    "fig4a-desk": Preset(
        "GDM against SDM for mod-JK. Scale: n 10^4 -> 1000; c=20, 100 slices kept.",
        {**_DESK, "c": 20, "slices": 100, "cycles": 500, "stop_when_sorted": True},
        {"mod-jk": {"protocol": "mod-jk"}}),
    "fig4b-desk": Preset(
        "JK against mod-JK from the same initial values. Scale: n 10^4 -> 1000; c=20, 10 slices kept.",
        {**_DESK, "c": 20, "slices": 10, "cycles": 500, "stop_when_sorted": True},
        {"jk": {"protocol": "jk"}, "mod-jk": {"protocol": "mod-jk"}}),
    "fig4c-desk": Preset(
        "Unsuccessful swaps of JK and mod-JK under no, half and full concurrency. "
        "Scale: n 10^4 -> 1000; c=20, 100 slices kept.",
        {**_DESK, "c": 20, "slices": 100, "cycles": 500, "stop_when_sorted": True},
        {f"{p}-{k}": {"protocol": p, "concurrency": k}
         for p in ("jk", "mod-jk") for k in ("none", "half", "full")}),
    "fig4d-desk": Preset(
        "mod-JK without and with full concurrency. Scale: n 10^4 -> 1000; c=20, 100 slices kept.",
        {**_DESK, "c": 20, "slices": 100, "cycles": 500, "stop_when_sorted": True,
         "protocol": "mod-jk"},
        {"none": {"concurrency": "none"}, "full": {"concurrency": "full"}}),
    "fig5a-desk": Preset(
        "Ordering (mod-JK) against ranking, static population. Scale: n 10^4 -> 1000; "
        "c=10 uniform views and 100 slices kept; ordering stops once sorted, its SDM "
        "cannot change afterwards.",
        {**_RANKING_SETUP, "cycles": 2000},
        {"ordering": {"protocol": "mod-jk", "stop_when_sorted": True},
         "ranking": {"protocol": "ranking"}}),
    "fig5b-desk": Preset(
        "Ranking over uniform views against the Cyclon variant. Scale: n 10^4 -> 1000; "
        "c=10, 100 slices kept; 1000 cycles.",
        {**_RANKING_SETUP, "protocol": "ranking", "cycles": 1000},
        {"uniform": {"sampling": "uniform"}, "cyclon": {"sampling": "cyclon"}}),
    "fig5c-desk": Preset(
        "Churn burst: 0.1% of the nodes leave (lowest attributes) and join (above the "
        "maximum) every cycle during cycles 1..200, then none. Scale: n 10^4 -> 1000, "
        "so one node each way per cycle; c=10 uniform, 100 slices; 2000 cycles.",
        {**_RANKING_SETUP, "cycles": 2000, "churn_leave": 0.001, "churn_join": 0.001,
         "churn_period": 1, "churn_first": 1, "churn_last": 200},
        {"ordering": {"protocol": "mod-jk"}, "ranking": {"protocol": "ranking"}}),
    "fig5d-desk": Preset(
        "Regular churn: 0.1% leave and join every 10 cycles. Scale: n 10^4 -> 1000; "
        "c=10 uniform, 100 slices; 1000 cycles; window 10^4 -> 2000 bits, so it fills "
        "after about 170 cycles instead of 800 and the 500..1000 trend sees a full window.",
        {**_RANKING_SETUP, "cycles": 1000, "churn_leave": 0.001, "churn_join": 0.001,
         "churn_period": 10, "churn_first": 10, "window": 2000},
        {"ordering": {"protocol": "mod-jk"}, "ranking": {"protocol": "ranking"},
         "ranking-window": {"protocol": "ranking-window"}}),
}


def preset_configs(name: str, seed: int, settings: Optional[Settings] = None) -> list[tuple[str, SimConfig]]:
    """(label, config) for every run of a preset, on top of optional settings."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    preset = PRESETS[name]
    resolved = Settings()
    for key, value in preset.base.items():
        resolved.set(key, value, f"preset {name}")
    if settings is not None:
        for key, value in settings.values.items():
            resolved.set(key, value, settings.origin[key])
    out = []
    for label, overrides in preset.runs.items():
        s = Settings(dict(resolved.values), dict(resolved.origin))
        for key, value in overrides.items():
            if key in settings_keys(settings):
                logger.warning("preset %s fixes %s for run %s; ignoring the override", name, key, label)
            s.set(key, value, f"preset {name}")
        out.append((label, build_config(s, seed)))
    return out


def settings_keys(settings: Optional[Settings]) -> set[str]:
    return set(settings.values) if settings is not None else set()


# ---------------------------------------------------------------- output

def _number(x: Optional[float]) -> str:
    if x is None:
        return ""
    return repr(float(x))


def metrics_rows(protocol: Protocol, metrics: Sequence[CycleMetrics]) -> list[list[str]]:
    return [[str(m.cycle), protocol.value, _number(m.gdm), _number(m.sdm), str(m.messages_sent),
             str(m.unsuccessful_swaps), str(m.live_nodes)] for m in metrics]


def write_csv(path: Path, protocol: Protocol, metrics: Sequence[CycleMetrics]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(CSV_HEADER)
        w.writerows(metrics_rows(protocol, metrics))


def cycles_to_threshold(sdm: np.ndarray, factor: float = THRESHOLD_FACTOR) -> Optional[int]:
    """First cycle whose SDM is within `factor` x the final SDM."""
    if sdm.size == 0:
        return None
    hit = np.flatnonzero(sdm <= factor * sdm[-1])
    return int(hit[0]) + 1


def config_echo(config: SimConfig) -> dict[str, Any]:
    spec = config.slices
    churn = config.churn
    return {
        "protocol": config.protocol.value,
        "n": config.n,
        "c": config.c,
        "slices": spec.count,
        "boundaries": None if spec.is_uniform else list(spec.boundaries),
        "cycles": config.cycles,
        "seed": config.seed,
        "sampling": config.sampling.name.lower(),
        "concurrency": config.concurrency.name.lower(),
        "attr_dist": config.attr_dist,
        "window": config.window if config.protocol is Protocol.RANKING_WINDOW else None,
        "stop_when_sorted": config.stop_when_sorted,
        "churn": {
            "leave_rate": churn.leave_rate,
            "join_rate": churn.join_rate,
            "event_period": churn.event_period,
            "first_cycle": churn.first_cycle,
            "last_cycle": churn.last_cycle,
            "correlation": churn.correlation.value,
        },
    }


def summarize_run(label: str, result: RunResult) -> dict[str, Any]:
    sdm = result.sdm
    last = result.metrics[-1]
    return {
        "label": label,
        "seed": result.config.seed,
        "cycles_run": len(result.metrics),
        "final_sdm": float(sdm[-1]),
        "final_gdm": last.gdm,
        "threshold_factor": THRESHOLD_FACTOR,
        "cycles_to_threshold": cycles_to_threshold(sdm),
        "messages": int(sum(m.messages_sent for m in result.metrics)),
        "unsuccessful_swaps": int(sum(m.unsuccessful_swaps for m in result.metrics)),
        "config": config_echo(result.config),
    }


def execute(task: tuple[str, SimConfig, str]) -> dict[str, Any]:
    """Run one simulation and write its CSV and summary; worker entry point."""
    label, config, out_dir = task
    result = run(config)
    stem = Path(out_dir) / f"{label}_seed{config.seed}"
    write_csv(stem.with_suffix(".csv"), config.protocol, result.metrics)
    summary = summarize_run(label, result)
    stem.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary


# ---------------------------------------------------------------- commands

def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_run_parser(sub) -> None:
    p = sub.add_parser("run", help="simulate and write per-cycle CSV plus a JSON summary")
    p.add_argument("--config", type=Path, help="flat key = value settings file")
    p.add_argument("--list-presets", action="store_true", help="describe the presets and exit")
    for key, spec in KEYS.items():
        # default None marks "not given" so the file can fill it in
        p.add_argument(_flag(key), dest=key, type=str, default=None, help=spec.help)


def _add_bounds_parser(sub) -> None:
    p = sub.add_parser("bounds", help="closed-form bounds, optionally checked by Monte-Carlo")
    bsub = p.add_subparsers(dest="bound", required=True)

    lemma = bsub.add_parser("lemma", help="slice population concentration (Chernoff)")
    lemma.add_argument("--n", type=int, required=True)
    lemma.add_argument("--p", type=float, required=True, help="slice length")
    lemma.add_argument("--beta", type=float, required=True)

    samples = bsub.add_parser("samples", help="messages needed to pin a rank estimate to its slice")
    samples.add_argument("--p-hat", type=float, required=True)
    samples.add_argument("--d", type=float, required=True, help="distance to the nearest boundary")
    samples.add_argument("--alpha", type=float, default=0.05)

    split = bsub.add_parser("split", help="chance of an exact half/half split")
    split.add_argument("--n", type=int, required=True)

    for q in (lemma, samples, split):
        q.add_argument("--validate", action="store_true", help="add a Monte-Carlo estimate")
        q.add_argument("--trials", type=int, default=100_000)
        q.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slicekit", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub)
    _add_bounds_parser(sub)
    return parser


def _resolve_settings(args: argparse.Namespace) -> Settings:
    settings = Settings()
    if args.config is not None:
        read_config_file(args.config, settings)
    for key, spec in KEYS.items():
        raw = getattr(args, key)
        if raw is None:
            continue
        try:
            settings.set(key, spec.parse(raw), f"flag {_flag(key)}")
        except ValueError as exc:
            raise ConfigError(f"flag {_flag(key)}: {exc}") from exc
    return settings


def cmd_run(args: argparse.Namespace) -> int:
    if args.list_presets:
        for name, preset in PRESETS.items():
            print(f"{name}: {preset.doc} Runs: {', '.join(preset.runs)}.")
        return EXIT_OK
    settings = _resolve_settings(args)
    seeds = settings.get("seeds") or [settings.get("seed")]
    preset = settings.get("preset")
    tasks_cfg: list[tuple[str, SimConfig]] = []
    for seed in seeds:
        if preset is not None:
            tasks_cfg.extend(preset_configs(preset, seed, settings))
        else:
            config = build_config(settings, seed)
            tasks_cfg.append((config.protocol.value, config))

    out_dir = Path(settings.get("out") or os.environ.get(OUT_ENV) or "slicekit-out")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"slicekit: cannot write to {out_dir}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME

    tasks = [(label, cfg, str(out_dir)) for label, cfg in tasks_cfg]
    jobs = max(1, settings.get("jobs"))
    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                summaries = list(pool.map(execute, tasks))
        else:
            summaries = [execute(t) for t in tasks]
    except SimulationAborted as exc:
        print(f"slicekit: run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"slicekit: cannot write output: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"{'run':<18}{'seed':>6}{'cycles':>8}{'final_sdm':>12}{'to_threshold':>14}")
    for s in summaries:
        print(f"{s['label']:<18}{s['seed']:>6}{s['cycles_run']:>8}{s['final_sdm']:>12.1f}"
              f"{str(s['cycles_to_threshold']):>14}")
    print(f"wrote {2 * len(summaries)} files to {out_dir}")
    return EXIT_OK


def _table(rows: Sequence[tuple[str, Any]]) -> None:
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{name:<{width}}  {value}")


def cmd_bounds(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    if args.bound == "lemma":
        b = analysis.slice_population_bound(args.p, args.beta, args.n)
        rows = [("n", args.n), ("p", args.p), ("beta", args.beta), ("epsilon", b.epsilon),
                ("min_p(epsilon)", b.min_p)]
        if args.validate:
            tail = analysis.slice_population_tail(args.p, args.beta, args.n, args.trials, rng)
            rows += [("trials", args.trials), ("empirical_tail", tail),
                     ("within_bound", tail <= b.epsilon)]
    elif args.bound == "samples":
        r = analysis.sample_size_report(args.p_hat, args.d, args.alpha)
        rows = [("p_hat", r.p_hat), ("d", r.d), ("alpha", r.alpha), ("z", r.z), ("k", r.k)]
        if r.below_clt_regime:
            rows.append(("note", "k <= 30: below the normal-approximation regime"))
        if args.validate:
            x = rng.binomial(r.k, args.p_hat, size=args.trials) / r.k
            coverage = float(np.mean(np.abs(x - args.p_hat) < args.d))
            rows += [("trials", args.trials), ("empirical_coverage", coverage),
                     ("target", 1.0 - args.alpha)]
    else:
        sp = analysis.perfect_split_probability(args.n)
        rows = [("n", args.n), ("exact", sp.exact), ("bound", sp.bound)]
        if args.validate:
            hits = rng.binomial(args.n, 0.5, size=args.trials) * 2 == args.n
            rows += [("trials", args.trials), ("empirical", float(np.mean(hits)))]
    _table(rows)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_bounds(args)
    except analysis.UnboundedSampleSize as exc:
        print(f"slicekit: unbounded: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"slicekit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        parser.error(str(exc))  # exits with EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
