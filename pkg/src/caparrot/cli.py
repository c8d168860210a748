"""Command line entry point: ``caparrot <command>``."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import yaml

from caparrot.adapter.classifier import MODELS, cross_validate, fit_forest
from caparrot.adapter.corpus import (CorpusError, generate_corpus, generate_windows, read_corpus,
                                     to_arrays, write_feature_corpus, write_sample_corpus)
from caparrot.channel import PROTOTYPES, RadioConfig
from caparrot.sim.bound import route_availability_bound
from caparrot.sim.engine import run
from caparrot.sim.scenario import VARIANTS, Scenario, ScenarioError, apply_overrides, load, parse_override

OUT_DIR_ENV = "CAPARROT_OUT_DIR"
PARAM_FIELDS = ("r_b", "alpha", "gamma0", "lam", "omega")
SUMMARY_KPIS = ("pdr", "latency_mean_s", "latency_p50_s", "latency_p95_s", "latency_p99_s",
                "mean_hops", "route_availability")


def parse_seeds(text: str) -> list[int]:
    """Expand ``"1..25"``, ``"1,3,5"`` or mixes like ``"1..3,10"`` (ranges inclusive)."""
    seeds: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, sep, hi = part.partition("..")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise click.BadParameter(f"bad seed spec {part!r}") from None
    if not seeds:
        raise click.BadParameter("seed list is empty")
    return seeds


def parse_values(text: str) -> list:
    values = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, sep, hi = part.partition("..")
        if sep:
            try:
                values.extend(range(int(lo), int(hi) + 1))
            except ValueError:
                raise click.BadParameter(f"bad value range {part!r}") from None
        else:
            values.append(yaml.safe_load(part))
    if not values:
        raise click.BadParameter("value list is empty")
    return values


def summarize(rows: list[dict]) -> dict:
    """Mean, sample std and 95% t-interval per KPI over per-run rows."""
    from scipy.stats import t as student_t

    out = {}
    for key in SUMMARY_KPIS:
        vals = [r[key] for r in rows if r.get(key) is not None]
        n = len(vals)
        if n == 0:
            out[key] = {"n": 0, "mean": None, "std": None, "ci95": None}
            continue
        mean = math.fsum(vals) / n
        if n > 1:
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1))
            half = float(student_t.ppf(0.975, n - 1)) * std / math.sqrt(n)
            ci = [mean - half, mean + half]
        else:
            std, ci = 0.0, None
        out[key] = {"n": n, "mean": mean, "std": std, "ci95": ci}
    return out


def _out_path(out: str | None, default_name: str) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / default_name


def _load_scenario(path: str, variant: str | None, overrides: tuple[str, ...]) -> Scenario:
    try:
        sc = load(path)
        if overrides:
            sc = apply_overrides(sc, dict(parse_override(o) for o in overrides))
        if variant:
            sc = replace(sc, variant=variant)
    except FileNotFoundError:
        raise click.ClickException(f"scenario file not found: {path}") from None
    except ScenarioError as exc:
        raise click.ClickException(f"{path}: {exc}") from None
    return sc


def _run_one(args) -> dict:
    sc, seed = args
    return run(sc, seed).to_row()


def _run_many(sc: Scenario, seeds: list[int], jobs: int) -> list[dict]:
    tasks = [(sc, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def _dump(row: dict) -> str:
    return json.dumps(row, sort_keys=True)


@click.group()
def main() -> None:
    """CA-PARRoT routing simulator and environment classifier."""


scenario_opt = click.option("--scenario", required=True,
                            help="Scenario YAML file or a shipped name (rural, suburban, urban, table1_defaults).")
seeds_opt = click.option("--seeds", required=True, help="Seed list, e.g. 1..25 or 1,2,3.")
variant_opt = click.option("--variant", type=click.Choice(VARIANTS), default=None,
                           help="Protocol variant (defaults to the scenario's).")
override_opt = click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
                            help="Override a scenario value, e.g. params.r_b=-5.")
jobs_opt = click.option("--jobs", default=1, show_default=True, help="Parallel worker processes.")


@main.command()
@scenario_opt
@seeds_opt
@variant_opt
@override_opt
@click.option("--out", default=None, help="JSON-lines output file.")
@click.option("--packet-trace", default=None, help="Write a per-packet CSV trace (single seed only).")
@jobs_opt
def simulate(scenario, seeds, variant, overrides, out, packet_trace, jobs):
    """Run one simulation per seed and write KPI rows plus a summary row."""
    seed_list = parse_seeds(seeds)
    sc = _load_scenario(scenario, variant, overrides)
    if packet_trace:
        if len(seed_list) != 1:
            raise click.UsageError("--packet-trace needs exactly one seed")
        trace: list = []
        rows = [run(sc, seed_list[0], packet_trace=trace).to_row()]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("packet", "flow", "sent_s", "outcome", "end_s", "hops", "reason"))
        w.writerows(trace)
        Path(packet_trace).write_text(buf.getvalue())
    else:
        rows = _run_many(sc, seed_list, jobs)
    rows = [json.loads(_dump(r)) for r in rows]
    path = _out_path(out, "simulate.jsonl")
    lines = [_dump(r) for r in rows]
    lines.append(_dump({"summary": True, "variant": sc.variant, "seeds": seed_list,
                        "kpis": summarize(rows)}))
    path.write_text("\n".join(lines) + "\n")
    s = summarize(rows)["pdr"]
    click.echo(f"{len(rows)} runs -> {path}  mean PDR {s['mean']:.4f}")


@main.command()
@scenario_opt
@click.option("--axis", "axes", multiple=True, required=True,
              help="Dotted scenario key to sweep, e.g. params.r_b. Repeat for a grid.")
@click.option("--values", "value_lists", multiple=True, required=True,
              help="Comma list (or a..b integer range) per --axis.")
@seeds_opt
@variant_opt
@override_opt
@click.option("--out", default=None, help="CSV output file.")
@jobs_opt
def sweep(scenario, axes, value_lists, seeds, variant, overrides, out, jobs):
    """Cartesian parameter sweep; writes long-format rows for plotting."""
    import itertools

    if len(axes) != len(value_lists):
        raise click.UsageError("give one --values per --axis")
    seed_list = parse_seeds(seeds)
    grids = [parse_values(v) for v in value_lists]
    base = _load_scenario(scenario, variant, overrides)
    # bare parameter names (r_b, lam, ...) are shorthand for params.<name>
    axes = tuple(a if "." in a or a not in PARAM_FIELDS else f"params.{a}" for a in axes)
    if base.adaptive and any(a.startswith("params.") for a in axes):
        click.echo("warning: adaptation is enabled, so classified parameters replace swept ones; "
                   "pass --override adaptation.enabled=false to hold them fixed", err=True)
    rows = []
    for combo in itertools.product(*grids):
        try:
            sc = apply_overrides(base, dict(zip(axes, combo)))
        except ScenarioError as exc:
            raise click.ClickException(str(exc)) from None
        for rec in _run_many(sc, seed_list, jobs):
            rows.append(list(combo) + [rec["seed"], rec["pdr"], rec["latency_mean_s"]])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(axes) + ["seed", "pdr", "latency_mean_s"])
    for r in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in r])
    path = _out_path(out, "sweep.csv")
    path.write_text(buf.getvalue())
    click.echo(f"{len(rows)} rows -> {path}")


def _read(corpus: str):
    try:
        rows = read_corpus(corpus)
    except FileNotFoundError:
        raise click.ClickException(f"corpus not found: {corpus}") from None
    except CorpusError as exc:
        raise click.ClickException(f"{corpus}: {exc}") from None
    return to_arrays(rows)


@main.command()
@click.option("--corpus", required=True, help="Labeled corpus (feature or sample rows).")
@click.option("--trees", default=100, show_default=True)
@click.option("--max-depth", default=15, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--model", "model_out", default=None, help="Model output file.")
def train(corpus, trees, max_depth, seed, model_out):
    """Train the environment classifier and write the model file."""
    X, y = _read(corpus)
    try:
        model = fit_forest(X, y, n_trees=trees, max_depth=max_depth, seed=seed)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    path = _out_path(model_out, "forest.json")
    model.save(path)
    click.echo(f"trees={model.n_trees} max_depth={model.max_depth} "
               f"oob_accuracy={model.oob_accuracy:.4f} -> {path}")


@main.command()
@click.option("--corpus", required=True)
@click.option("--folds", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--models", default=",".join(MODELS), show_default=True)
def crossval(corpus, folds, seed, models):
    """Stratified k-fold accuracy of the forest, ANN and linear SVM."""
    X, y = _read(corpus)
    names = tuple(m.strip() for m in models.split(",") if m.strip())
    try:
        acc = cross_validate(X, y, folds=folds, models=names, seed=seed)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo("model\taccuracy")
    for name, a in acc.items():
        click.echo(f"{name}\t{a:.4f}")


@main.command("gen-corpus")
@click.option("--channels", default="rural,suburban,urban", show_default=True)
@click.option("--windows", default=2000, show_default=True, help="Windows per channel.")
@click.option("--dmin", default=1.0, show_default=True, help="Minimum link distance in m.")
@click.option("--dmax", default=1000.0, show_default=True, help="Maximum link distance in m.")
@click.option("--seed", default=0, show_default=True)
@click.option("--raw", is_flag=True, help="Write raw (label, rss_dbm, distance_m) samples.")
@click.option("--out", default=None)
def gen_corpus(channels, windows, dmin, dmax, seed, raw, out):
    """Synthesize a labeled corpus from the channel models."""
    names = [c.strip() for c in channels.split(",") if c.strip()]
    unknown = [c for c in names if c not in PROTOTYPES]
    if unknown:
        raise click.BadParameter(f"unknown channels {unknown}")
    if not 0 < dmin < dmax:
        raise click.BadParameter("need 0 < dmin < dmax")
    path = _out_path(out, "corpus.csv")
    if raw:
        write_sample_corpus(generate_windows(names, windows, seed, distance_range=(dmin, dmax)), path)
    else:
        rows = generate_corpus(names, windows, seed, distance_range=(dmin, dmax))
        write_feature_corpus(rows, path)
    click.echo(f"corpus -> {path}")


@main.command()
@scenario_opt
@seeds_opt
@override_opt
@click.option("--out", default=None)
def bound(scenario, seeds, overrides, out):
    """Mobility-constrained route availability per seed."""
    seed_list = parse_seeds(seeds)
    sc = _load_scenario(scenario, None, overrides)
    lines = [_dump({"seed": s, "route_availability_bound": route_availability_bound(sc, s)})
             for s in seed_list]
    path = _out_path(out, "bound.jsonl")
    path.write_text("\n".join(lines) + "\n")
    click.echo(f"{len(lines)} rows -> {path}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
