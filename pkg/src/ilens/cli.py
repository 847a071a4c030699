"""Command-line pipeline around the library.

Subcommands:

  extract       value tables -> interaction sets + optimizer traces
  distribution  interaction sets -> per-order strength tables
  disentangle   one distribution + reference set -> spindle/decay fit
  jaccard       train and test interaction dirs -> per-order similarity
  simulate      train a small net end to end and track interactions
  perturb       re-extract under parameter noise or input attacks

Every run writes its delimited outputs, SVG figures and a single
manifest.json into --out.  Configuration comes from a flat key=value file
(--config) plus repeatable --set key=value overrides; unknown keys are
rejected.  Exit codes: 0 success, 1 usage, 2 input data, 3 numerical
failure.  Runs are deterministic given identical inputs and --seed;
with --no-timestamp every output byte, manifest included, is reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, plots, value_table
from .distributions import (
    argmax_order,
    compute_z,
    delta_distribution,
    load_distribution_csv,
    mean_distribution,
    normalize,
    order_distribution,
    save_distribution_csv,
)
from .errors import DataError, NumericalError, UsageError
from .extraction import (
    ExtractConfig,
    extract,
    load_interactions,
    mean_interactions,
    save_interactions,
)
from .generalization import (
    average_distribution,
    jaccard,
    order_universe,
    save_jaccard_csv,
)
from .model_zoo import (
    TrainConfig,
    even_groups,
    fgsm_perturb,
    gaussian_perturb,
    generate_dataset,
    init_net,
    load_net,
    masked_table,
    random_synthetic_model,
    save_dataset,
    save_net,
    train,
)
from .parametric import (
    FitGrid,
    SpindleParams,
    disentangle,
    fit_spindle,
    save_fit,
    spindle_curve,
)

logger = logging.getLogger("ilens")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


# ---------------------------------------------------------------------------
# configuration


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise UsageError(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise UsageError(f"expected a number, got {text!r}") from None


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_opt_float(text: str):
    stripped = text.strip()
    return None if stripped == "" else _parse_float(stripped)


def _split_ints(text: str):
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(_parse_int(p) for p in parts)


def _split_floats(text: str):
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(_parse_float(p) for p in parts)


_EXTRACT_OPT_KEYS = {
    "learning_rate": (0.25, _parse_float),
    "iterations": (4000, _parse_int),
    "zeta_coeff": (0.02, _parse_float),
    "tau_coeff": (0.02, _parse_float),
    "enable_noise": (True, _parse_bool),
    "log_every": (20, _parse_int),
    "restart_patience": (12, _parse_int),
}

_NESTED_EXTRACT_KEYS = {
    "extract_learning_rate": (0.25, _parse_float),
    "extract_iterations": (4000, _parse_int),
    "extract_zeta_coeff": (0.02, _parse_float),
    "extract_tau_coeff": (0.02, _parse_float),
    "extract_enable_noise": (True, _parse_bool),
}

_SCHEMAS = {
    "extract": {**_EXTRACT_OPT_KEYS, "population_scale": (None, _parse_opt_float)},
    "distribution": {},
    "disentangle": {
        "alpha_min": (0.05, _parse_float),
        "alpha_max": (1.5, _parse_float),
        "alpha_step": (0.05, _parse_float),
        "delta_min": (1e-4, _parse_float),
        "delta_max": (1.0, _parse_float),
        "delta_points": (40, _parse_int),
        "per_sign": (False, _parse_bool),
    },
    "jaccard": {},
    "simulate": {
        "variables": (10, _parse_int),
        "features_per_variable": (3, _parse_int),
        "samples": (200, _parse_int),
        "train_fraction": (0.5, _parse_float),
        "flip_prob": (0.0, _parse_float),
        "label_noise_ratio": (0.05, _parse_float),
        "epochs": (64, _parse_int),
        "batch_size": (16, _parse_int),
        "learning_rate": (0.1, _parse_float),
        "hidden": ("64,64,64", _parse_str),
        "checkpoint_epochs": ("", _parse_str),
        "eval_samples": (4, _parse_int),
        **_NESTED_EXTRACT_KEYS,
    },
    "perturb": {
        "mode": ("gaussian", _parse_str),
        "sigmas": ("0.02,0.05,0.1", _parse_str),
        "variables": (10, _parse_int),
        "eval_samples": (4, _parse_int),
        **_NESTED_EXTRACT_KEYS,
    },
}


def _read_config_file(path):
    """Flat key=value lines; blank lines and # comments are skipped."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    items = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        items.append((key.strip(), value))
    return items


def resolve_config(command: str, config_path, overrides) -> dict:
    """Defaults, then the config file, then --set overrides, strictly keyed."""
    schema = _SCHEMAS[command]
    cfg = {key: default for key, (default, _) in schema.items()}
    items = list(_read_config_file(config_path)) if config_path else []
    for raw in overrides or ():
        if "=" not in raw:
            raise UsageError(f"--set expects key=value, got {raw!r}")
        key, _, value = raw.partition("=")
        items.append((key.strip(), value))
    for key, value in items:
        if key not in schema:
            known = ", ".join(sorted(schema)) or "(none)"
            raise UsageError(
                f"unknown config key {key!r} for {command}; known keys: {known}"
            )
        cfg[key] = schema[key][1](value)
    return cfg


def _extract_config(cfg: dict, seed: int, prefix: str = "") -> ExtractConfig:
    def get(name):
        return cfg[prefix + name]

    return ExtractConfig(
        learning_rate=get("learning_rate"),
        iterations=get("iterations"),
        zeta_coeff=get("zeta_coeff"),
        tau_coeff=get("tau_coeff"),
        enable_noise=get("enable_noise"),
        seed=seed,
        log_every=cfg.get(prefix + "log_every", 20),
        restart_patience=cfg.get(prefix + "restart_patience", 12),
    )


# ---------------------------------------------------------------------------
# run plumbing


@dataclass
class RunContext:
    """Output collector for one command invocation."""

    command: str
    out_dir: str
    seed: int
    jobs: int
    no_timestamp: bool
    config: dict
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def write_manifest(self) -> None:
        elapsed = None
        if not self.no_timestamp:
            elapsed = round(time.perf_counter() - self.started, 6)
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": sorted(str(p) for p in self.inputs),
            "outputs": sorted(self.outputs),
            "version": __version__,
            "wall_clock_seconds": elapsed,
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _pool_map(fn, items, jobs: int):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _collect_inputs(path: str):
    """One file, or every input .json inside a directory, in sorted order.

    Directories produced by `extract` mix interactions with a manifest and
    traces, so *.interactions.json wins when present and the manifest is
    never an input.
    """
    if os.path.isdir(path):
        names = sorted(
            n for n in os.listdir(path) if n.endswith(".json") and n != "manifest.json"
        )
        preferred = [n for n in names if n.endswith(".interactions.json")]
        names = preferred or names
        if not names:
            raise DataError(f"no .json inputs found in directory {path}")
        return [os.path.join(path, n) for n in names]
    if os.path.isfile(path):
        return [path]
    raise DataError(f"input path does not exist: {path}")


def _stem(path: str) -> str:
    name = os.path.basename(path)
    if name.endswith(".json"):
        name = name[: -len(".json")]
    for suffix in (".interactions", ".table"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


def _unique_stems(paths):
    stems = []
    used = set()
    for p in paths:
        stem = _stem(p)
        candidate = stem
        bump = 2
        while candidate in used:
            candidate = f"{stem}-{bump}"
            bump += 1
        used.add(candidate)
        stems.append(candidate)
    return stems


def _sigma_tag(sigma: float) -> str:
    return f"{sigma:g}".replace("-", "m").replace(".", "_")


def _decay_fraction(fit, n: int) -> float:
    """Share of the fitted order-1..n mass carried by the decay component."""
    s = spindle_curve(SpindleParams(fit.spindle.alpha, 1.0), n)[1:]
    spindle_mass = 2.0 * fit.spindle.beta * float(s.sum())
    total = float(fit.theory_pos[1:].sum() + fit.theory_neg[1:].sum())
    if total <= 0.0:
        return 0.0
    return min(1.0, max(0.0, (total - spindle_mass) / total))


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args, ctx: RunContext) -> None:
    paths = _collect_inputs(args.input)
    ctx.inputs = list(paths)
    cfg = _extract_config(ctx.config, ctx.seed)
    scale = ctx.config["population_scale"]
    tables = [value_table.load(p) for p in paths]
    logger.info("extracting %d table(s) with %d job(s)", len(tables), ctx.jobs)
    results = _pool_map(
        lambda table: extract(table, cfg, population_scale=scale), tables, ctx.jobs
    )
    for stem, (iset, _, trace) in zip(_unique_stems(paths), results):
        save_interactions(iset, ctx.path(f"{stem}.interactions.json"))
        trace.save_csv(ctx.path(f"{stem}.trace.csv"))


def cmd_distribution(args, ctx: RunContext) -> None:
    paths = _collect_inputs(args.input)
    ctx.inputs = list(paths)
    isets = [load_interactions(p) for p in paths]
    dists = [order_distribution(s, salient_only=args.salient_only) for s in isets]
    if args.normalize:
        z = compute_z(isets)
        logger.info("normalizer z = %r", z)
        dists = [normalize(d, z) for d in dists]
    for stem, dist in zip(_unique_stems(paths), dists):
        save_distribution_csv(dist, ctx.path(f"{stem}.distribution.csv"))
    shown = dists[0]
    if len(dists) > 1:
        shown = mean_distribution(dists)
        save_distribution_csv(shown, ctx.path("mean.distribution.csv"))
    fig = plots.distribution_figure(shown)
    plots.save_svg(fig, ctx.path("distribution.svg"), ctx.no_timestamp)


def _build_grid(cfg: dict) -> FitGrid:
    a_min, a_max, a_step = cfg["alpha_min"], cfg["alpha_max"], cfg["alpha_step"]
    if not (a_step > 0 and 0 < a_min <= a_max):
        raise UsageError("need alpha_step > 0 and 0 < alpha_min <= alpha_max")
    count = int(round((a_max - a_min) / a_step)) + 1
    alphas = np.round(a_min + a_step * np.arange(count), 10)
    alphas = alphas[alphas <= a_max + 1e-12]
    d_min, d_max, points = cfg["delta_min"], cfg["delta_max"], cfg["delta_points"]
    if not (0 < d_min <= d_max and points >= 1):
        raise UsageError("need 0 < delta_min <= delta_max and delta_points >= 1")
    deltas = np.logspace(math.log10(d_min), math.log10(d_max), points)
    return FitGrid(alphas=alphas, deltas=deltas)


def cmd_disentangle(args, ctx: RunContext) -> None:
    ctx.inputs = [args.distribution_csv, args.interactions]
    dist = load_distribution_csv(args.distribution_csv)
    iset = load_interactions(args.interactions)
    grid = _build_grid(ctx.config)
    result = disentangle(dist, iset, grid, per_sign=ctx.config["per_sign"])
    logger.info(
        "best fit alpha=%g beta=%g delta=%g scale=%g objective=%r",
        result.spindle.alpha,
        result.spindle.beta,
        result.decay.delta,
        result.decay.decay_scale,
        result.objective,
    )
    save_fit(result, ctx.path("fit.json"))
    fig = plots.fit_figure(dist, result)
    plots.save_svg(fig, ctx.path("fit.svg"), ctx.no_timestamp)


def cmd_jaccard(args, ctx: RunContext) -> None:
    train_paths = _collect_inputs(args.train_dir)
    test_paths = _collect_inputs(args.test_dir)
    ctx.inputs = train_paths + test_paths
    train_sets = [load_interactions(p) for p in train_paths]
    test_sets = [load_interactions(p) for p in test_paths]
    sims = save_jaccard_csv(train_sets, test_sets, ctx.path("jaccard.csv"))

    n = train_sets[0].n
    universe = []
    for m in range(n + 1):
        universe.extend(order_universe(train_sets + test_sets, n, m))
    if universe:
        d_train = average_distribution(train_sets, tuple(universe), "train")
        d_test = average_distribution(test_sets, tuple(universe), "test")
        overall = jaccard(d_train, d_test)
    else:
        overall = float("nan")
    with open(ctx.path("jaccard_overall.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sim", "n_train", "n_test", "universe_size"])
        writer.writerow(
            [repr(float(overall)), len(train_sets), len(test_sets), len(universe)]
        )
    fig = plots.jaccard_figure(sims)
    plots.save_svg(fig, ctx.path("jaccard.svg"), ctx.no_timestamp)


def _default_checkpoints(epochs: int):
    if epochs == 0:
        return (0,)
    marks = {0, epochs}
    for fraction in (1 / 16, 1 / 8, 1 / 4, 1 / 2, 3 / 4):
        marks.add(int(round(epochs * fraction)))
    return tuple(sorted(marks))


_TIMELINE_COLUMNS = (
    "epoch",
    "train_loss",
    "test_loss",
    "loss_gap",
    "total_mass",
    "pos_mass",
    "neg_mass",
    "alpha",
    "beta",
    "delta",
    "decay_scale",
    "decay_fraction",
    "argmax_order",
)


def _write_timeline_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TIMELINE_COLUMNS)
        for row in rows:
            out = []
            for col in _TIMELINE_COLUMNS:
                value = row[col]
                out.append(str(value) if isinstance(value, int) else repr(float(value)))
            writer.writerow(out)


def cmd_simulate(args, ctx: RunContext) -> None:
    cfg = ctx.config
    n = cfg["variables"]
    per_var = cfg["features_per_variable"]
    hidden = _split_ints(cfg["hidden"])
    if not hidden:
        raise UsageError("hidden must name at least one layer width")
    if cfg["eval_samples"] < 1:
        raise UsageError("eval_samples must be >= 1")
    checkpoints = (
        _split_ints(cfg["checkpoint_epochs"])
        if cfg["checkpoint_epochs"]
        else _default_checkpoints(cfg["epochs"])
    )
    base = 1000003 * ctx.seed
    hidden_model = random_synthetic_model(n, seed=base + 1)
    data = generate_dataset(
        hidden_model,
        per_var,
        cfg["samples"],
        train_fraction=cfg["train_fraction"],
        flip_prob=cfg["flip_prob"],
        seed=base + 2,
    )
    net0 = init_net((n * per_var, *hidden, 1), seed=base + 3)
    train_cfg = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        label_noise_ratio=cfg["label_noise_ratio"],
        seed=base + 4,
        checkpoint_epochs=checkpoints,
    )
    logger.info("training %s for %d epochs", net0.layer_sizes, cfg["epochs"])
    snapshots = train(net0, data, train_cfg)

    groups = even_groups(n, per_var)
    m_eval = min(cfg["eval_samples"], data.train_idx.size)
    xs = [data.features[j] for j in range(m_eval)]
    final_net = snapshots[-1].net
    scales = [
        masked_table(final_net, x, groups, sample_id=f"final-{j}").output_scale()
        for j, x in enumerate(xs)
    ]
    ecfg = _extract_config(cfg, ctx.seed, prefix="extract_")

    def analyze(snap):
        tables = [
            masked_table(snap.net, xs[j], groups, sample_id=f"epoch{snap.epoch}-{j}")
            for j in range(m_eval)
        ]
        jobs = [(tables[j], scales[j]) for j in range(m_eval)]
        isets = _pool_map(
            lambda job: extract(job[0], ecfg, population_scale=job[1])[0],
            jobs,
            ctx.jobs,
        )
        return isets

    rows = []
    curves = []
    isets_by_epoch = {}
    for snap in snapshots:
        logger.info("checkpoint %d: extracting %d sample(s)", snap.epoch, m_eval)
        isets = analyze(snap)
        isets_by_epoch[snap.epoch] = isets
        dists = [order_distribution(s, salient_only=True) for s in isets]
        mean_d = mean_distribution(dists)
        save_distribution_csv(
            mean_d, ctx.path(f"checkpoint_{snap.epoch}.distribution.csv")
        )
        fit = disentangle(mean_d, mean_interactions(isets))
        save_fit(fit, ctx.path(f"fit_{snap.epoch}.json"))
        rows.append(
            {
                "epoch": snap.epoch,
                "train_loss": snap.train_loss,
                "test_loss": snap.test_loss,
                "loss_gap": snap.test_loss - snap.train_loss,
                "total_mass": mean_d.total_mass(),
                "pos_mass": float(mean_d.pos[1:].sum()),
                "neg_mass": float(mean_d.neg[1:].sum()),
                "alpha": fit.spindle.alpha,
                "beta": fit.spindle.beta,
                "delta": fit.decay.delta,
                "decay_scale": fit.decay.decay_scale,
                "decay_fraction": _decay_fraction(fit, n),
                "argmax_order": argmax_order(mean_d),
            }
        )
        curves.append((f"epoch {snap.epoch}", mean_d))

    _write_timeline_csv(rows, ctx.path("timeline.csv"))
    save_net(final_net, ctx.path("net.json"))
    save_dataset(data, ctx.path("dataset.csv"))

    if len(snapshots) >= 2:
        fitted = [s for s in snapshots[:-1] if (s.test_loss - s.train_loss) < 0.05]
        from_snap = fitted[-1] if fitted else snapshots[0]
        to_snap = snapshots[-1]
        per_sample = [
            delta_distribution(
                isets_by_epoch[to_snap.epoch][j], isets_by_epoch[from_snap.epoch][j]
            )
            for j in range(m_eval)
        ]
        stage_d = mean_distribution(per_sample)
        save_distribution_csv(stage_d, ctx.path("stage_delta.csv"))
        with open(ctx.path("stage_delta.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "from_epoch": from_snap.epoch,
                    "to_epoch": to_snap.epoch,
                    "argmax_order": argmax_order(stage_d),
                    "total_mass": stage_d.total_mass(),
                },
                fh,
                indent=2,
            )
            fh.write("\n")

    plots.save_svg(
        plots.timeline_figure(rows), ctx.path("timeline.svg"), ctx.no_timestamp
    )
    plots.save_svg(
        plots.curves_figure(curves, "mean salient interaction strength by checkpoint"),
        ctx.path("distributions.svg"),
        ctx.no_timestamp,
    )


def cmd_perturb(args, ctx: RunContext) -> None:
    cfg = ctx.config
    ctx.inputs = [args.checkpoint]
    mode = cfg["mode"]
    if mode not in ("gaussian", "fgsm"):
        raise UsageError(f"mode must be gaussian or fgsm, got {mode!r}")
    sigmas = sorted(_split_floats(cfg["sigmas"]))
    if not sigmas:
        raise UsageError("sigmas must name at least one value")
    if cfg["eval_samples"] < 1:
        raise UsageError("eval_samples must be >= 1")
    net = load_net(args.checkpoint)
    n = cfg["variables"]
    features = net.layer_sizes[0]
    if n < 1 or features % n != 0:
        raise DataError(f"{features} features do not split evenly into {n} variables")
    groups = even_groups(n, features // n)
    xs = [
        np.random.default_rng([ctx.seed, 50 + j]).uniform(-1.0, 1.0, size=features)
        for j in range(cfg["eval_samples"])
    ]
    ecfg = _extract_config(cfg, ctx.seed, prefix="extract_")

    def extract_tables(tables, scales):
        jobs = list(zip(tables, scales))
        return _pool_map(
            lambda job: extract(job[0], ecfg, population_scale=job[1])[0],
            jobs,
            ctx.jobs,
        )

    base_tables = [
        masked_table(net, x, groups, sample_id=f"base-{j}") for j, x in enumerate(xs)
    ]
    scales = [t.output_scale() for t in base_tables]
    base_isets = extract_tables(base_tables, scales)

    rows = []
    curves = []
    for sigma in sigmas:
        if mode == "gaussian":
            noisy = gaussian_perturb(net, sigma, seed=ctx.seed)
            tables = [
                masked_table(noisy, xs[j], groups, sample_id=f"s{sigma:g}-{j}")
                for j in range(len(xs))
            ]
        else:
            tables = [
                masked_table(
                    net,
                    fgsm_perturb(net, xs[j], sigma),
                    groups,
                    sample_id=f"s{sigma:g}-{j}",
                )
                for j in range(len(xs))
            ]
        isets = extract_tables(tables, scales)
        deltas = [delta_distribution(isets[j], base_isets[j]) for j in range(len(xs))]
        mean_d = mean_distribution(deltas)
        save_distribution_csv(
            mean_d, ctx.path(f"delta_{_sigma_tag(sigma)}.distribution.csv")
        )
        params, _ = fit_spindle(mean_d)
        theory = params.beta * spindle_curve(SpindleParams(params.alpha, 1.0), mean_d.n)
        num = float(
            np.abs(mean_d.pos[1:] - theory[1:]).sum()
            + np.abs(mean_d.neg[1:] - theory[1:]).sum()
        )
        den = float(mean_d.pos[1:].sum() + mean_d.neg[1:].sum())
        rel_residual = num / den if den > 0 else 0.0
        logger.info(
            "sigma=%g: mass=%r alpha=%g rel_residual=%r",
            sigma,
            mean_d.total_mass(),
            params.alpha,
            rel_residual,
        )
        rows.append((sigma, mean_d.total_mass(), params.alpha, params.beta, rel_residual))
        curves.append((f"sigma={sigma:g}", mean_d))

    with open(ctx.path("summary.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "total_mass", "alpha", "beta", "rel_residual"])
        for sigma, mass, alpha, beta, rel_residual in rows:
            writer.writerow(
                [
                    repr(float(sigma)),
                    repr(float(mass)),
                    repr(float(alpha)),
                    repr(float(beta)),
                    repr(float(rel_residual)),
                ]
            )
    plots.save_svg(
        plots.curves_figure(curves, f"interaction change under {mode} perturbation"),
        ctx.path("perturb.svg"),
        ctx.no_timestamp,
    )


_HANDLERS = {
    "extract": cmd_extract,
    "distribution": cmd_distribution,
    "disentangle": cmd_disentangle,
    "jaccard": cmd_jaccard,
    "simulate": cmd_simulate,
    "perturb": cmd_perturb,
}


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    parser.add_argument(
        "--jobs", type=int, default=None, help="worker cap (default: available cores)"
    )
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit wall clock and SVG dates so reruns are byte-identical",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ilens", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("extract", help="decompose value tables into interactions")
    p.add_argument("input", help="value-table JSON file or directory")
    _add_common(p)

    p = sub.add_parser("distribution", help="aggregate interactions by order")
    p.add_argument("input", help="interactions JSON file or directory")
    p.add_argument(
        "--salient-only", action="store_true", help="keep only above-threshold effects"
    )
    p.add_argument(
        "--normalize", action="store_true", help="divide by the first-order normalizer"
    )
    _add_common(p)

    p = sub.add_parser("disentangle", help="fit spindle and decay components")
    p.add_argument("distribution_csv", help="order-distribution CSV")
    p.add_argument("interactions", help="reference interactions JSON")
    _add_common(p)

    p = sub.add_parser("jaccard", help="compare train and test interactions")
    p.add_argument("train_dir", help="directory of train interactions JSON")
    p.add_argument("test_dir", help="directory of test interactions JSON")
    _add_common(p)

    p = sub.add_parser("simulate", help="train a small net and track interactions")
    _add_common(p)

    p = sub.add_parser("perturb", help="re-extract under noise or attacks")
    p.add_argument("checkpoint", help="net checkpoint JSON")
    _add_common(p)

    return parser


def _run(argv) -> int:
    level = os.environ.get("ILENS_LOG", "error").strip().lower()
    if level not in _LOG_LEVELS:
        raise UsageError(
            f"ILENS_LOG must be one of error, info, debug; got {level!r}"
        )
    logging.basicConfig(level=_LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("missing command; run with --help for usage")
    config = resolve_config(args.command, args.config, args.set)
    if args.jobs is not None and args.jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {args.jobs}")
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    os.makedirs(args.out, exist_ok=True)
    ctx = RunContext(
        command=args.command,
        out_dir=args.out,
        seed=args.seed,
        jobs=jobs,
        no_timestamp=args.no_timestamp,
        config=config,
    )
    _HANDLERS[args.command](args, ctx)
    ctx.write_manifest()
    return 0


def main(argv=None) -> int:
    try:
        return _run(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
