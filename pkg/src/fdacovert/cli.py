"""Command-line experiment runner with bit-exact, reproducible outputs.

Subcommands: heatmap, region, sweep-n, sweep-fdelta, rate, optimize, selftest.
Every output file embeds a metadata header (config hash, seeds, version) and
is written via a temp file + rename, so a failed run leaves nothing behind.
Exit codes: 0 success, 1 config error, 2 runtime error, 3 selftest failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .channel import (
    SCHEME_OPTIMIZED,
    SCHEME_RANDOM,
    FrequencyPlan,
    channel_vector,
    mrt_weights,
    snr_bob,
)
from .config import ConfigError, ExperimentConfig, load_config
from .covertness import xi, xi_inv
from .ellipse import objective_and_gradient, optimize_offsets
from .fieldmap import (
    FieldMap,
    build_plan,
    evaluate_grid,
    extract_noncovert,
    monte_carlo_rate,
    sweep,
)
from .geometry import PolarPoint
from .schemes import linear_fda_plan, random_fda_plan

SUBCOMMANDS = (
    "heatmap",
    "region",
    "sweep-n",
    "sweep-fdelta",
    "rate",
    "optimize",
    "selftest",
)


def fmt(value) -> str:
    """Shortest text that parses back to exactly the same value."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        s = repr(v)
        return s[:-2] if s.endswith(".0") else s
    return str(value)


def emit_csv(path: str, header: Sequence[str], rows: Iterable[Sequence], metadata: dict) -> None:
    """Write a CSV with '# key=value' metadata lines, atomically."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            for key in sorted(metadata):
                fh.write(f"# {key}={metadata[key]}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_field_csv(path: str):
    """Parse a field CSV back into (metadata, x, y, value) arrays."""
    meta = {}
    xs, ys, vs = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
                continue
            if header is None:
                header = line.split(",")
                continue
            x, y, v = line.split(",")
            xs.append(float(x))
            ys.append(float(y))
            vs.append(float(v))
    return meta, np.array(xs), np.array(ys), np.array(vs)


def _base_metadata(cfg: ExperimentConfig, subcommand: str) -> dict:
    meta = {
        "generator": f"fdacovert {__version__}",
        "subcommand": subcommand,
        "config_sha256": cfg.sha256(),
    }
    # the resolved configuration rides along so any output is reproducible
    # from its own header
    for line in cfg.describe():
        key, _, value = line.partition("=")
        meta[f"cfg.{key}"] = value
    return meta


def _field_rows(fmap: FieldMap):
    xs, ys = fmap.spec.xs(), fmap.spec.ys()
    for iy in range(fmap.spec.n_y):
        for ix in range(fmap.spec.n_x):
            yield xs[ix], ys[iy], fmap.values[iy, ix]


def _mask_rows(fmap: FieldMap):
    xs, ys = fmap.spec.xs(), fmap.spec.ys()
    for iy in range(fmap.spec.n_y):
        for ix in range(fmap.spec.n_x):
            yield xs[ix], ys[iy], bool(fmap.mask[iy, ix])


def _plan_for(cfg: ExperimentConfig, scheme: str, geometry=None, seed=None) -> FrequencyPlan:
    g = geometry or cfg.geometry()
    return build_plan(
        scheme,
        g,
        cfg.bob(),
        cfg.f_delta_hz,
        seed=cfg.seed if seed is None else seed,
        solver=cfg.solver(),
        box_half_width_hz=cfg.box_half_width_hz,
    )


def _load_plan_file(path: str) -> FrequencyPlan:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return FrequencyPlan(
        offsets_hz=tuple(data["offsets_hz"]),
        base_increment_hz=data["f_delta_hz"],
        scheme=data.get("scheme", SCHEME_OPTIMIZED),
        seed=data.get("seed"),
    )


def cmd_heatmap(cfg: ExperimentConfig, out_dir: str, plan_file: Optional[str]) -> List[str]:
    written = []
    for scheme in cfg.sweep_schemes:
        plan = _plan_for(cfg, scheme)
        fmap = evaluate_grid(cfg.geometry(), plan, cfg.bob(), cfg.grid())
        meta = _base_metadata(cfg, "heatmap")
        meta.update(scheme=scheme, seed=fmt(plan.seed), step_m=fmt(cfg.step_m))
        path = os.path.join(out_dir, f"heatmap_{scheme}.csv")
        emit_csv(path, ["x_m", "y_m", "normalized_power"], _field_rows(fmap), meta)
        written.append(path)
    return written


def cmd_region(cfg: ExperimentConfig, out_dir: str, plan_file: Optional[str]) -> List[str]:
    mode, value = cfg.effective_threshold()
    written = []
    summary = []
    if plan_file:
        plans = [(SCHEME_OPTIMIZED, _load_plan_file(plan_file))]
    else:
        plans = [(s, _plan_for(cfg, s)) for s in cfg.sweep_schemes]
    for scheme, plan in plans:
        fmap = evaluate_grid(cfg.geometry(), plan, cfg.bob(), cfg.grid())
        region = extract_noncovert(fmap, mode, value)
        meta = _base_metadata(cfg, "region")
        meta.update(
            scheme=scheme,
            seed=fmt(plan.seed),
            threshold_mode=mode,
            threshold_value=fmt(value),
        )
        path = os.path.join(out_dir, f"region_{scheme}.csv")
        emit_csv(path, ["x_m", "y_m", "non_covert"], _mask_rows(fmap), meta)
        written.append(path)
        summary.append(
            (scheme, region.n_noncovert, region.area_m2, region.area_fraction)
        )
    meta = _base_metadata(cfg, "region")
    meta.update(threshold_mode=mode, threshold_value=fmt(value))
    path = os.path.join(out_dir, "region_summary.csv")
    emit_csv(
        path,
        ["scheme", "n_noncovert", "area_m2", "area_fraction"],
        summary,
        meta,
    )
    written.append(path)
    return written


def _cmd_sweep(cfg: ExperimentConfig, out_dir: str, parameter: str) -> List[str]:
    mode, value = cfg.effective_threshold()
    values = cfg.sweep_n_values if parameter == "n_antennas" else cfg.sweep_f_delta_values_hz
    rows = sweep(
        parameter,
        values,
        cfg.sweep_schemes,
        cfg.geometry(),
        cfg.bob(),
        cfg.f_delta_hz,
        cfg.grid(),
        seeds=cfg.sweep_seeds,
        threshold_mode=mode,
        threshold_value=value,
        solver=cfg.solver(),
        box_half_width_hz=cfg.box_half_width_hz,
    )
    meta = _base_metadata(cfg, f"sweep-{parameter}")
    meta.update(
        threshold_mode=mode,
        threshold_value=fmt(value),
        seeds=";".join(str(s) for s in cfg.sweep_seeds),
    )
    name = "sweep_n.csv" if parameter == "n_antennas" else "sweep_fdelta.csv"
    path = os.path.join(out_dir, name)
    emit_csv(
        path,
        [
            "scheme",
            parameter,
            "mean_area_fraction",
            "std_area_fraction",
            "mean_area_m2",
            "n_seeds",
        ],
        [
            (r.scheme, r.value, r.mean_area_fraction, r.std_area_fraction,
             r.mean_area_m2, r.n_seeds)
            for r in rows
        ],
        meta,
    )
    return [path]


def cmd_rate(cfg: ExperimentConfig, out_dir: str, plan_file: Optional[str]) -> List[str]:
    mode, value = cfg.effective_threshold()
    rows = []
    for scheme in cfg.sweep_schemes:
        seeds = cfg.sweep_seeds if scheme == SCHEME_RANDOM else (cfg.seed,)
        for seed in seeds:
            plan = _plan_for(cfg, scheme, seed=seed)
            result = monte_carlo_rate(
                cfg.geometry(),
                plan,
                cfg.bob(),
                cfg.link_budget(),
                cfg.grid(),
                cfg.mc_n_samples,
                cfg.mc_seed,
                threshold_mode=mode,
                threshold_value=value,
            )
            rows.append(
                (scheme, seed, result.mean_rate, result.std_error,
                 result.point_rate, result.area_fraction, result.n_samples)
            )
    meta = _base_metadata(cfg, "rate")
    meta.update(mc_seed=fmt(cfg.mc_seed), threshold_mode=mode, threshold_value=fmt(value))
    path = os.path.join(out_dir, "rate.csv")
    emit_csv(
        path,
        ["scheme", "plan_seed", "mean_rate", "std_error", "point_rate",
         "area_fraction", "n_samples"],
        rows,
        meta,
    )
    return [path]


def cmd_optimize(cfg: ExperimentConfig, out_dir: str, plan_file: Optional[str]) -> List[str]:
    g = cfg.geometry()
    bob = cfg.bob()
    box = cfg.box_half_width_hz if cfg.box_half_width_hz else cfg.f_delta_hz / 2.0
    ramp = np.clip(linear_fda_plan(g, cfg.f_delta_hz).offsets(), -box, box)
    result = optimize_offsets(g, bob, box, config=cfg.solver(), extra_starts=[ramp])
    payload = {
        "generator": f"fdacovert {__version__}",
        "config_sha256": cfg.sha256(),
        "config": cfg.describe(),
        "scheme": SCHEME_OPTIMIZED,
        "n_antennas": g.n_antennas,
        "f_delta_hz": cfg.f_delta_hz,
        "box_half_width_hz": box,
        "seed": cfg.seed,
        "objective": result.objective,
        "start_index": result.start_index,
        "iterations": result.iterations,
        "converged": result.converged,
        "offsets_hz": list(result.offsets_hz),
    }
    path = os.path.join(out_dir, "optimize.json")
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return [path]


def _selftest_checks(cfg: ExperimentConfig):
    g = cfg.geometry()
    bob = cfg.bob()

    def check_xi_roundtrip():
        ys = np.logspace(-8, 1, 40)
        return all(abs(xi(xi_inv(y)) - y) <= 1e-10 for y in ys)

    def check_linear_plan():
        offs = linear_fda_plan(g, cfg.f_delta_hz).offsets()
        return abs(offs.sum()) < 1e-6 and np.allclose(np.diff(offs), -cfg.f_delta_hz)

    def check_random_reproducible():
        a = random_fda_plan(g, cfg.f_delta_hz, 7).offsets_hz
        b = random_fda_plan(g, cfg.f_delta_hz, 7).offsets_hz
        return a == b

    def check_mrt_snr():
        plan = _plan_for(cfg, "LPA")
        h = channel_vector(g, plan, bob)
        w = mrt_weights(h)
        gamma = snr_bob(cfg.link_budget(), h, w)
        return abs(float(np.linalg.norm(w)) - 1.0) < 1e-12 and gamma > 0

    def check_gradient():
        rng = np.random.default_rng(3)
        box = cfg.f_delta_hz / 2
        h = 1e3  # the objective is quadratic: central differences are h-exact
        for _ in range(3):
            f = rng.uniform(-box, box, g.n_antennas)
            _, grad = objective_and_gradient(g, bob, f)
            e = np.zeros_like(f)
            i = int(rng.integers(0, g.n_antennas))
            e[i] = 1.0
            jp = objective_and_gradient(g, bob, f + h * e)[0]
            jm = objective_and_gradient(g, bob, f - h * e)[0]
            fd = (jp - jm) / (2 * h)
            if abs(fd - grad[i]) > 1e-5 * max(abs(fd), abs(grad[i])):
                return False
        return True

    def check_map_determinism():
        from .fieldmap import GridSpec

        small = GridSpec(0.0, 8.0, 0.0, 8.0, 0.1)
        plan = _plan_for(cfg, "RandomFDA", seed=1)
        a = evaluate_grid(g, plan, bob, small, n_threads=1)
        b = evaluate_grid(g, plan, bob, small, n_threads=3)
        return np.array_equal(a.values, b.values, equal_nan=True)

    return [
        ("xi inverse round-trip", check_xi_roundtrip),
        ("linear plan structure", check_linear_plan),
        ("random plan reproducibility", check_random_reproducible),
        ("MRT weights and SNR", check_mrt_snr),
        ("objective gradient vs finite differences", check_gradient),
        ("grid thread-count invariance", check_map_determinism),
    ]


def cmd_selftest(cfg: ExperimentConfig, out_dir: str, plan_file: Optional[str]) -> List[str]:
    failures = 0
    for name, check in _selftest_checks(cfg):
        try:
            ok = check()
        except Exception as exc:  # a crashed invariant is a failed invariant
            ok = False
            print(f"FAIL {name}: {exc}")
        else:
            print(("PASS" if ok else "FAIL") + f" {name}")
        failures += 0 if ok else 1
    if failures:
        raise SelfTestFailure(f"{failures} selftest check(s) failed")
    return []


class SelfTestFailure(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are config errors (exit 1)
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fdacovert", description=__doc__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="path to a sectioned key=value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument(
        "--plan", help="plan JSON emitted by 'optimize', consumed by 'region'"
    )
    return parser


_HANDLERS = {
    "heatmap": cmd_heatmap,
    "region": cmd_region,
    "sweep-n": lambda cfg, out, plan: _cmd_sweep(cfg, out, "n_antennas"),
    "sweep-fdelta": lambda cfg, out, plan: _cmd_sweep(cfg, out, "f_delta"),
    "rate": cmd_rate,
    "optimize": cmd_optimize,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = make_parser().parse_args(argv)
        cfg = load_config(args.config, args.overrides)
        os.makedirs(args.out, exist_ok=True)
        written = _HANDLERS[args.subcommand](cfg, args.out, args.plan)
        for path in written:
            print(f"wrote {path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SelfTestFailure as exc:
        print(f"selftest failure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
