"""Command-line driver: ``imsasom {forward,invert,calibrate,bench,fresnel}``.

All results go under ``--out``; progress and diagnostics go to stderr.
Exit status: 0 on success, 2 for configuration errors, 3 for unreadable or
malformed data, 4 for numerical failures, 5 when ``--selftest`` fails.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analytic import pec_cylinder_field
from .errors import ConfigError, DataFormatError, ImsaSomError
from .forward import add_noise, solve_forward
from .geometry import Domain
from .imsa import run, run_single_resolution
from .io import (RunConfig, config_from_dict, export_reconstruction, load_config, load_field_data,
                 parse_fresnel, save_config, save_field_data, scale_shape,
                 write_calibration_csvs)
from .metrics import calibrate, compare, resample_truth
from .shapes import ShapeSpec, rectangle, shape_from_dict

log = logging.getLogger("imsasom")

SELFTEST_TOLERANCE = 0.02

# benchmark families: default sweep values and how a value becomes a (shape, snr) pair
BENCH_DEFAULTS = {
    "tshape": [5.0, 10.0, 20.0, 40.0],
    "diamond": [0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5],
    "two_circles": [0.3, 0.35, 0.4, 0.5, 0.6, 0.7],
}

FRESNEL_TARGETS = {
    "rectTM_cent": rectangle(0.0127, 0.0245, (-0.005, -0.0075)),
    "rectTM_dece": rectangle(0.0127, 0.0245, (0.0, 0.04)),
}


# -- helpers -------------------------------------------------------------------

def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.snr is not None:
        cfg.snr = args.snr
    if args.single_resolution:
        cfg.single_resolution = True
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "data", None):
        cfg.data = args.data
    return cfg.validate()


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    return out


def synthesize(cfg: RunConfig, shape: Optional[ShapeSpec], snr, seed: int):
    """Noisy synthetic data for ``shape`` in the configured setup."""
    setup = cfg.setup()
    if shape is None or shape.is_empty():
        E = np.zeros((setup.M, setup.V), complex)
    else:
        E = solve_forward(shape, setup, cfg.fine_cells_per_lambda)
    return setup, add_noise(E, snr, seed)


def invert(cfg: RunConfig, setup, E_sca, domain: Domain, truth: Optional[ShapeSpec],
           single: Optional[bool] = None):
    single = cfg.single_resolution if single is None else single
    if single:
        return run_single_resolution(cfg.imsa, setup, E_sca, domain, cfg.single_cells_per_lambda,
                                     truth, cfg.truth_mode)
    return run(cfg.imsa, setup, E_sca, domain, truth, cfg.truth_mode)


def final_error(trace, truth: ShapeSpec, mode: str) -> float:
    st = trace.final
    return compare(resample_truth(truth, st.grid, mode), st.P_binary).xi_tot


# -- forward -------------------------------------------------------------------

def cmd_forward(cfg: RunConfig, selftest: bool = False) -> int:
    out = _prepare_out(cfg)
    shape = cfg.shape_spec()
    if shape is None:
        raise ConfigError("forward needs a shape")
    setup, E = synthesize(cfg, shape, cfg.snr, cfg.seed)
    meta = {"shape": cfg.shape, "length_unit": cfg.length_unit, "snr": cfg.snr, "seed": cfg.seed}
    save_field_data(out / "field.npz", setup, E, meta)
    log.info("wrote %s", out / "field.npz")
    if selftest:
        if len(shape.circles()) != 1 or shape.polygons():
            raise ConfigError("--selftest needs a single circle")
        c, r = shape.circles()[0]
        clean = solve_forward(shape, setup, cfg.fine_cells_per_lambda)
        ref = pec_cylinder_field(setup, r, c)
        err = float(np.linalg.norm(clean - ref) / np.linalg.norm(ref))
        (out / "selftest.json").write_text(json.dumps(
            {"relative_rms_error": err, "tolerance": SELFTEST_TOLERANCE,
             "passed": err < SELFTEST_TOLERANCE}, indent=2) + "\n")
        log.info("selftest: relative error %.3g against the cylinder series", err)
        if err >= SELFTEST_TOLERANCE:
            return 5
    return 0


# -- invert ----------------------------------------------------------------------

def cmd_invert(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    truth = cfg.shape_spec()
    if cfg.data:
        setup, E, meta = load_field_data(cfg.data)
        if truth is None and meta.get("shape"):
            unit = meta.get("length_unit", "m")
            truth = scale_shape(shape_from_dict(meta["shape"]), cfg.wavelength if unit == "lambda" else 1.0)
    elif truth is not None:
        setup, E = synthesize(cfg, truth, cfg.snr, cfg.seed)
    else:
        raise ConfigError("invert needs a data file or a shape to synthesize data from")
    trace = invert(cfg, setup, E, cfg.domain(), truth)
    export_reconstruction(trace, out, truth, cfg.truth_mode)
    log.info("inversion finished after %d step(s) (%s)", len(trace), trace.termination)
    return 0


# -- calibrate -------------------------------------------------------------------

class _CalibrationCell:
    """Picklable evaluation of one (alpha, I, snr, seed) cell."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg

    def __call__(self, alpha, iterations, snr, seed):
        cfg = self.cfg
        shape = cfg.shape_spec()
        setup, E = synthesize(cfg, shape, snr, seed)
        imsa = dataclasses.replace(cfg.imsa, alpha=alpha, iterations=int(iterations))
        local = dataclasses.replace(cfg, imsa=imsa)
        trace = invert(local, setup, E, cfg.domain(), None)
        return final_error(trace, shape, cfg.truth_mode)


def _pool_map(jobs: int):
    if jobs <= 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=jobs)
    return (lambda fn, items: pool.map(fn, list(items))), pool


def cmd_calibrate(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    if cfg.shape_spec() is None:
        raise ConfigError("calibrate needs a shape")
    cal = cfg.calibration
    mapper, pool = _pool_map(cfg.jobs)
    try:
        result = calibrate(_CalibrationCell(cfg), cal.alpha_grid, cal.I_grid, cal.snr_set,
                           cal.seeds, mapper=mapper)
    finally:
        if pool is not None:
            pool.shutdown()
    write_calibration_csvs(result, out)
    (out / "calibration.json").write_text(json.dumps({
        "alpha_opt": result.alpha_opt, "I_opt": result.I_opt,
        "alpha_by_snr": {str(k): v for k, v in result.alpha_by_snr.items()},
        "I_by_snr": {str(k): v for k, v in result.I_by_snr.items()},
    }, indent=2, sort_keys=True) + "\n")
    log.info("calibrated alpha=%g, I=%d", result.alpha_opt, result.I_opt)
    return 0


# -- bench -----------------------------------------------------------------------

def bench_case(family: str, value: float, snr):
    """Shape (in wavelengths) and SNR of one benchmark point."""
    if family == "tshape":
        return ShapeSpec("tshape", side=0.6), value
    if family == "diamond":
        return ShapeSpec("diamond", diagonal=value), snr
    if family == "two_circles":
        return ShapeSpec("two_circles", radius=0.1, gap=value), snr
    raise ConfigError(f"unknown benchmark family {family!r}")


class _BenchCell:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg

    def __call__(self, job):
        value, rep = job
        cfg = self.cfg
        shape_l, snr = bench_case(cfg.bench.family, value, cfg.bench.snr)
        shape = scale_shape(shape_l, cfg.wavelength)
        seed = cfg.seed + rep
        setup, E = synthesize(cfg, shape, snr, seed)
        row = {"value": value, "repetition": rep, "seed": seed, "snr": snr}
        for label, single in (("imsa", False), ("som", True)):
            t0 = time.perf_counter()
            trace = invert(cfg, setup, E, cfg.domain(), None, single=single)
            row[f"seconds_{label}"] = time.perf_counter() - t0
            row[f"xi_{label}"] = final_error(trace, shape, cfg.truth_mode)
            row[f"steps_{label}"] = len(trace)
        som = row["xi_som"]
        row["delta"] = (som - row["xi_imsa"]) / som if som > 0 else float("nan")
        return row


BENCH_COLUMNS = ["value", "repetition", "seed", "snr", "xi_imsa", "xi_som", "delta",
                 "seconds_imsa", "seconds_som", "steps_imsa", "steps_som"]


def cmd_bench(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    b = cfg.bench
    if b.family not in BENCH_DEFAULTS:
        raise ConfigError(f"unknown benchmark family {b.family!r}; pick one of {sorted(BENCH_DEFAULTS)}")
    values = list(b.values) or BENCH_DEFAULTS[b.family]
    jobs = [(v, r) for v in values for r in range(b.repetitions)]
    mapper, pool = _pool_map(cfg.jobs)
    try:
        rows = list(mapper(_BenchCell(cfg), jobs))
    finally:
        if pool is not None:
            pool.shutdown()
    path = out / f"bench_{b.family}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    means = {}
    for v in values:
        sel = [r for r in rows if r["value"] == v]
        if sel:
            means[str(v)] = {k: float(np.mean([r[k] for r in sel]))
                             for k in ("xi_imsa", "xi_som", "delta", "seconds_imsa", "seconds_som")}
    (out / f"bench_{b.family}.json").write_text(json.dumps(
        {"family": b.family, "repetitions": b.repetitions, "mean": means}, indent=2, sort_keys=True) + "\n")
    log.info("benchmark %s: %d run(s)", b.family, len(rows))
    return 0


# -- fresnel ---------------------------------------------------------------------

def fresnel_target(cfg: RunConfig, data_path: str) -> Optional[ShapeSpec]:
    if cfg.fresnel.target is not None:
        return shape_from_dict(cfg.fresnel.target)
    for name, shape in FRESNEL_TARGETS.items():
        if name in Path(data_path).name:
            return shape
    return None


def run_fresnel(cfg: RunConfig, data_path: str, single: bool):
    fc = cfg.fresnel
    data = parse_fresnel(data_path, fc.columns, fc.frequency, fc.frequency_scale, fc.rho_obs,
                         fc.calibrate, fc.allow_incomplete)
    domain = Domain(tuple(fc.domain_center), fc.domain_side)
    truth = fresnel_target(cfg, data_path)
    t0 = time.perf_counter()
    trace = invert(cfg, data.setup, data.E_sca, domain, truth, single=single)
    return trace, truth, time.perf_counter() - t0, data


def cmd_fresnel(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    if not cfg.data:
        raise ConfigError("fresnel needs --data pointing at a Fresnel measurement file")
    if not Path(cfg.data).is_file():
        raise DataFormatError(f"no such data file: {cfg.data}")
    trace, truth, seconds, data = run_fresnel(cfg, cfg.data, cfg.single_resolution)
    extra = {"calibration_factor": [data.calibration.real, data.calibration.imag],
             "wall_clock": seconds}
    export_reconstruction(trace, out, truth, cfg.truth_mode, extra)
    return 0


# -- entry point -----------------------------------------------------------------

COMMANDS = {"forward": cmd_forward, "invert": cmd_invert, "calibrate": cmd_calibrate,
            "bench": cmd_bench, "fresnel": cmd_fresnel}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="noise seed")
    common.add_argument("--snr", type=float, help="signal-to-noise ratio in dB")
    common.add_argument("--single-resolution", action="store_true",
                        help="plain SOM on a lambda/10 grid instead of the zooming loop")
    common.add_argument("--jobs", type=int, help="concurrent repetitions (calibrate, bench)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="imsasom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("forward", parents=[common], help="synthesize scattered-field data")
    p.add_argument("--selftest", action="store_true",
                   help="check a circle against the analytic cylinder series")
    for name, text in (("invert", "reconstruct a PEC profile"),
                       ("fresnel", "invert an Institut Fresnel data file")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", metavar="PATH", help="field data file")
    sub.add_parser("calibrate", parents=[common], help="sweep alpha and the iteration count")
    sub.add_parser("bench", parents=[common], help="IMSA-SOM versus single-resolution SOM")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _effective_config(args)
        if args.command == "forward":
            return cmd_forward(cfg, args.selftest)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (DataFormatError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return 3
    except ImsaSomError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 4
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
