"""Run configuration files, Fresnel dataset ingestion and result export."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .errors import ConfigError, DataFormatError
from .forward import C0, ScatteringSetup, incident_field, reference_setup
from .geometry import Domain
from .imsa import ImsaConfig, ImsaTrace
from .metrics import TRUTH_MODES, compare, resample_truth
from .shapes import ShapeSpec, shape_from_dict, shape_to_dict
from .som import MinimizerOptions

LENGTH_UNITS = ("m", "lambda")


@dataclass
class CalibrationConfig:
    alpha_grid: List[float] = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    I_grid: List[int] = field(default_factory=lambda: [30, 100, 300, 1000, 1500])
    snr_set: List[float] = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    seeds: List[int] = field(default_factory=lambda: [0])


@dataclass
class BenchConfig:
    """Which benchmark family to run and over which parameter values.

    ``values`` are the swept parameter (SNR in dB for ``tshape``, diagonal
    for ``diamond``, boundary distance for ``two_circles``; lengths in
    ``length_unit``). An empty ``values`` list uses the family default.
    """

    family: str = "tshape"
    values: List[float] = field(default_factory=list)
    repetitions: int = 1
    snr: Optional[float] = 20.0


@dataclass
class FresnelConfig:
    """Layout and geometry of an Institut Fresnel data file.

    ``columns`` maps field names to zero-based column indices; a
    ``frequency`` entry of ``None`` means the file holds one frequency.
    """

    columns: Dict[str, Optional[int]] = field(default_factory=lambda: dict(DEFAULT_FRESNEL_COLUMNS))
    frequency: float = 8e9
    frequency_scale: float = 1e9
    rho_obs: float = 0.76
    calibrate: bool = True
    allow_incomplete: bool = False
    domain_side: float = 0.1125
    domain_center: Tuple[float, float] = (0.0, 0.0)
    target: Optional[Dict[str, Any]] = None


@dataclass
class RunConfig:
    """Everything needed to reproduce one forward, inversion or benchmark run.

    Lengths (``rho_obs``, ``domain_side``, ``domain_center``, shape sizes)
    are expressed in ``length_unit``: meters, or wavelengths at
    ``frequency`` when ``length_unit`` is ``"lambda"``. ``None`` values for
    ``rho_obs`` and ``domain_side`` select 2.2 and 3 wavelengths.
    """

    frequency: float = 300e6
    views: int = 27
    probes: int = 27
    length_unit: str = "lambda"
    rho_obs: Optional[float] = None
    domain_side: Optional[float] = None
    domain_center: Tuple[float, float] = (0.0, 0.0)
    shape: Optional[Dict[str, Any]] = None
    data: Optional[str] = None
    snr: Optional[float] = None
    seed: int = 0
    fine_cells_per_lambda: float = 50.0
    single_resolution: bool = False
    single_cells_per_lambda: float = 10.0
    truth_mode: str = "contour"
    jobs: int = 1
    out: str = "out"
    imsa: ImsaConfig = field(default_factory=ImsaConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    fresnel: FresnelConfig = field(default_factory=FresnelConfig)

    # -- derived quantities ------------------------------------------------

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency

    def meters(self, value: float) -> float:
        return value * self.wavelength if self.length_unit == "lambda" else value

    def setup(self) -> ScatteringSetup:
        lam = self.wavelength
        rho = 2.2 * lam if self.rho_obs is None else self.meters(self.rho_obs)
        return reference_setup(self.frequency, self.views, self.probes, rho / lam)

    def domain(self) -> Domain:
        side = 3 * self.wavelength if self.domain_side is None else self.meters(self.domain_side)
        return Domain(tuple(self.meters(c) for c in self.domain_center), side)

    def shape_spec(self) -> Optional[ShapeSpec]:
        if self.shape is None:
            return None
        return scale_shape(shape_from_dict(self.shape), self.meters(1.0))

    def validate(self) -> "RunConfig":
        errors = []
        if not self.frequency > 0:
            errors.append("frequency must be positive")
        if self.views < 1 or self.probes < 1:
            errors.append("views and probes must be >= 1")
        if self.length_unit not in LENGTH_UNITS:
            errors.append(f"length_unit must be one of {LENGTH_UNITS}")
        for name in ("rho_obs", "domain_side"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                errors.append(f"{name} must be positive")
        if self.fine_cells_per_lambda < 20:
            errors.append("fine_cells_per_lambda must be >= 20")
        if self.single_cells_per_lambda <= 0:
            errors.append("single_cells_per_lambda must be positive")
        if self.truth_mode not in TRUTH_MODES:
            errors.append(f"truth_mode must be one of {TRUTH_MODES}")
        if self.jobs < 1:
            errors.append("jobs must be >= 1")
        if self.bench.repetitions < 0:
            errors.append("bench.repetitions must be >= 0")
        if self.shape is not None:
            try:
                shape_from_dict(self.shape)
            except (TypeError, ValueError) as exc:
                errors.append(f"shape: {exc}")
        try:
            self.imsa.validate()
        except ConfigError as exc:
            errors.append(f"imsa: {exc}")
        if errors:
            raise ConfigError("; ".join(errors))
        return self


def scale_shape(shape: ShapeSpec, factor: float) -> ShapeSpec:
    """Multiply every length of ``shape`` by ``factor``."""
    if factor == 1.0:
        return shape
    kw = {}
    for name in ("side", "radius", "diagonal", "gap"):
        v = getattr(shape, name)
        if v is not None:
            kw[name] = v * factor
    if shape.vertices is not None:
        kw["vertices"] = tuple((a * factor, b * factor) for a, b in shape.vertices)
    return dataclasses.replace(shape, center=(shape.center[0] * factor, shape.center[1] * factor), **kw)


# -- (de)serialization ------------------------------------------------------

_NESTED = {"imsa": ImsaConfig, "calibration": CalibrationConfig, "bench": BenchConfig,
           "fresnel": FresnelConfig}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown field(s) {', '.join(unknown)}")
    kw = {}
    for key, value in data.items():
        if cls is RunConfig and key in _NESTED:
            value = _build(_NESTED[key], value or {}, key)
        elif cls is ImsaConfig and key == "minimizer":
            value = _build(MinimizerOptions, value or {}, "imsa.minimizer")
        elif key in ("domain_center",) and value is not None:
            value = tuple(value)
        kw[key] = value
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def config_from_dict(data: Optional[dict]) -> RunConfig:
    """Build and validate a :class:`RunConfig`; missing fields take defaults."""
    return _build(RunConfig, data or {}, "").validate()


def config_to_dict(config: RunConfig) -> dict:
    d = dataclasses.asdict(config)
    d["domain_center"] = list(config.domain_center)
    d["fresnel"]["domain_center"] = list(config.fresnel.domain_center)
    return d


def load_config(path) -> RunConfig:
    """Read a YAML run configuration.

    Raises
    ------
    ConfigError
        On YAML syntax errors (with line and column) and on invalid fields.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return config_from_dict(data)


def save_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(config_to_dict(config), sort_keys=False))
    return path


# -- synthetic data files -----------------------------------------------------

def save_field_data(path, setup: ScatteringSetup, E_sca, meta: Optional[dict] = None) -> Path:
    """Store a field matrix and its acquisition geometry in a ``.npz`` file."""
    path = Path(path)
    arrays = dict(frequency=setup.frequency, views=setup.views, probes=setup.probes,
                  E_sca=np.asarray(E_sca, dtype=complex),
                  meta=json.dumps(meta or {}, sort_keys=True))
    if setup.probe_mask is not None:
        arrays["probe_mask"] = setup.probe_mask
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_field_data(path) -> Tuple[ScatteringSetup, np.ndarray, dict]:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            mask = z["probe_mask"] if "probe_mask" in z.files else None
            setup = ScatteringSetup(float(z["frequency"]), z["views"], z["probes"], mask)
            return setup, z["E_sca"], json.loads(str(z["meta"]))
    except (OSError, KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: not a field data file ({exc})") from None


# -- Fresnel datasets ---------------------------------------------------------

# view angle, probe angle, frequency, Re/Im total field, Re/Im incident field
DEFAULT_FRESNEL_COLUMNS = {"view": 0, "probe": 1, "frequency": 2,
                           "tot_re": 3, "tot_im": 4, "inc_re": 5, "inc_im": 6}
_FIELD_KEYS = ("view", "probe", "tot_re", "tot_im", "inc_re", "inc_im")


@dataclass
class FresnelData:
    setup: ScatteringSetup
    E_sca: np.ndarray
    E_inc: np.ndarray
    calibration: complex = 1.0


def read_fresnel_table(path, columns: Optional[Dict[str, Optional[int]]] = None) -> np.ndarray:
    """Numeric rows of a whitespace-separated file; '#' starts a comment."""
    columns = dict(DEFAULT_FRESNEL_COLUMNS if columns is None else columns)
    missing = [k for k in _FIELD_KEYS if columns.get(k) is None]
    if missing:
        raise DataFormatError(f"column map lacks {', '.join(missing)}")
    used = [c for c in columns.values() if c is not None]
    rows = []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) <= max(used):
                raise DataFormatError(f"{path}:{lineno}: expected at least {max(used) + 1} columns")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = min(len(r) for r in rows)
    table = np.array([r[:width] for r in rows])
    if not np.isfinite(table[:, used]).all():
        raise DataFormatError(f"{path}: non-finite values")
    return table


def fresnel_calibration(setup: ScatteringSetup, E_inc_measured, view: int = 0) -> complex:
    """Complex factor bringing the measured incident field onto the model plane wave.

    Least-squares fit at the probes of ``view``.
    """
    model = incident_field(setup, setup.probes_for_view(view))[:, view]
    meas = np.asarray(E_inc_measured)[:, view]
    if setup.probe_mask is not None:
        keep = setup.probe_mask[view]
        model, meas = model[keep], meas[keep]
    denom = np.vdot(meas, meas)
    if abs(denom) == 0:
        raise DataFormatError("incident field is zero at the reference view")
    return complex(np.vdot(meas, model) / denom)


def parse_fresnel(path, columns: Optional[Dict[str, Optional[int]]] = None,
                  frequency: float = 8e9, frequency_scale: float = 1e9, rho_obs: float = 0.76,
                  calibrate: bool = True, allow_incomplete: bool = False) -> FresnelData:
    """Group a Fresnel measurement file into an (M, V) scattered-field matrix.

    Records are keyed by (view angle, probe angle) in degrees, so the line
    order of the file is irrelevant. When every view has the same probe
    count the probes are stored per view (sorted by angle from the
    source); otherwise the union of probe angles is used with a per-view
    mask, which requires ``allow_incomplete``.
    """
    columns = dict(DEFAULT_FRESNEL_COLUMNS if columns is None else columns)
    t = read_fresnel_table(path, columns)
    fcol = columns.get("frequency")
    if fcol is not None:
        freqs = t[:, fcol] * frequency_scale
        sel = np.isclose(freqs, frequency, rtol=1e-6, atol=0)
        if not sel.any():
            avail = ", ".join(f"{f / 1e9:g}" for f in np.unique(freqs))
            raise DataFormatError(f"{path}: no record at {frequency / 1e9:g} GHz (have {avail} GHz)")
        t = t[sel]
    view_deg = np.round(t[:, columns["view"]], 6) % 360.0
    probe_deg = np.round(t[:, columns["probe"]], 6) % 360.0
    tot = t[:, columns["tot_re"]] + 1j * t[:, columns["tot_im"]]
    inc = t[:, columns["inc_re"]] + 1j * t[:, columns["inc_im"]]

    keys = np.column_stack([view_deg, probe_deg])
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    if (counts > 1).any():
        v, p = uniq[np.argmax(counts > 1)]
        raise DataFormatError(f"{path}: duplicate record for view {v:g} deg, probe {p:g} deg")

    views = np.unique(view_deg)
    per_view = [np.flatnonzero(view_deg == v) for v in views]
    sizes = {len(rows) for rows in per_view}
    phi = np.deg2rad(views)
    if len(sizes) == 1:
        M = sizes.pop()
        order = [rows[np.argsort((probe_deg[rows] - v) % 360.0, kind="stable")]
                 for v, rows in zip(views, per_view)]
        idx = np.array(order).T  # (M, V)
        ang = np.deg2rad(probe_deg[idx])
        probes = rho_obs * np.stack([np.cos(ang.T), np.sin(ang.T)], axis=-1)
        setup = ScatteringSetup(frequency, phi, probes)
        E_tot, E_inc = tot[idx], inc[idx]
    else:
        all_probes = np.unique(probe_deg)
        if not allow_incomplete:
            raise DataFormatError(f"{path}: views have different probe counts {sorted(sizes)}; "
                                  "pass allow_incomplete to use per-view probe masks")
        pi = np.searchsorted(all_probes, probe_deg)
        vi = np.searchsorted(views, view_deg)
        M, V = len(all_probes), len(views)
        E_tot = np.zeros((M, V), complex)
        E_inc = np.zeros((M, V), complex)
        mask = np.zeros((V, M), bool)
        E_tot[pi, vi], E_inc[pi, vi], mask[vi, pi] = tot, inc, True
        ang = np.deg2rad(all_probes)
        setup = ScatteringSetup(frequency, phi, rho_obs * np.column_stack([np.cos(ang), np.sin(ang)]), mask)

    E_sca = E_tot - E_inc
    factor = 1.0 + 0j
    if calibrate:
        factor = fresnel_calibration(setup, E_inc)
        E_sca = E_sca * factor
    return FresnelData(setup, E_sca, E_inc, factor)


# -- result export ------------------------------------------------------------

def _fmt(v) -> Any:
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else float(f"{v:.12g}")


def step_errors(trace: ImsaTrace, truth: Optional[ShapeSpec], mode: str = "contour") -> List[Optional[dict]]:
    out = []
    for st in trace.steps:
        if truth is None:
            out.append(None)
            continue
        r = compare(resample_truth(truth, st.grid, mode), st.P_binary)
        out.append({"xi_tot": _fmt(r.xi_tot), "xi_int": _fmt(r.xi_int), "xi_ext": _fmt(r.xi_ext),
                    "Q_int": r.Q_int, "Q_ext": r.Q_ext})
    return out


def trace_summary(trace: ImsaTrace, truth: Optional[ShapeSpec] = None, mode: str = "contour",
                  extra: Optional[dict] = None) -> dict:
    errors = step_errors(trace, truth, mode)
    steps = []
    for st, err in zip(trace.steps, errors):
        steps.append({
            "s": st.s,
            "roi": {"center": [_fmt(c) for c in st.roi.center], "side": _fmt(st.roi.side)},
            "n": st.grid.n, "Q": st.grid.Q, "q_th": st.q_th,
            "eta": _fmt(st.eta),
            "next_roi": None if st.next_roi is None else
            {"center": [_fmt(c) for c in st.next_roi.center], "side": _fmt(st.next_roi.side)},
            "active_segments": int(np.count_nonzero(st.P_binary)),
            "errors": err,
            "F": [_fmt(f) for f in st.som_trace.F],
            "stalled": bool(st.som_trace.stalled),
            "seconds": _fmt(st.seconds),
        })
    summary = {"termination": trace.termination, "steps": steps, "seconds": _fmt(trace.seconds),
               "truth_mode": mode if truth is not None else None}
    if truth is not None:
        summary["truth"] = shape_to_dict(truth)
    if trace.steps and truth is not None:
        summary["final_errors"] = errors[-1]
    if extra:
        summary.update(extra)
    return summary


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_som_trace_csv(path, som_trace) -> Path:
    path = Path(path)
    xi = som_trace.xi_tot if som_trace.xi_tot else [None] * len(som_trace.F)
    _write_csv(path, ["iteration", "F", "F_field", "F_curr", "xi_tot"],
               [[i + 1, repr(float(f)), repr(float(ff)), repr(float(fc)),
                 "" if e is None else repr(float(e))]
                for i, (f, ff, fc, e) in enumerate(zip(som_trace.F, som_trace.F_field,
                                                      som_trace.F_curr, xi))])
    return path


def write_segment_map_csv(path, grid, P) -> Path:
    path = Path(path)
    orient = np.where(grid.orientation == 0, "h", "v")
    _write_csv(path, ["q", "x", "y", "orientation", "P"],
               [[q, repr(float(c[0])), repr(float(c[1])), o, int(p)]
                for q, (c, o, p) in enumerate(zip(grid.centers, orient, P))])
    return path


def render_svg(grid, P, roi: Optional[Domain] = None, truth: Optional[ShapeSpec] = None,
               size: int = 480) -> str:
    """SVG drawing of a segment map: one ``<line>`` per segment.

    Active segments are drawn thick and dark, the others thin and light.
    The RoI is outlined in green and the true contour, when given, in red.
    """
    xmin, ymin, xmax, ymax = grid.domain.bounds
    if roi is not None:
        rx0, ry0, rx1, ry1 = roi.bounds
        xmin, ymin, xmax, ymax = min(xmin, rx0), min(ymin, ry0), max(xmax, rx1), max(ymax, ry1)
    pad = 0.05 * (xmax - xmin)
    scale = size / (xmax - xmin + 2 * pad)

    def tx(x):
        return (x - xmin + pad) * scale

    def ty(y):
        return (ymax + pad - y) * scale

    ends = grid.endpoints()
    a, b = ends[:, 0], ends[:, 1]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>', '<g id="segments">']
    for (x0, y0), (x1, y1), p in zip(a, b, P):
        style = 'stroke="#003366" stroke-width="3"' if p else 'stroke="#cccccc" stroke-width="0.5"'
        out.append(f'<line x1="{tx(x0):.3f}" y1="{ty(y0):.3f}" x2="{tx(x1):.3f}" '
                   f'y2="{ty(y1):.3f}" {style}/>')
    out.append("</g>")
    if roi is not None:
        rx0, ry0, rx1, ry1 = roi.bounds
        out.append(f'<rect x="{tx(rx0):.3f}" y="{ty(ry1):.3f}" width="{(rx1 - rx0) * scale:.3f}" '
                   f'height="{(ry1 - ry0) * scale:.3f}" fill="none" stroke="#00aa00" '
                   'stroke-dasharray="6,3"/>')
    if truth is not None:
        for poly in truth.polygons():
            pts = " ".join(f"{tx(x):.3f},{ty(y):.3f}" for x, y in poly)
            out.append(f'<polygon points="{pts}" fill="none" stroke="#dd0000" stroke-width="1.5"/>')
        for c, r in truth.circles():
            out.append(f'<circle cx="{tx(c[0]):.3f}" cy="{ty(c[1]):.3f}" r="{r * scale:.3f}" '
                       'fill="none" stroke="#dd0000" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_reconstruction(trace: ImsaTrace, directory, truth: Optional[ShapeSpec] = None,
                          mode: str = "contour", extra: Optional[dict] = None) -> List[Path]:
    """Write the summary JSON, per-step CSV maps/traces and SVG figures.

    Output is a pure function of ``trace``, so exporting twice gives
    identical files.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        summary = trace_summary(trace, truth, mode, extra)
        p = directory / "summary.json"
        p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        written.append(p)
        for st in trace.steps:
            written.append(write_segment_map_csv(directory / f"step{st.s}_map.csv", st.grid, st.P_binary))
            written.append(write_som_trace_csv(directory / f"step{st.s}_trace.csv", st.som_trace))
            p = directory / f"step{st.s}_map.svg"
            p.write_text(render_svg(st.grid, st.P_binary, st.roi, truth))
            written.append(p)
    except OSError as exc:
        raise OSError(exc.errno, f"export failed: {exc.strerror}", exc.filename) from None
    return written


def write_calibration_csvs(result, directory) -> List[Path]:
    """One CSV for the alpha sweep and one for the iteration sweep."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    snrs = sorted({k[0] for k in result.table})
    by_alpha: Dict[float, Dict[float, float]] = {}
    by_I: Dict[int, Dict[float, float]] = {}
    for (snr, a, I), v in result.table.items():
        if I == result.I_ref:
            by_alpha.setdefault(a, {})[snr] = v
        if a == result.alpha_ref:
            by_I.setdefault(I, {})[snr] = v
    header = [f"xi_tot_snr{s:g}" for s in snrs]

    def rows(d):
        return [[k] + ["" if d[k].get(s) is None else repr(d[k][s]) for s in snrs] for k in sorted(d)]

    pa, pi = directory / "calibration_alpha.csv", directory / "calibration_iterations.csv"
    _write_csv(pa, ["alpha"] + header, rows(by_alpha))
    _write_csv(pi, ["iterations"] + header, rows(by_I))
    return [pa, pi]
