"""Command-line driver: scenario configs, trajectory tables and JSON reports.

Exit status is 0 when every requested check passes, 1 when some verdict
fails (or a return map comes up short), 2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from . import analysis as an
from .errors import (
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    IncompleteError,
    ProjdynError,
)
from .exterior import blades, wedge_arrays
from .forces import (
    ForceField,
    JacobiAttractor,
    KeplerField,
    ZeroField,
    power_law_field,
    validate_field,
)
from .integrate import IntegratorConfig, Trajectory, integrate
from .screens import (
    CylinderScreen,
    FlatScreen,
    GeneralQuadraticScreen,
    ProjectiveState,
    Screen,
    ScreenState,
    SphereScreen,
    decomposability_residual,
)

OUTPUT_ENV = "PROJDYN_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


# --------------------------------------------------------------------------
# configuration


def load_schema() -> dict:
    text = resources.files("projdyn").joinpath("data/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def demo_config_path() -> Path:
    return Path(str(resources.files("projdyn").joinpath("data/kepler_demo.json")))


@dataclass
class ScenarioConfig:
    name: str
    dim: int
    screen: Screen
    field: ForceField
    initial: Any
    t_end: float
    grid: Any
    integrator: IntegratorConfig
    analyses: list
    seed: int
    target_screen: Optional[Screen] = None
    raw: dict = field(default_factory=dict, repr=False)


def _path(parts) -> str:
    return ".".join(str(p) for p in parts)


def build_screen(entry: dict, dim: int) -> Screen:
    kind = entry["type"]
    if kind == "flat":
        return FlatScreen(entry["form"])
    if kind == "sphere":
        return SphereScreen(entry.get("B"), dim=dim)
    if kind == "cylinder":
        return CylinderScreen(entry["B"])
    return GeneralQuadraticScreen(entry["B"])


def build_field(entry: dict, dim: int) -> ForceField:
    kind = entry["type"]
    last = np.eye(dim)[-1]
    if kind == "zero":
        return ZeroField(dim)
    if kind == "kepler":
        if "B" not in entry and "c" not in entry:
            return KeplerField.standard(dim)
        c = np.asarray(entry.get("c", last), dtype=float)
        B = entry.get("B")
        if B is None:
            B = np.diag(np.append(np.ones(dim - 1), 0.0))
        return KeplerField(c, B)
    if kind == "jacobi":
        return JacobiAttractor.anisotropic(entry["M"], entry.get("c"), entry.get("h"))
    return power_law_field(entry["c"], entry["h"], entry["beta"], entry.get("B"))


def builtin_field(name: str, dim: int) -> ForceField:
    """Default-parameter field for the command line's ``--field`` shortcut."""
    last = np.eye(dim)[-1].tolist()
    presets = {
        "zero": {"type": "zero"},
        "kepler": {"type": "kepler"},
        "jacobi": {"type": "jacobi", "M": np.diag(np.arange(1.0, dim + 1)).tolist()},
        "power": {"type": "power", "c": last, "h": last, "beta": 0.0},
    }
    if name not in presets:
        raise ConfigValidationError("unknown field", [("field", f"expected one of {sorted(presets)}")])
    return build_field(presets[name], dim)


def _check_lengths(doc: dict, dim: int, errors: list) -> None:
    nbiv = math.comb(dim, 2)

    def vec(parts, value, n):
        if isinstance(value, list) and len(value) != n:
            errors.append((_path(parts), f"expected length {n}, got {len(value)}"))

    def mat(parts, value):
        if not isinstance(value, list):
            return
        if len(value) != dim or any(not isinstance(r, list) or len(r) != dim for r in value):
            errors.append((_path(parts), f"expected a {dim}x{dim} matrix"))

    for key in ("screen", "target_screen"):
        entry = doc.get(key)
        if isinstance(entry, dict):
            if "form" in entry:
                vec([key, "form"], entry["form"], dim)
            if "B" in entry:
                mat([key, "B"], entry["B"])
    entry = doc.get("field")
    if isinstance(entry, dict):
        for k in ("c", "h"):
            if k in entry:
                vec(["field", k], entry[k], dim)
        for k in ("B", "M"):
            if k in entry:
                mat(["field", k], entry[k])
    init = doc.get("initial")
    if isinstance(init, dict):
        for k in ("q", "qdot", "ray"):
            if k in init:
                vec(["initial", k], init[k], dim)
        if "pi" in init:
            vec(["initial", "pi"], init["pi"], nbiv)


def parse_config(source) -> ScenarioConfig:
    """Parse and validate a scenario from a path, JSON text or dict.

    Raises ConfigParseError for malformed JSON and ConfigValidationError
    listing every schema or semantic violation with its field path.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            try:
                text = Path(source).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigParseError(f"cannot read {source}", [("", str(exc))]) from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParseError("malformed JSON", [("", f"line {exc.lineno} column {exc.colno}: {exc.msg}")]) from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        errors.append((_path(err.absolute_path), err.message))
    dim = doc.get("dim") if isinstance(doc, dict) else None
    if isinstance(dim, int) and 3 <= dim <= 5:
        _check_lengths(doc, dim, errors)
    if errors:
        raise ConfigValidationError("invalid scenario", errors)
    return _build(doc)


def _build(doc: dict) -> ScenarioConfig:
    dim = doc["dim"]
    errors = []
    screen = target = fs = init = None
    try:
        screen = build_screen(doc["screen"], dim)
    except (ProjdynError, ValueError) as exc:
        errors.append(("screen", str(exc)))
    if "target_screen" in doc:
        try:
            target = build_screen(doc["target_screen"], dim)
        except (ProjdynError, ValueError) as exc:
            errors.append(("target_screen", str(exc)))
    try:
        fs = build_field(doc["field"], dim)
    except (ProjdynError, ValueError) as exc:
        errors.append(("field", str(exc)))
    entry = doc["initial"]
    if screen is not None:
        try:
            if "q" in entry:
                init = ScreenState(entry["q"], entry["qdot"], screen)
            else:
                init = ProjectiveState(entry["ray"], entry["pi"])
                if not screen.in_domain(init.ray.coeffs):
                    raise ValueError("ray outside the screen's domain")
        except (ProjdynError, ValueError) as exc:
            key = "initial.q" if "q" in entry else "initial.ray"
            errors.append((key, str(exc)))
    try:
        integ = IntegratorConfig(**doc.get("integrator", {}))
    except (ProjdynError, ValueError, TypeError) as exc:
        errors.append(("integrator", str(exc)))
        integ = None
    grid = doc.get("grid", 201)
    if isinstance(grid, list) and (grid[0] != 0 or any(b <= a for a, b in zip(grid, grid[1:]))):
        errors.append(("grid", "explicit times must start at 0 and increase strictly"))
    if errors:
        raise ConfigValidationError("invalid scenario", errors)
    return ScenarioConfig(
        name=doc.get("name", "scenario"),
        dim=dim,
        screen=screen,
        field=fs,
        initial=init,
        t_end=float(doc["t_end"]),
        grid=grid,
        integrator=integ,
        analyses=list(doc.get("analyses", [])),
        seed=int(doc.get("seed", 0)),
        target_screen=target,
        raw=doc,
    )


# --------------------------------------------------------------------------
# trajectory and report files


def trajectory_header(dim: int) -> list[str]:
    cols = ["t"] + [f"q_{i + 1}" for i in range(dim)]
    cols += ["pi_" + "".join(str(i + 1) for i in b) for b in blades(dim, 2)]
    return cols + ["h_residual", "decomposability_residual"]


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per sample; floats written with repr so re-import is exact."""
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(traj.dim))
    hres = traj.h_residuals()
    for k in range(len(traj)):
        row = [traj.t[k], *traj.q[k], *traj.pi[k], hres[k], decomposability_residual(traj.q[k], traj.pi[k])]
        w.writerow([repr(float(x)) for x in row])
    _atomic_write(Path(path), buf.getvalue())


def read_trajectory_csv(path, screen: Screen, fs: ForceField | None = None) -> Trajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    dim = screen.dim
    if header != trajectory_header(dim):
        raise ConfigValidationError("trajectory table does not match the screen dimension", [("header", ",".join(header))])
    data = np.array([[float(x) for x in r] for r in body])
    nb = math.comb(dim, 2)
    return Trajectory(screen, fs, data[:, 0], data[:, 1 : 1 + dim], data[:, 1 + dim : 1 + dim + nb])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_report(report: dict, path) -> None:
    _atomic_write(Path(path), json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# analyses


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def run_analysis(entry: dict, sc: ScenarioConfig, traj: Trajectory) -> dict:
    name = entry["name"]
    fs = sc.field
    if name == "invariants":
        tol = entry.get("tol", 1e-9)
        h = float(traj.h_residuals().max())
        d = float(traj.decomposability_residuals().max())
        return {"max_h_residual": h, "max_decomposability_residual": d, "tolerance": tol,
                "verdict": _verdict(h < tol and d < tol)}
    if name == "areas":
        tol = entry.get("tol", 1e-8)
        if fs.center is None:
            return {"error": "field has no center", "verdict": "fail", "tolerance": tol}
        C, drift = an.constant_of_areas(fs.center, traj)
        return {"C": C.C.coeffs, "max_drift": drift, "tolerance": tol, "verdict": _verdict(drift < tol)}
    if name == "pi_constant":
        tol = entry.get("tol", 1e-10)
        p0 = traj.pi[0]
        scale = max(np.linalg.norm(p0), 1e-300)
        dev = float(np.max(np.linalg.norm(traj.pi - p0, axis=1)) / scale)
        return {"max_deviation": dev, "tolerance": tol, "verdict": _verdict(dev < tol)}
    if name == "great_circle":
        tol = entry.get("tol", 1e-9)
        _, _, resid = an.fit_plane(traj.q, through_origin=True)
        return {"max_plane_residual": resid, "tolerance": tol, "verdict": _verdict(resid < tol)}
    if name == "conic":
        tol = entry.get("tol", 1e-7)
        rate_tol = entry.get("rate_tol", 1e-8)
        rep = an.conic_analysis(traj, h=entry.get("h"))
        out = rep.as_dict()
        if rep.classification == "line":
            ok = rep.vertical_fit_residual is not None and rep.vertical_fit_residual < tol
        else:
            ok = rep.max_plane_residual < tol and rep.theta_rate_deviation < rate_tol and rep.focus_residual < tol
        if "expect" in entry:
            ok = ok and rep.classification == entry["expect"]
        out.update({"tolerance": tol, "rate_tolerance": rate_tol, "verdict": _verdict(ok)})
        return out
    if name == "divergence":
        tol = entry.get("tol", 1e-5)
        rep = an.divergence_check(fs, count=entry.get("points", 50), seed=sc.seed, tol=tol,
                                  expect_closed=entry.get("expect_closed"))
        return rep.as_dict()
    if name == "validate_field":
        rep = validate_field(fs, entry.get("samples", 100), sc.seed, entry.get("tol", 1e-10))
        return rep.as_dict()
    if name == "return_map":
        return return_map_report(sc, k=entry.get("k", 1), source=entry.get("source", 0.0),
                                 target=entry.get("target"), tol=entry.get("tol", 1e-6),
                                 expect_identity=entry.get("expect_identity"))
    raise ConfigValidationError("unknown analysis", [("analyses", name)])


def _initial_projective(sc: ScenarioConfig) -> ProjectiveState:
    init = sc.initial
    if isinstance(init, ScreenState):
        return ProjectiveState(init.q, init.pi)
    return init


def return_map_report(sc: ScenarioConfig, k: int = 1, source: float = 0.0, target=None, tol: float = 1e-6,
                      expect_identity=None) -> dict:
    fs = sc.field
    frame = an.LeafFrame.for_field(fs)
    if expect_identity is None:
        expect_identity = isinstance(fs, KeplerField)
    p = _initial_projective(sc)
    start = frame.normalize(p.ray.coeffs, p.pi.coeffs, source)
    out = {"k": k, "source": source, "target": source if target is None else target, "tolerance": tol,
           "initial": [start.z, start.ydot, start.zdot]}
    try:
        res = an.return_map(fs, start, source, target, k, frame=frame, cfg=sc.integrator)
    except IncompleteError as exc:
        out.update({"error": str(exc), "verdict": "fail", "incomplete": True})
        return out
    out.update({"state": [res.state.z, res.state.ydot, res.state.zdot], "t": res.t,
                "crossing_times": [e.t for e in res.crossings]})
    ok = True
    if res.g is not None:
        out["omega"] = res.g.omega
        out["omega_norm"] = res.g.norm()
        if expect_identity:
            ok = res.g.norm() < tol
    out["expect_identity"] = bool(expect_identity)
    out["verdict"] = _verdict(ok)
    return out


# --------------------------------------------------------------------------
# commands


def _apply_overrides(sc: ScenarioConfig, seed, tol) -> ScenarioConfig:
    if seed is not None:
        sc = replace(sc, seed=seed)
    if tol is not None:
        sc = replace(sc, integrator=replace(sc.integrator, rel_tol=tol))
    return sc


def _grid_arg(grid):
    return np.asarray(grid, dtype=float) if isinstance(grid, list) else int(grid)


def _base_report(sc: ScenarioConfig, command: str) -> dict:
    return {"command": command, "scenario": sc.name, "seed": sc.seed, "config": sc.raw,
            "integrator": asdict(sc.integrator)}


def _overall(analyses: dict) -> str:
    return "pass" if all(a.get("verdict") == "pass" for a in analyses.values()) else "fail"


def simulate(sc: ScenarioConfig, out_dir: Path) -> int:
    traj = integrate(sc.field, sc.screen, sc.initial, sc.t_end, sc.integrator, t_eval=_grid_arg(sc.grid))
    write_trajectory_csv(traj, out_dir / f"{sc.name}.csv")
    analyses = {}
    for i, entry in enumerate(sc.analyses):
        key = entry["name"] if entry["name"] not in analyses else f"{entry['name']}_{i}"
        analyses[key] = run_analysis(entry, sc, traj)
    report = _base_report(sc, "simulate")
    report.update({"terminated_by": traj.terminated_by, "samples": len(traj),
                   "t_final": float(traj.t[-1]), "analyses": analyses, "verdict": _overall(analyses)})
    write_report(report, out_dir / f"{sc.name}.report.json")
    return EXIT_OK if report["verdict"] == "pass" else EXIT_FAIL


def _simulate_job(args):
    path, seed, tol, out_dir = args
    try:
        sc = _apply_overrides(parse_config(path), seed, tol)
        return simulate(sc, Path(out_dir)), None
    except ConfigError as exc:
        return EXIT_ERROR, str(exc)
    except Exception as exc:  # reported, never silently swallowed
        return EXIT_ERROR, f"{type(exc).__name__}: {exc}"


def cmd_simulate(args, out_dir: Path) -> int:
    jobs = [(p, args.seed, args.tol, str(out_dir)) for p in args.configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_job, jobs))
    else:
        results = [_simulate_job(j) for j in jobs]
    for (path, *_), (code, msg) in zip(jobs, results):
        if msg:
            print(f"{path}: {msg}", file=sys.stderr)
    return max(code for code, _ in results)


def cmd_kepler_demo(args, out_dir: Path) -> int:
    sc = _apply_overrides(parse_config(demo_config_path()), args.seed, args.tol)
    code = simulate(sc, out_dir)
    report = json.loads((out_dir / f"{sc.name}.report.json").read_text())
    conic = report["analyses"]["conic"]
    print(f"classification: {conic['classification']}  verdict: {report['verdict']}")
    return code


def cmd_compare_screens(args, out_dir: Path) -> int:
    sc = _apply_overrides(parse_config(args.config), args.seed, args.tol)
    target = build_screen(json.loads(args.target), sc.dim) if args.target else sc.target_screen
    if target is None:
        raise ConfigValidationError("no target screen", [("target_screen", "required for compare-screens")])
    samples = sc.grid if isinstance(sc.grid, int) else len(sc.grid)
    rep = an.compare_screens(sc.field, sc.screen, target, _initial_projective(sc), sc.t_end,
                             sc.integrator, samples=samples, tol=args.threshold)
    report = _base_report(sc, "compare-screens")
    report.update({"target_screen": target.describe(), "analyses": {"compare_screens": rep.as_dict()},
                   "verdict": rep.verdict})
    write_report(report, out_dir / f"{sc.name}.compare.json")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _field_from_args(args):
    if args.config:
        sc = parse_config(args.config)
        seed = sc.seed if args.seed is None else args.seed
        return sc.field, seed, sc.name
    return builtin_field(args.field, args.dim), (0 if args.seed is None else args.seed), f"{args.field}_dim{args.dim}"


def cmd_check_divergence(args, out_dir: Path) -> int:
    fs, seed, name = _field_from_args(args)
    rep = an.divergence_check(fs, count=args.points, seed=seed, step=args.step, tol=args.threshold,
                              expect_closed=True if args.expect_closed else None)
    report = {"command": "check-divergence", "scenario": name, "seed": seed, "field": fs.describe(),
              "analyses": {"divergence": rep.as_dict()}, "verdict": rep.verdict}
    write_report(report, out_dir / f"{name}.divergence.json")
    print(f"identity residual {rep.max_identity_residual:.3e}  closedness {rep.max_closedness_residual}  {rep.verdict}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_validate_field(args, out_dir: Path) -> int:
    fs, seed, name = _field_from_args(args)
    rep = validate_field(fs, args.samples, seed, args.threshold)
    report = {"command": "validate-field", "scenario": name, "seed": seed, "field": fs.describe(),
              "analyses": {"validate_field": rep.as_dict()}, "verdict": rep.verdict}
    write_report(report, out_dir / f"{name}.validation.json")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_return_map(args, out_dir: Path) -> int:
    sc = _apply_overrides(parse_config(args.config), args.seed, args.tol)
    rep = return_map_report(sc, args.k, args.source, args.target, args.threshold,
                            True if args.expect_identity else None)
    report = _base_report(sc, "return-map")
    report.update({"analyses": {"return_map": rep}, "verdict": rep["verdict"]})
    write_report(report, out_dir / f"{sc.name}.return_map.json")
    return EXIT_OK if rep["verdict"] == "pass" else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projdyn", description="Projective dynamics scenarios and checks.")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--tol", type=float, default=None, help="override the integrator relative tolerance")
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUTPUT_ENV} or the current directory)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate scenarios, write CSV trajectories and JSON reports")
    s.add_argument("configs", nargs="+")
    s.add_argument("--jobs", type=int, default=1, help="run independent scenarios in parallel")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare-screens", help="integrate on two screens and compare after transport")
    s.add_argument("config")
    s.add_argument("--target", default=None, help="target screen as JSON (overrides target_screen)")
    s.add_argument("--threshold", type=float, default=1e-6)
    s.set_defaults(func=cmd_compare_screens)

    for name, func, thr in (("check-divergence", cmd_check_divergence, 1e-5),
                            ("validate-field", cmd_validate_field, 1e-10)):
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", default=None)
        s.add_argument("--field", default="kepler", help="built-in field when no config is given")
        s.add_argument("--dim", type=int, default=4)
        s.add_argument("--threshold", type=float, default=thr)
        if name == "check-divergence":
            s.add_argument("--points", type=int, default=50)
            s.add_argument("--step", type=float, default=None)
            s.add_argument("--expect-closed", action="store_true", help="also require d(f ⌟ mu) = 0")
        else:
            s.add_argument("--samples", type=int, default=100)
        s.set_defaults(func=func)

    s = sub.add_parser("return-map", help="k-th return to a leaf around the center")
    s.add_argument("config")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--source", type=float, default=0.0, help="source leaf angle")
    s.add_argument("--target", type=float, default=None, help="target leaf angle (default: source)")
    s.add_argument("--threshold", type=float, default=1e-6)
    s.add_argument("--expect-identity", action="store_true")
    s.set_defaults(func=cmd_return_map)

    s = sub.add_parser("kepler-demo", help="run the shipped Kepler cylinder scenario")
    s.set_defaults(func=cmd_kepler_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out or os.environ.get(OUTPUT_ENV) or ".")
    try:
        return args.func(args, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ProjdynError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
