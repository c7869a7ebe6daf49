"""Command-line entry points: ``stretch <command> [options]``.

Every command resolves its options from built-in defaults, an optional
JSON config file (``--config``, one object per command name plus an
optional top-level ``seed``) and command-line flags, in increasing
priority. The resolved options and the seed go into a comment header of
every file written, and reruns with the same options reproduce the files
byte for byte.

Exit codes: 0 success, 2 input error, 3 insufficient data, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from .errors import InputError, InsufficientDataError, StretchError
from .geometry.cloud import write_cloud_csv
from .geometry.frame import read_frame
from .geometry.patch import fit_sphere, measure_diameters
from .mechanics.modulus import ModulusModel, default_model, fit_modulus, loo_validate, write_table
from .mechanics.records import read_records, records_to_arrays
from .palpation import PalpationConfig, palpate, write_result
from .reconstruction import measure_extent, ring_radius, scan, write_cloud
from .scenes import (
    BALLOONS,
    CUBE_SIDE,
    STANDOFF,
    WIRE_RING_DIAMETER,
    balloon_scene,
    cube_scene,
    cube_views,
    dough_scene,
    paper_cube_scene,
    top_view,
    wire_scene,
    wire_views,
)
from .sensing import calibrated_segmenter
from .shaping import DOUGH_PALPATION, ShapingConfig, format_score, shape_dough, write_dough, write_run_log
from .sim.protocol import CALIBRATION_SPHERES, DEFAULT_DEPTHS, DEFAULT_STRETCHES, FORCE_NOISE
from .sim.protocol import Protocol, read_protocol, run_characterization

U64 = 2**64
REPORT_DIAMETER = 20.0  # mm, contact diameter at which the E* range is reported
FIXTURES = {"cylinder20": "cylinder20_frame.txt", "flat": "flat_frame.txt"}
RECONSTRUCT_SCENES = ("cube", "wire", "paper")

DEFAULTS = {
    "characterize": {
        "protocol": None,
        "stretches": list(DEFAULT_STRETCHES),
        "depths": list(DEFAULT_DEPTHS),
        "diameters": list(CALIBRATION_SPHERES),
        "trials": 5,
        "force_noise": FORCE_NOISE,
    },
    "segment": {"frame": None, "fixture": None},
    "validate": {"calibration": None},
    "palpate": {"balloons": list(BALLOONS), "runs": 1, "palpation": {}},
    "shape": {"runs": 5, "shaping": {}},
    "reconstruct": {"scenes": list(RECONSTRUCT_SCENES), "depth": 8.0},
}


# config plumbing -------------------------------------------------------------


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def load_config(path):
    """Parsed JSON config file; any syntax error becomes an ``InputError``."""
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    unknown = set(data) - set(DEFAULTS) - {"seed"}
    if unknown:
        raise InputError(f"{path}: unknown config sections {sorted(unknown)}")
    return data


def resolve(command, file_cfg, flags):
    """Merge defaults, the command's config section and non-None flags; returns ``(options, seed)``."""
    opts = json.loads(json.dumps(DEFAULTS[command]))
    section = file_cfg.get(command, {})
    if not isinstance(section, dict):
        raise InputError(f"config section {command!r} must be an object")
    unknown = set(section) - set(opts)
    if unknown:
        raise InputError(f"unknown {command} options {sorted(unknown)}")
    opts.update(section)
    for key, val in flags.items():
        if key in opts and val is not None:
            opts[key] = val
    seed = flags.get("seed")
    if seed is None:
        seed = file_cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < U64:
        raise InputError("seed must be an unsigned 64-bit integer")
    return opts, seed


def provenance(command, opts, seed):
    cfg = json.dumps(opts, sort_keys=True, separators=(",", ":"))
    return (f"artifact {_version()} stretch {command}", f"seed {seed}", f"config {cfg}")


def _dataclass_from(cls, values, what):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise InputError(f"unknown {what} options {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise InputError(f"bad {what} options: {exc}") from None


def palpation_config(values) -> PalpationConfig:
    return _dataclass_from(PalpationConfig, dict(values), "palpation")


def shaping_config(values) -> ShapingConfig:
    values = dict(values)
    if "palpation" in values:
        values["palpation"] = palpation_config({**DOUGH_PALPATION, **values["palpation"]})
    return _dataclass_from(ShapingConfig, values, "shaping")


def run_seed(seed, run):
    """Seed of the ``run``-th repetition."""
    return (seed + run) % U64


class Reporter:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, text=""):
        if not self.quiet:
            print(text, flush=True)

    def progress(self, text):
        if not self.quiet:
            print(text, file=sys.stderr, flush=True)


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# commands --------------------------------------------------------------------


def cmd_characterize(opts, seed, out, say):
    """Simulated sphere sweep, per-stretch modulus fit and calibration table."""
    if opts["protocol"] is not None:
        proto = replace(read_protocol(opts["protocol"]), seed=seed)
    else:
        proto = Protocol(
            stretches=tuple(float(x) for x in opts["stretches"]),
            depths=tuple(float(d) for d in opts["depths"]),
            geometries=tuple(("sphere", float(d)) for d in opts["diameters"]),
            trials=int(opts["trials"]),
            seed=seed,
            force_noise=float(opts["force_noise"]),
        )
    head = provenance("characterize", opts, seed)
    records = run_characterization(
        proto,
        out=out / "calibration.csv",
        comments=head,
        progress=lambda x, k, p: say.progress(f"  simulated x={x:g} mm {k} {p:g}"),
    )
    say(f"wrote {out / 'calibration.csv'} ({len(records)} records)")
    X, y, trials = records_to_arrays(records)
    if len(np.unique(X[:, 0])) >= 4:
        model = ModulusModel().fit(np.c_[X, trials], y)
        write_table(model, out / "calibration.txt", head)
        E = model.per_stretch_modulus(REPORT_DIAMETER)[:, 0]
        say(f"wrote {out / 'calibration.txt'}")
        say(f"E* at {REPORT_DIAMETER:g} mm contact diameter: {E.min():.3f} to {E.max():.3f} kPa")
        for x, e in zip(model.stretches_, E):
            say(f"  x={x:g} mm  E*={e:.3f} kPa")
        return 0
    # too few stretch states for the stretch law: report the raw per-indenter fits
    say("fewer than 4 stretch states: no calibration table written")
    vals = []
    for x in proto.stretches:
        for kind, d in proto.geometries:
            sel = [r for r in records if r.stretch_x == x and r.param == d and r.trial == 0]
            try:
                E, _ = fit_modulus(sel, min_depth=ModulusModel().min_depth)
            except InsufficientDataError:
                continue
            vals.append(E)
            say(f"  x={x:g} mm  {kind} {d:g} mm  E*={E:.3f} kPa")
    if not vals:
        raise InsufficientDataError("no indenter had enough depths for a modulus fit")
    say(f"E* range over indenters: {min(vals):.3f} to {max(vals):.3f} kPa")
    return 0


def _fixture_path(name):
    if name not in FIXTURES:
        raise InputError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return resources.files("stretch.data").joinpath(FIXTURES[name])


def cmd_segment(opts, seed, out, say):
    """Geometry pipeline on one depth frame: labelled cloud CSV and a patch summary."""
    if (opts["frame"] is None) == (opts["fixture"] is None):
        raise InputError("give either a frame file or --fixture")
    if opts["frame"] is not None:
        src = Path(opts["frame"])
        frame = read_frame(src)
        stem = src.stem
    else:
        with _fixture_path(opts["fixture"]).open() as fh:
            frame = read_frame(fh)
        stem = opts["fixture"]
    cloud, patch = calibrated_segmenter().extract(frame)
    head = provenance("segment", opts, seed)
    write_cloud_csv(cloud, out / f"{stem}_cloud.csv", head)
    lines = segment_summary(patch)
    (out / f"{stem}_summary.txt").write_text("".join(f"# {c}\n" for c in head) + "\n".join(lines) + "\n")
    for line in lines:
        say(line)
    return 0


def segment_summary(patch):
    if patch.empty:
        return ["contact=none", "no contact"]
    di, dj = measure_diameters(patch)
    ei, ej = patch.extents
    lines = [
        f"contact_pixels={patch.size}",
        f"area_mm2={patch.area:.3f}",
        f"extent_i_mm={ei:.3f}",
        f"extent_j_mm={ej:.3f}",
        f"diameter_i_mm={di:.3f}",
        f"diameter_j_mm={dj:.3f}",
    ]
    try:
        fit = fit_sphere(patch)
        lines += [f"sphere_radius_mm={fit.radius:.3f}", f"sphere_rms_mm={fit.rms:.4f}"]
    except StretchError:
        lines.append("sphere_fit=planar")
    return lines


def cmd_validate(opts, seed, out, say):
    """Leave-one-diameter-out force error of a calibration CSV."""
    if opts["calibration"] is None:
        raise InputError("no calibration CSV given")
    records = read_records(opts["calibration"])
    X, y, trials = records_to_arrays(records)
    if len(y) == 0:
        raise InsufficientDataError("calibration holds no sphere records")
    res = loo_validate(np.c_[X, trials], y)
    lines = [
        f"loo_mean_N={res.mean:.9f}",
        f"loo_std_N={res.std:.9f}",
        f"force_range_N={res.force_range:.9f}",
        f"percent_of_range={res.percent_of_range:.6f}",
    ]
    lines += [f"fold_diameter_{d:g}_mm_mean_N={e:.9f}" for d, e in res.folds]
    (out / "loo.txt").write_text("".join(f"# {c}\n" for c in provenance("validate", opts, seed)) + "\n".join(lines) + "\n")
    say(f"LOO force error {res.mean:.4f} +/- {res.std:.4f} N over {len(res.folds)} diameters")
    say(f"{res.percent_of_range:.3f}% of the {res.force_range:.3f} N force range")
    return 0


def cmd_palpate(opts, seed, out, say):
    """Palpate the balloon stand-ins and report their stiffness ordering."""
    kinds = list(opts["balloons"])
    for k in kinds:
        if k not in BALLOONS:
            raise InputError(f"unknown balloon {k!r}; choose from {sorted(BALLOONS)}")
    config = palpation_config(opts["palpation"])
    model = default_model()
    head = provenance("palpate", opts, seed)
    rows = ["run,balloon,spring_N_per_mm,stiffness_N_per_mm,too_stiff,R_star_mm,x_mm"]
    ordered = True
    for run in range(int(opts["runs"])):
        s = run_seed(seed, run)
        got = []
        for kind in kinds:
            est = palpate(balloon_scene(kind, s), model, config)
            write_result(est, out / f"palpate_{kind}_run{run}.csv", head + (f"run {run} seed {s} balloon {kind}",))
            k = est.lower_bound if est.too_stiff else est.stiffness
            got.append(k)
            rows.append(f"{run},{kind},{BALLOONS[kind]:g},{k:.9f},{int(est.too_stiff)},{est.R_star:.6f},{est.x:g}")
            say.progress(f"  run {run} {kind}: {k:.4f} N/mm")
        truth = [BALLOONS[k] for k in kinds]
        ok = [kinds[i] for i in np.argsort(got, kind="stable")] == [kinds[i] for i in np.argsort(truth, kind="stable")]
        ordered &= ok
        ranked = " < ".join(kinds[i] for i in np.argsort(got, kind="stable"))
        say(f"run {run}: {ranked} ({'matches' if ok else 'differs from'} the true ordering)")
    (out / "palpate_summary.csv").write_text("".join(f"# {c}\n" for c in head) + "\n".join(rows) + "\n")
    say(f"ordering preserved in every run: {'yes' if ordered else 'no'}")
    return 0


def cmd_shape(opts, seed, out, say):
    """Shape seeded dough cubes into cookies and report circularity."""
    config = shaping_config(opts["shaping"])
    model = default_model()
    head = provenance("shape", opts, seed)
    rows = ["run,seed,converged,roll_steps,circularity,area_mm2,volume_change"]
    circ = []
    for run in range(int(opts["runs"])):
        s = run_seed(seed, run)
        res = shape_dough(dough_scene(s), model, config)
        tag = head + (f"run {run} seed {s}",)
        if res.aborted is not None:
            rows.append(f"{run},{s},0,0,nan,nan,0")
            say(f"run {run}: aborted, dough never yielded (stiffness >= {res.aborted.lower_bound:.4f} N/mm)")
            continue
        write_run_log(res.roll, out / f"shape_run{run}.csv", tag, res.score)
        write_dough(res.scene.obj, out / f"dough_run{run}.txt", tag)
        circ.append(res.score.circularity)
        rows.append(f"{run},{s},{int(res.roll.converged)},{res.roll.steps},{res.score.circularity:.6f},{res.score.area:.3f},{res.volume_change:.3e}")
        say(f"run {run}: {format_score(res.score)} (area, perimeter, circularity, steps)")
    (out / "shape_summary.csv").write_text("".join(f"# {c}\n" for c in head) + "\n".join(rows) + "\n")
    if not circ:
        raise InsufficientDataError("every shaping run aborted")
    say(f"mean circularity {np.mean(circ):.4f} over {len(circ)} runs")
    return 0


def reconstruct_scene(name, seed, depth):
    """Scan one reconstruction scene; returns the cloud and ``(quantity, measured, true)`` rows."""
    if name == "cube":
        cloud, _ = scan(cube_scene(seed), cube_views(), depth)
        rows = [(f"extent_{a}", measure_extent(cloud, v), CUBE_SIDE) for a, v in zip("xyz", np.eye(3))]
    elif name == "wire":
        cloud, _ = scan(wire_scene(seed), wire_views(), depth)
        rows = [(f"extent_{a}", measure_extent(cloud, v), WIRE_RING_DIAMETER) for a, v in zip("xy", np.eye(3))]
        rows.append(("ring_diameter", 2.0 * ring_radius(cloud), WIRE_RING_DIAMETER))
    elif name == "paper":
        cloud, _ = scan(paper_cube_scene(seed), [top_view((0.0, 0.0, CUBE_SIDE), STANDOFF)], depth)
        rows = [("height", float(np.percentile(cloud.points[:, 2], 99.0)), CUBE_SIDE)]
    else:
        raise InputError(f"unknown scene {name!r}; choose from {list(RECONSTRUCT_SCENES)}")
    if len(cloud) < 2:
        raise InsufficientDataError(f"{name}: scan produced fewer than two points")
    return cloud, rows


def cmd_reconstruct(opts, seed, out, say):
    """Multi-view scans of the rigid cube, the wire ring and the paper cube."""
    head = provenance("reconstruct", opts, seed)
    lines = ["scene,quantity,measured_mm,true_mm,error_mm"]
    for name in opts["scenes"]:
        say.progress(f"  scanning {name}")
        cloud, rows = reconstruct_scene(name, seed, float(opts["depth"]))
        write_cloud(cloud, out / f"cloud_{name}.txt", head + (f"scene {name}",))
        for q, m, t in rows:
            lines.append(f"{name},{q},{m:.6f},{t:g},{abs(m - t):.6f}")
            say(f"{name} {q}: {m:.2f} mm (true {t:g} mm, error {abs(m - t):.2f} mm)")
    (out / "reconstruct_summary.csv").write_text("".join(f"# {c}\n" for c in head) + "\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "characterize": cmd_characterize,
    "segment": cmd_segment,
    "validate": cmd_validate,
    "palpate": cmd_palpate,
    "shape": cmd_shape,
    "reconstruct": cmd_reconstruct,
}


# argument parsing ---------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--seed", type=_seed, help="unsigned 64-bit seed (default 0)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--quiet", action="store_true", help="print nothing but errors")

    parser = argparse.ArgumentParser(prog="stretch", description="Simulated stretchable tactile membrane experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("characterize", parents=[common], help="sphere indentation sweep and modulus calibration")
    p.add_argument("--protocol", help="sweep protocol file")
    p.add_argument("--stretches", type=_floats, help="comma-separated stretch states in mm")
    p.add_argument("--depths", type=_floats, help="comma-separated depths in mm")
    p.add_argument("--diameters", type=_floats, help="comma-separated sphere diameters in mm")
    p.add_argument("--trials", type=int)
    p.add_argument("--force-noise", dest="force_noise", type=float)

    p = sub.add_parser("segment", parents=[common], help="segment one depth frame")
    p.add_argument("frame", nargs="?", help="STRETCH-DEPTH frame file")
    p.add_argument("--fixture", choices=sorted(FIXTURES), help="use a bundled frame instead")

    p = sub.add_parser("validate", parents=[common], help="leave-one-diameter-out check of a calibration CSV")
    p.add_argument("calibration", nargs="?", help="calibration CSV from characterize")

    p = sub.add_parser("palpate", parents=[common], help="stiffness palpation of the balloon scenes")
    p.add_argument("--balloons", type=_names, help=f"comma-separated subset of {','.join(BALLOONS)}")
    p.add_argument("--runs", type=int, help="seeded repetitions (default 1)")

    p = sub.add_parser("shape", parents=[common], help="roll and flatten seeded dough cubes")
    p.add_argument("--runs", type=int, help="seeded dough cubes (default 5)")

    p = sub.add_parser("reconstruct", parents=[common], help="multi-view scans with extent reports")
    p.add_argument("--scenes", type=_names, help=f"comma-separated subset of {','.join(RECONSTRUCT_SCENES)}")
    p.add_argument("--depth", type=float, help="press depth past first touch in mm (default 8)")
    return parser


def run(argv=None):
    """Parse ``argv`` and run the command; returns the exit code."""
    args = build_parser().parse_args(argv)
    say = Reporter(args.quiet)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out", "quiet")}
    try:
        opts, seed = resolve(args.command, load_config(args.config), flags)
        for key in ("runs", "trials"):
            if key in opts and int(opts[key]) < 1:
                raise InputError(f"{key} must be at least 1")
        return COMMANDS[args.command](opts, seed, _outdir(args.out), say)
    except StretchError as exc:
        print(f"stretch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"stretch {args.command}: input error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"stretch {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 4


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
