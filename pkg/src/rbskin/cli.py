"""``rbskin`` command line: solve, bake, deform, eval, slice."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import weightfile
from ._assembly import set_workers
from .config import ConfigError, SolveConfig, load_config, parse_overrides
from .geometry import (
    SamplingError,
    WindingContext,
    load_shape,
    winding_number,
    write_edge_csv,
    write_obj,
)
from .optim import NonFiniteError, train
from .skeleton import load_skeleton
from .skinning import PoseError, bake, dqs, lbs, load_pose, write_weights_csv

logger = logging.getLogger("rbskin")

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SAMPLING = 4
EXIT_NONFINITE = 5
EXIT_HASH = 6


class CliError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _file_digest(path) -> str:
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=8).hexdigest()


def _load_shape(path):
    try:
        return load_shape(path)
    except (OSError, ValueError, IndexError) as err:
        raise CliError(EXIT_INPUT, f"cannot read mesh {path}: {err}") from None


def _load_weights(path):
    try:
        return weightfile.load(path)
    except (OSError, weightfile.WeightFileError) as err:
        raise CliError(EXIT_INPUT, f"cannot read weights {path}: {err}") from None


def _field(args):
    wf = _load_weights(args.weights)
    shape = _load_shape(args.mesh)
    try:
        return wf, wf.to_field(shape, check_hash=not args.ignore_hash)
    except weightfile.HashMismatch as err:
        raise CliError(EXIT_HASH, str(err)) from None
    except weightfile.WeightFileError as err:
        raise CliError(EXIT_INPUT, str(err)) from None


def _resolve_config(args) -> tuple[SolveConfig, dict]:
    manifest = {}
    cfg = SolveConfig()
    if args.config:
        try:
            cfg = load_config(args.config)
            if str(args.config).endswith(".json"):
                manifest = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as err:
            raise CliError(EXIT_INPUT, f"cannot read config: {err}") from None
        except ConfigError as err:
            raise CliError(EXIT_INPUT, str(err)) from None
    try:
        if args.seed is not None:
            cfg = cfg.with_updates(seed=args.seed)
        if args.set:
            cfg = cfg.with_updates(**parse_overrides(args.set))
    except ConfigError as err:
        raise CliError(EXIT_USAGE, str(err)) from None
    return cfg, manifest


def cmd_solve(args):
    cfg, manifest = _resolve_config(args)
    if args.print_config:
        sys.stdout.write(cfg.to_toml())
        return 0
    inputs = manifest.get("inputs", {})
    mesh = args.mesh or inputs.get("mesh")
    skel = args.skeleton or inputs.get("skeleton")
    if not mesh or not skel or not args.out:
        raise CliError(EXIT_USAGE, "solve needs --mesh, --skeleton and --out")
    t0 = time.perf_counter()
    shape = _load_shape(mesh)
    try:
        handles = load_skeleton(skel, shape.normalization)
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise CliError(EXIT_INPUT, f"cannot read skeleton {skel}: {err}") from None
    if handles.dim != shape.dim:
        raise CliError(EXIT_INPUT, f"{handles.dim}D skeleton for a {shape.dim}D mesh")
    t_load = time.perf_counter() - t0

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    resolved = cfg.resolved(shape.dim)

    def checkpoint(event, step, fld):
        weightfile.save(out, weightfile.WeightFile.from_field(fld, cfg.w_low, cfg.w_high))

    try:
        result = train(cfg, shape, handles, callback=checkpoint)
    except SamplingError as err:
        raise CliError(EXIT_SAMPLING, f"sampling failed: {err}") from None
    except NonFiniteError as err:
        raise CliError(EXIT_NONFINITE, str(err)) from None

    loss_path = Path(args.loss) if args.loss else out.parent / "loss.csv"
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "loss", "lr", "N"])
        for r in result.trace:
            wr.writerow([r.step, repr(r.loss), repr(r.lr), r.n_sites])

    timings = {"load": t_load, **result.timings}
    doc = {
        "config": resolved.to_dict(),
        "overrides": {k: v for k, v in resolved.to_dict().items() if v != getattr(SolveConfig(), k)},
        "inputs": {
            "mesh": str(Path(mesh).resolve()),
            "skeleton": str(Path(skel).resolve()),
            "mesh_hash": f"{shape.content_hash:016x}",
            "skeleton_digest": _file_digest(skel),
        },
        "outputs": {"weights": str(out.resolve()), "loss": str(loss_path.resolve()),
                    "weights_digest": _file_digest(out)},
        "dimension": shape.dim,
        "handles": len(handles),
        "final_sites": result.field.n_sites,
        "volume_estimate": result.volume,
        "workers": args.workers,
        "timings_seconds": timings,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    man_path = Path(args.manifest) if args.manifest else out.parent / "manifest.json"
    man_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s (N=%d), final loss %.6g", out, result.field.n_sites, result.trace[-1].loss)
    return 0


def _write_deformed(path, shape, verts):
    if shape.dim == 3:
        write_obj(path, verts, shape.facets)
    else:
        write_edge_csv(path, verts, shape.facets)


def cmd_bake(args):
    _, fld = _field(args)
    baked = bake(fld)
    write_weights_csv(args.out, baked)
    return 0


def cmd_deform(args):
    _, fld = _field(args)
    try:
        pose = load_pose(args.pose, fld.n_handles)
    except (OSError, json.JSONDecodeError) as err:
        raise CliError(EXIT_INPUT, f"cannot read pose {args.pose}: {err}") from None
    except PoseError as err:
        raise CliError(EXIT_INPUT, f"bad pose {args.pose}: {err}") from None
    baked = bake(fld)
    verts = lbs(baked, pose) if args.method == "lbs" else dqs(baked, pose)
    _write_deformed(args.out, fld.shape, verts)
    return 0


def _read_points(path, d):
    try:
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    rows.append([float(t) for t in line.split(",")])
                except ValueError:
                    if rows:
                        raise
                    continue  # header
    except (OSError, ValueError) as err:
        raise CliError(EXIT_INPUT, f"cannot read points {path}: {err}") from None
    pts = np.array(rows, dtype=float).reshape(len(rows), -1) if rows else np.zeros((0, d))
    if pts.shape[1] != d:
        raise CliError(EXIT_INPUT, f"{path}: expected {d} columns, got {pts.shape[1]}")
    return pts


def cmd_eval(args):
    _, fld = _field(args)
    pts = _read_points(args.points, fld.dim)
    w = fld.evaluate(fld.shape.normalization.apply(pts)) if len(pts) else np.zeros((0, fld.n_handles))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"w_{i + 1}" for i in range(fld.n_handles)])
        for row in w:
            wr.writerow([repr(float(x)) for x in row])
    return 0


def slice_image(fld, ctx, axis, coord, handle, res):
    """``res x res`` uint8 image of one handle's weight on an axis-aligned plane.

    Pixels are sampled at cell centres of the unit square in normalized
    coordinates; the top row is the largest second coordinate.
    """
    u = (np.arange(res) + 0.5) / res
    uu, vv = np.meshgrid(u, u[::-1])
    if fld.dim == 2:
        pts = np.stack([uu.ravel(), vv.ravel()], axis=1)
    else:
        free = [a for a in range(3) if a != axis]
        pts = np.empty((res * res, 3))
        pts[:, axis] = coord
        pts[:, free[0]] = uu.ravel()
        pts[:, free[1]] = vv.ravel()
    inside = winding_number(ctx, pts) >= ctx.w_low
    img = np.zeros(res * res, dtype=np.uint8)
    if inside.any():
        w = fld.evaluate(pts[inside])[:, handle]
        img[inside] = np.clip(np.rint(255.0 * w), 0, 255).astype(np.uint8)
    return img.reshape(res, res)


def write_pgm(path, img):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def cmd_slice(args):
    wf, fld = _field(args)
    if not 0 <= args.handle < fld.n_handles:
        raise CliError(EXIT_USAGE, f"handle index {args.handle} out of range [0, {fld.n_handles})")
    if args.res < 1:
        raise CliError(EXIT_USAGE, "--res must be positive")
    if fld.dim == 3 and not 0.0 <= args.coord <= 1.0:
        raise CliError(EXIT_USAGE, "--coord must lie in [0, 1]")
    ctx = WindingContext(fld.shape, wf.w_low, wf.w_high)
    img = slice_image(fld, ctx, "xyz".index(args.axis), args.coord, args.handle, args.res)
    write_pgm(args.out, img)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbskin", description="Mesh-free bounded-biharmonic skinning weights.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--workers", type=int, default=1, help="threads for batch evaluation")

    s = sub.add_parser("solve", help="optimize a weight field")
    s.add_argument("--mesh")
    s.add_argument("--skeleton")
    s.add_argument("--out")
    s.add_argument("--config", help="flat TOML file or a previous run manifest (JSON)")
    s.add_argument("--seed", type=int)
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--loss", help="loss trace CSV (default: loss.csv next to --out)")
    s.add_argument("--manifest", help="run manifest (default: manifest.json next to --out)")
    s.add_argument("--print-config", action="store_true")
    common(s)
    s.set_defaults(func=cmd_solve)

    def field_args(sp):
        sp.add_argument("--weights", required=True)
        sp.add_argument("--mesh", required=True)
        sp.add_argument("--ignore-hash", action="store_true", help="accept a different mesh")
        common(sp)

    b = sub.add_parser("bake", help="per-vertex weights as CSV")
    field_args(b)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bake)

    d = sub.add_parser("deform", help="skin the mesh with a pose")
    field_args(d)
    d.add_argument("--pose", required=True)
    d.add_argument("--method", choices=("lbs", "dqs"), default="dqs")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_deform)

    e = sub.add_parser("eval", help="weights at points from a CSV")
    field_args(e)
    e.add_argument("--points", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    sl = sub.add_parser("slice", help="PGM image of one handle's weight on a plane")
    field_args(sl)
    sl.add_argument("--axis", choices=("x", "y", "z"), default="z")
    sl.add_argument("--coord", type=float, default=0.5)
    sl.add_argument("--handle", type=int, required=True)
    sl.add_argument("--res", type=int, default=256)
    sl.add_argument("--out", required=True)
    sl.set_defaults(func=cmd_slice)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise CliError(EXIT_USAGE, "--workers must be >= 1")
        set_workers(args.workers)
        return args.func(args)
    except CliError as err:
        if err.code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        print(f"rbskin: error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
