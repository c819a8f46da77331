"""pose-forge command line: build-db, estimate, track, synth, eval, ablate."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ablation import ablate_sequence, write_ablation_csv
from .colorpair import ClassDb
from .config import PipelineConfig, load_config
from .core import RgbdFrame, Se3Pose, project
from .errors import (AlgorithmFailure, DataError, FormatError, InsufficientClasses, LengthMismatch,
                     NoHypotheses, TrackingLost)
from .io import (frame_indices, frame_paths, read_frame, read_frame_files, read_intrinsics, read_pose,
                 read_ply, read_sequence, write_netpbm, write_pose, write_ply, write_sequence,
                 write_trajectory)
from .metrics import pose_error_record, summarize, write_records_csv, write_summary_json
from .pipeline import EstimateResult, estimate_pose
from .registration import ClassifiedCloud, TriangleHashDb, build_hash_db, classify_scene
from .synth import TexturedMesh, build_model_cloud, generate_sequence, generate_shape, mesh_diameter, surface_cloud
from .tracking import TrackState, init_track, track_step

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ALGORITHM = 0, 1, 2, 3
CLASSDB_FILE = "classdb.json"
HASHDB_FILE = "model.trihash"
HYPOTHESIS_COLUMNS = ("index", "source", "weight", "feature_id", "rx", "ry", "rz", "tx", "ty", "tz")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit 1, not argparse's 2
        raise UsageError(f"{self.prog}: {message}")


def _say(msg: str) -> None:
    print(msg, flush=True)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr, flush=True)


# ---- config ------------------------------------------------------------------------

def _parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def effective_config(args) -> PipelineConfig:
    """File values, then POSE_FORGE_SEED, then command-line flags."""
    cfg = load_config(args.config)
    overrides = _parse_set(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = PipelineConfig.from_dict({**cfg.to_dict(), **overrides})
    if args.write_config:
        cfg.save(args.write_config)
    return cfg


# ---- databases ---------------------------------------------------------------------

def db_paths(db_dir) -> tuple[Path, Path]:
    d = Path(db_dir)
    return d / CLASSDB_FILE, d / HASHDB_FILE


def load_dbs(db_dir) -> tuple[ClassDb, TriangleHashDb]:
    cpath, hpath = db_paths(db_dir)
    for p in (cpath, hpath):
        if not p.is_file():
            raise FormatError(f"missing database file {p}")
    return ClassDb.load(cpath), TriangleHashDb.load(hpath)


def mesh_from_ply(path) -> TexturedMesh:
    ply = read_ply(path)
    if ply.colors is None:
        raise FormatError(f"{path}: mesh has no vertex colors")
    if len(ply.triangles) == 0:
        raise FormatError(f"{path}: mesh has no faces")
    return TexturedMesh(ply.vertices, ply.triangles, ply.colors)


def build_databases(mesh: TexturedMesh, cfg: PipelineConfig) -> tuple[ClassDb, TriangleHashDb]:
    """Class and hash databases; a mesh without usable color borders gets a PPF-only hash db."""
    surface = surface_cloud(mesh)
    try:
        cloud, class_db = build_model_cloud(mesh, cfg.model_views, params=cfg.model())
    except DataError:  # no color pairs at all
        class_db = ClassDb([], cfg.classify_threshold, cfg.lightness_weight)
        cloud = ClassifiedCloud(surface.points, np.full(len(surface), -1), np.zeros(len(surface)),
                                surface.normals)
    return class_db, build_hash_db(cloud, cfg.hash_db(), surface=surface)


def cmd_build_db(args, cfg: PipelineConfig) -> int:
    mesh = mesh_from_ply(args.mesh)
    class_db, hash_db = build_databases(mesh, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cpath, hpath = db_paths(out)
    class_db.save(cpath)
    hash_db.save(hpath)
    n_cls = len(hash_db.model.classes())
    _say(f"classes {len(class_db)} (in model cloud {n_cls}) triangle keys {hash_db.n_triangles} "
         f"ppf pairs {hash_db.n_ppf}")
    _say(f"wrote {cpath} and {hpath}")
    if n_cls < 3:
        _warn(f"only {n_cls} color-pair classes on the model; wrote a PPF-only database")
        raise InsufficientClasses(f"{n_cls} classes, semantic triangles need at least 3")
    return EXIT_OK


# ---- estimate ----------------------------------------------------------------------

_WORKER: dict = {}


def _worker_init(db_dir: str, cfg_dict: dict) -> None:
    _WORKER["dbs"] = load_dbs(db_dir)
    _WORKER["cfg"] = PipelineConfig.from_dict(cfg_dict)


def _estimate_job(seq_dir: str, index: int) -> tuple[int, Optional[np.ndarray], Optional[list], str]:
    class_db, hash_db = _WORKER["dbs"]
    cfg = _WORKER["cfg"]
    frame = read_frame(seq_dir, index)
    try:
        res = estimate_pose(frame, class_db, hash_db, cfg.estimate())
    except NoHypotheses as e:
        return index, None, None, f"{e} ({_scene_counts(frame, class_db, cfg)})"
    return index, res.pose.matrix(), _hypothesis_rows(res), ""


def _scene_counts(frame: RgbdFrame, class_db: ClassDb, cfg: PipelineConfig) -> str:
    try:
        scene = classify_scene(frame, class_db, cfg.extraction())
    except (DataError, AlgorithmFailure) as e:
        return f"scene extraction failed: {e}"
    return f"scene edge points {len(scene)}, classes seen {len(scene.classes())}"


def _hypothesis_rows(res: EstimateResult) -> list:
    rows = []
    for i, h in enumerate(res.hypotheses):
        rv, t = h.pose.rotvec(), h.pose.translation
        rows.append([i, h.source, repr(float(h.weight)), h.feature_id] +
                    [repr(float(x)) for x in rv] + [repr(float(x)) for x in t])
    return rows


def write_hypotheses_csv(path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HYPOTHESIS_COLUMNS)
        w.writerows(rows)


def overlay_image(frame: RgbdFrame, model: ClassifiedCloud, pose: Se3Pose) -> np.ndarray:
    """Frame color with the model cloud projected at ``pose``; class-colored dots, unclassified gray."""
    img = np.array(frame.rgb, copy=True)
    pts = pose.apply(model.points)
    front = pts[:, 2] > 1e-6
    if not front.any():
        return img
    uv = np.rint(project(pts[front], frame.intrinsics)).astype(np.int64)
    ids = model.class_ids[front]
    h, w = frame.shape
    inside = (uv[:, 0] >= 0) & (uv[:, 0] < w) & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    hue = (ids[inside] * 0.618034) % 1.0
    col = np.stack([np.abs(hue * 6 - 3) - 1, 2 - np.abs(hue * 6 - 2), 2 - np.abs(hue * 6 - 4)], axis=1)
    col = np.rint(np.clip(col, 0, 1) * 255).astype(np.uint8)
    col[ids[inside] < 0] = 160
    img[uv[inside, 1], uv[inside, 0]] = col
    return img


def cmd_estimate(args, cfg: PipelineConfig) -> int:
    class_db, hash_db = load_dbs(args.db)
    if args.rgb:
        if not (args.depth and args.mask and args.intrinsics and args.out):
            raise UsageError("--rgb needs --depth, --mask, --intrinsics and --out")
        frame = read_frame_files(args.rgb, args.depth, args.mask, read_intrinsics(args.intrinsics))
        try:
            res = estimate_pose(frame, class_db, hash_db, cfg.estimate())
        except NoHypotheses as e:
            raise NoHypotheses(f"{e} ({_scene_counts(frame, class_db, cfg)})") from e
        write_pose(args.out, res.pose)
        if args.hypotheses_dump:
            write_hypotheses_csv(args.hypotheses_dump, _hypothesis_rows(res))
        if args.overlay:
            write_netpbm(args.overlay, overlay_image(frame, hash_db.model, res.pose))
        _say(f"pose written to {args.out} ({len(res.hypotheses)} hypotheses, {len(res.votes)} vote peaks)")
        return EXIT_OK

    if not (args.sequence and args.out_dir):
        raise UsageError("give either --rgb/--depth/--mask/--intrinsics/--out or --sequence/--out-dir")
    indices = frame_indices(args.sequence)
    if args.frames:
        wanted = [int(x) for x in args.frames.split(",") if x.strip()]
        missing = sorted(set(wanted) - set(indices))
        if missing:
            raise FormatError(f"missing frame file {frame_paths(args.sequence, missing[0])['rgb']}")
        indices = wanted
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for extra in (args.overlay, args.hypotheses_dump):
        if extra:
            Path(extra).mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs, initializer=_worker_init,
                                 initargs=(str(args.db), cfg.to_dict())) as ex:
            results = list(ex.map(_estimate_job, [str(args.sequence)] * len(indices), indices))
    else:
        _WORKER["dbs"], _WORKER["cfg"] = (class_db, hash_db), cfg
        results = [_estimate_job(str(args.sequence), i) for i in indices]
    failed = []
    for index, m, rows, err in results:
        if m is None:
            failed.append(index)
            print(f"frame {index}: {err}", file=sys.stderr)
            continue
        pose = Se3Pose.from_matrix(m)
        write_pose(out / ("%06d_pose.txt" % index), pose)
        if args.hypotheses_dump:
            write_hypotheses_csv(Path(args.hypotheses_dump) / ("%06d_hypotheses.csv" % index), rows)
        if args.overlay:
            frame = read_frame(args.sequence, index)
            write_netpbm(Path(args.overlay) / ("%06d_overlay.ppm" % index),
                         overlay_image(frame, hash_db.model, pose))
    _say(f"estimated {len(results) - len(failed)}/{len(results)} frames into {out}")
    if failed:
        raise NoHypotheses(f"no pose for frames {failed}")
    return EXIT_OK


# ---- track -------------------------------------------------------------------------

def cmd_track(args, cfg: PipelineConfig) -> int:
    if args.stride < 1:
        raise UsageError("--stride must be >= 1")
    class_db, hash_db = load_dbs(args.db)
    indices = frame_indices(args.sequence)
    if not indices:
        raise FormatError(f"no frames in {args.sequence}")
    indices = indices[::args.stride]
    k = read_intrinsics(Path(args.sequence) / "intrinsics.json")
    params = cfg.track()
    init = read_pose(args.init_pose)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    done_frames: list[int] = []
    done_poses: list[Se3Pose] = []
    state: Optional[TrackState] = None
    reinits = 0
    try:
        for index in indices:
            frame = read_frame(args.sequence, index, k)
            if state is None:
                pose = init
                state = init_track(frame, pose, hash_db.model, hash_db.surface)
            else:
                try:
                    state, pose = track_step(state, frame, params)
                except TrackingLost as e:
                    if not args.reinit:
                        raise TrackingLost(f"frame {index}: {e}") from e
                    _warn(f"frame {index}: {e}; re-initializing from estimation")
                    pose = estimate_pose(frame, class_db, hash_db, cfg.estimate()).pose
                    state = init_track(frame, pose, hash_db.model, hash_db.surface)
                    reinits += 1
            write_pose(out / ("%06d_pose.txt" % index), pose)
            done_frames.append(index)
            done_poses.append(pose)
    finally:
        write_trajectory(out / "poses.txt", done_frames, done_poses)
    _say(f"tracked {len(done_frames)} frames (stride {args.stride}, re-initializations {reinits}) into {out}")
    return EXIT_OK


# ---- synth -------------------------------------------------------------------------

def cmd_synth(args, cfg: PipelineConfig) -> int:
    seed = cfg.seed
    mesh = generate_shape(seed, cfg.shape())
    out = Path(args.out)
    if args.kind == "shape":
        if out.parent and not out.parent.exists():
            raise DataError(f"output directory {out.parent} does not exist")
        write_ply(out, mesh.vertices, mesh.triangles, mesh.colors)
        _say(f"mesh seed {seed}: {len(mesh.vertices)} vertices, {len(mesh.triangles)} faces -> {out}")
        return EXIT_OK
    frames, script = generate_sequence(mesh, cfg.sequence(), seed=seed)
    write_sequence(out, frames, list(script.poses))
    write_ply(out / "mesh.ply", mesh.vertices, mesh.triangles, mesh.colors)
    _say(f"sequence seed {seed}: {len(frames)} frames -> {out}")
    return EXIT_OK


# ---- eval --------------------------------------------------------------------------

def _pose_files(directory) -> dict[int, Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"not a directory: {d}")
    out = {}
    for f in d.iterdir():
        stem = f.name[:-len("_pose.txt")]
        if f.name.endswith("_pose.txt") and len(stem) == 6 and stem.isdigit():
            out[int(stem)] = f
    return out


def _eval_job(index: int, est_path: str, gt_path: str, points: np.ndarray):
    return pose_error_record(index, read_pose(est_path), read_pose(gt_path), points)


def cmd_eval(args, cfg: PipelineConfig) -> int:
    est = _pose_files(args.poses)
    gt = _pose_files(args.gt)
    if not est:
        raise FormatError(f"no pose files in {args.poses}")
    missing = sorted(set(est) - set(gt))
    if missing:
        raise LengthMismatch(f"{len(missing)} estimated frames lack ground truth (first: {missing[0]})")
    ply = read_ply(args.model)
    points = ply.vertices
    diameter = mesh_diameter(points)
    order = sorted(est)
    jobs = ([i for i in order], [str(est[i]) for i in order], [str(gt[i]) for i in order], [points] * len(order))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            records = list(ex.map(_eval_job, *jobs))
    else:
        records = [_eval_job(*a) for a in zip(*jobs)]
    summary = summarize(records, diameter)
    write_records_csv(args.out_csv, records)
    write_summary_json(args.out_json, summary)
    _say(f"{len(records)} frames: ADD recall {summary['add_recall']:.4f}, ADD-S recall {summary['adds_recall']:.4f}")
    return EXIT_OK


# ---- ablate ------------------------------------------------------------------------

def cmd_ablate(args, cfg: PipelineConfig) -> int:
    frames, poses = read_sequence(args.sequence, with_poses=True)
    if args.db:
        _warn("the ablation compares raw motion estimates and does not use the databases")
    params = cfg.ablation()
    if len(frames) <= params.stride:
        raise DataError(f"ablation needs at least {params.stride + 1} frames, got {len(frames)}")
    rows = ablate_sequence(frames, poses, seed=cfg.seed, params=params)
    write_ablation_csv(args.out, rows)
    wins = sum(r.filtered_wins for r in rows)
    _say(f"{len(rows)} pairs: filtered beats unfiltered on rotation and translation in {wins} "
         f"({wins / len(rows):.2%}); mean EPE {np.mean([r.epe_raw for r in rows]):.3f} -> "
         f"{np.mean([r.epe_filt for r in rows]):.3f} px")
    return EXIT_OK


# ---- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON (flat keys)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--write-config", metavar="PATH", help="write the effective config as JSON")

    p = _Parser(prog="pose-forge", description="Color-pair 6D pose estimation and tracking for RGB-D.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build-db", parents=[common], help="build class and triangle-hash databases from a mesh")
    b.add_argument("mesh", help="PLY mesh with vertex colors")
    b.add_argument("--out", required=True, help=f"output directory ({CLASSDB_FILE}, {HASHDB_FILE})")

    e = sub.add_parser("estimate", parents=[common], help="single-frame pose estimation")
    e.add_argument("--db", required=True, help="database directory from build-db")
    e.add_argument("--rgb", help="color PPM")
    e.add_argument("--depth", help="16-bit depth PGM in millimeters")
    e.add_argument("--mask", help="object mask PGM")
    e.add_argument("--intrinsics", help="intrinsics JSON")
    e.add_argument("--out", help="pose text output (single-frame mode)")
    e.add_argument("--sequence", help="frame directory (batch mode)")
    e.add_argument("--frames", help="comma-separated frame indices (batch mode, default all)")
    e.add_argument("--out-dir", help="pose output directory (batch mode)")
    e.add_argument("--overlay", help="overlay PPM path (single-frame) or directory (batch)")
    e.add_argument("--hypotheses-dump", help="hypothesis CSV path (single-frame) or directory (batch)")
    e.add_argument("--jobs", type=int, default=1, help="parallel frames in batch mode")

    t = sub.add_parser("track", parents=[common], help="track through a frame directory")
    t.add_argument("--sequence", required=True)
    t.add_argument("--db", required=True)
    t.add_argument("--init-pose", required=True, help="pose text for the first processed frame")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--stride", type=int, default=1, help="process every N-th frame")
    t.add_argument("--reinit", action="store_true", help="re-run estimation when tracking is lost")

    s = sub.add_parser("synth", parents=[common], help="synthetic textured shape or sequence")
    s.add_argument("kind", choices=("shape", "sequence"))
    s.add_argument("--out", required=True, help="PLY path (shape) or directory (sequence)")

    v = sub.add_parser("eval", parents=[common], help="ADD/ADD-S evaluation against ground truth")
    v.add_argument("--poses", required=True, help="directory of NNNNNN_pose.txt estimates")
    v.add_argument("--gt", required=True, help="directory of NNNNNN_pose.txt ground truth")
    v.add_argument("--model", required=True, help="PLY mesh of the object")
    v.add_argument("--out-csv", required=True)
    v.add_argument("--out-json", required=True)
    v.add_argument("--jobs", type=int, default=1)

    a = sub.add_parser("ablate", parents=[common], help="filtered vs unfiltered raw motion estimates")
    a.add_argument("--sequence", required=True, help="frame directory with ground-truth poses")
    a.add_argument("--db", help="accepted for interface symmetry; unused")
    a.add_argument("--out", required=True, help="comparison CSV")
    return p


COMMANDS = {"build-db": cmd_build_db, "estimate": cmd_estimate, "track": cmd_track, "synth": cmd_synth,
            "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = effective_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    except AlgorithmFailure as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ALGORITHM
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
