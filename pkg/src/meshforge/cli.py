"""Command-line entry point: ``meshforge <subcommand> [flags]``.

Exit status: 0 on success, 1 on validation errors (bad flags, paths, config
or dataset content), 2 on runtime and numeric failures.
"""
from __future__ import annotations

import argparse
import difflib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import recover_net as rn
from .body_model import (METRIC_JOINT_MAP, BodyShape, load_template, procedural_template, shaped_vertices,
                         skin, write_obj)
from .cloth import SimConfig, body_colliders, build_garment, drape, load_pattern, update_pin_anchors
from .errors import MeshforgeError, ValidationError
from .metrics import evaluate_sequence, format_table, mean_report
from .pose_sequence import InterpConfig, contrast_sequence, load_sequence, save_sequence, t_pose
from .scene_gen import (SceneConfig, dataset_template, export_dataset, generate_sequence, import_dataset,
                        load_annotations, rasterize_preview, sequence_seed, transfer)

log = logging.getLogger("meshforge.cli")

CONFIG_SCHEMA_VERSION = 1
_SECTIONS = {"scene": SceneConfig, "sim": SimConfig, "train": rn.TrainConfig, "model": rn.ModelConfig,
             "interp": InterpConfig}


class UsageError(ValidationError):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    train: rn.TrainConfig = field(default_factory=rn.TrainConfig)
    model: rn.ModelConfig = field(default_factory=rn.ModelConfig)
    interp: InterpConfig = field(default_factory=InterpConfig)

    def to_dict(self) -> dict:
        out = {"schema_version": CONFIG_SCHEMA_VERSION}
        for name in _SECTIONS:
            section = asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out


def _unknown(key: str, allowed, where: str):
    hint = difflib.get_close_matches(key, list(allowed), n=1)
    suffix = f"; did you mean {hint[0]!r}?" if hint else f"; allowed: {', '.join(sorted(allowed))}"
    return ValidationError(f"{where}: unknown key {key!r}{suffix}")


def validate_config(source=None) -> RunConfig:
    """Parse a JSON config (path, dict or None) into a fully populated RunConfig.

    Unknown keys are rejected; every default that gets applied is logged.
    """
    where = "config"
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = source
    else:
        where = str(source)
        path = Path(source)
        if not path.is_file():
            raise ValidationError(f"{where}: config file not found")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{where}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{where}: top level must be an object")
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ValidationError(f"{where}: schema_version {version!r} is not supported (expected {CONFIG_SCHEMA_VERSION})")
    for key in doc:
        if key != "schema_version" and key not in _SECTIONS:
            raise _unknown(key, list(_SECTIONS) + ["schema_version"], where)
    built = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name) or {}
        if not isinstance(section, dict):
            raise ValidationError(f"{where}: section {name!r} must be an object")
        names = [f.name for f in fields(cls)]
        for key in section:
            if key not in names:
                raise _unknown(key, names, f"{where}: [{name}]")
        kwargs = {}
        for f in fields(cls):
            if f.name in section:
                value = section[f.name]
                kwargs[f.name] = tuple(value) if isinstance(value, list) else value
            else:
                log.info("config default %s.%s", name, f.name)
        try:
            built[name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: [{name}] {exc}") from None
    return RunConfig(**built)


# --------------------------------------------------------------------------
# helpers


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _template(path):
    return load_template(_existing(path, "template")) if path else procedural_template("low")


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover
        return os.cpu_count() or 1


def _generate_one(job):
    seq_id, poses, template, garment, scene, sim = job
    return seq_id, generate_sequence(poses, template, garment, scene, sim, source_id=seq_id)


def _run_pool(jobs, n_workers):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
            return dict(pool.map(_generate_one, jobs))
    return dict(map(_generate_one, jobs))


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args, cfg: RunConfig) -> int:
    template = _template(args.template)
    garment = load_pattern(_existing(args.garment, "garment")) if args.garment else None
    out = Path(args.out)
    if args.toy:
        seqs = rn.make_toy_sequences(template, n_clips=args.toy, clip_length=cfg.train.clip_length,
                                     seed=args.seed)
        sequences = {f"toy_{i:03d}": s for i, s in enumerate(seqs)}
    else:
        if not args.poses:
            raise UsageError("generate needs --poses (one or more files) or --toy N")
        jobs = []
        for i, p in enumerate(args.poses):
            poses = load_sequence(_existing(p, "pose sequence"))
            scene = SceneConfig(**{**asdict(cfg.scene), "seed": sequence_seed(args.seed, i),
                                   "light_strengths": None})
            jobs.append((f"seq_{i:03d}", poses, template, garment, scene, cfg.sim))
        sequences = _run_pool(jobs, args.jobs or _default_jobs())
    export_dataset(sequences, out, template, preview=cfg.scene.preview, preview_every=cfg.scene.preview_every,
                   cloth_snapshot_every=cfg.scene.cloth_snapshot_every)
    print(f"wrote {len(sequences)} sequence(s) to {out}")
    return 0


def cmd_interp(args, cfg: RunConfig) -> int:
    X = load_sequence(_existing(args.poses, "pose sequence"))
    Y = load_sequence(_existing(args.other, "pose sequence")) if args.other else None
    novel = contrast_sequence(X, Y, cfg.interp)
    save_sequence(novel, args.out)
    print(f"wrote {len(novel)} frames to {args.out}")
    return 0


def cmd_drape(args, cfg: RunConfig) -> int:
    template = _template(args.template)
    pattern = load_pattern(_existing(args.garment, "garment"))
    pose = t_pose(template.joint_count)
    shape = None
    if args.pose:
        seq = load_sequence(_existing(args.pose, "pose sequence"))
        if not 0 <= args.frame < len(seq):
            raise UsageError(f"--frame {args.frame} outside sequence of {len(seq)} frames")
        pose, shape = seq[args.frame]
    shape = shape or BodyShape()
    cloth = build_garment(pattern, shaped_vertices(template, shape))
    cloth = update_pin_anchors(cloth, skin(template, shape, pose).vertices)
    state, converged = drape(cloth, body_colliders(template, pose, shape), cfg.sim, max_seconds=args.seconds)
    write_obj(args.out, state.positions, state.faces, name="garment")
    print(f"drape {'converged' if converged else 'stopped'} at t={state.time:.3f}s; wrote {args.out}")
    return 0


def _metric_joints(frame, mjm):
    return np.asarray(frame.joints3d)[list(mjm)]


def _evaluate_frames(label, P, G, mjm, normalized):
    if len(P) != len(G):
        raise ValidationError(f"{label}: prediction has {len(P)} frames, ground truth {len(G)}")
    pv, gv = P[0].body_vertices, G[0].body_vertices
    if pv.shape != gv.shape:
        raise ValidationError(f"{label}: vertex count mismatch: prediction {len(pv)} vs ground truth {len(gv)}")
    pj = np.array([_metric_joints(f, mjm) for f in P])
    gj = np.array([_metric_joints(f, mjm) for f in G])
    # compare root-relative in the camera frame
    pj -= np.array([np.asarray(f.joints3d)[0] for f in P])[:, None]
    gj -= np.array([np.asarray(f.joints3d)[0] for f in G])[:, None]
    rep = evaluate_sequence(pj, gj, np.array([f.body_vertices for f in P]), np.array([f.body_vertices for f in G]),
                            np.array([f.beta for f in P]), normalized=normalized)
    return rep.scaled(1000.0)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    pred_path = _existing(args.pred, "prediction")
    gt_path = _existing(args.gt, "ground truth")
    normalized = not args.unnormalized
    rows = {}
    if pred_path.is_file() and gt_path.is_file():
        rows[gt_path.stem] = _evaluate_frames(gt_path.stem, load_annotations(pred_path), load_annotations(gt_path),
                                              METRIC_JOINT_MAP, normalized)
    elif pred_path.is_dir() and gt_path.is_dir():
        pred, gt = import_dataset(pred_path), import_dataset(gt_path)
        tpl = dataset_template(gt_path)
        mjm = tpl.metric_joint_map if tpl is not None else METRIC_JOINT_MAP
        for seq_id in sorted(gt):
            if seq_id not in pred:
                raise ValidationError(f"sequence {seq_id!r} missing from prediction dataset")
            for view in sorted(gt[seq_id]):
                if view not in pred[seq_id]:
                    raise ValidationError(f"view {view!r} of {seq_id!r} missing from prediction dataset")
                label = f"{seq_id}/{view}"
                rows[label] = _evaluate_frames(label, pred[seq_id][view].frames, gt[seq_id][view].frames, mjm,
                                               normalized)
    else:
        raise UsageError("--pred and --gt must both be dataset directories or both annotation files")
    if not rows:
        raise ValidationError("ground-truth dataset has no sequences")
    rows["mean"] = mean_report(rows.values())
    table = format_table(rows, precision=args.precision)
    print(table, end="")
    if args.out:
        Path(args.out).write_text(json.dumps({k: v.to_dict() for k, v in rows.items()}, indent=1,
                                             sort_keys=True) + "\n", encoding="utf-8")
    return 0


def _toy_data(data_dir, cfg: RunConfig):
    seqs = import_dataset(_existing(data_dir, "dataset"))
    template = dataset_template(data_dir) or procedural_template("low")
    ordered = [seqs[k] for k in sorted(seqs)]
    data = rn.toy_dataset(ordered, template, image_size=cfg.model.image_size, clip_length=cfg.train.clip_length)
    return template, ordered, data


def cmd_train_toy(args, cfg: RunConfig) -> int:
    template, seqs, data = _toy_data(args.data, cfg)
    train = rn.TrainConfig(**{**asdict(cfg.train), "seed": args.seed,
                              **({"max_steps": args.steps} if args.steps is not None else {}),
                              **({"learning_rate": args.lr} if args.lr is not None else {})})
    log.info("train-toy: lam=%s lr=%s steps=%s", train.lam, train.learning_rate, train.max_steps)
    params = rn.init_params(cfg.model, rn.mean_phi_from_sequences(seqs), seed=args.seed)
    jm = rn.JointModel(template)
    trained, curve = rn.train_toy(data, params, jm, train, log_path=args.log)
    rn.save_params(trained, args.out)
    if len(curve):
        print(f"loss {curve[0]:.6g} -> {curve[-1]:.6g} over {len(curve)} steps; wrote {args.out}")
    else:
        print(f"no training steps; wrote initial parameters to {args.out}")
    return 0


def cmd_recover(args, cfg: RunConfig) -> int:
    params = rn.load_params(_existing(args.params, "parameter file"))
    seqs = import_dataset(_existing(args.data, "dataset"))
    template = dataset_template(args.data) or procedural_template("low")
    lines = []
    for seq_id in sorted(seqs):
        views = seqs[seq_id]
        view = args.view if args.view else sorted(views)[0]
        if view not in views:
            raise ValidationError(f"view {view!r} not in sequence {seq_id!r} (has {sorted(views)})")
        frames = views[view].frames
        imgs = np.array([rasterize_preview(f, "silhouette", template.faces, resolution=params.config.image_size)
                         for f in frames], dtype=np.float64)
        for i, vec in enumerate(rn.recover_clip(imgs, params, cfg.train.ief_iterations)):
            lines.append(json.dumps({"sequence": seq_id, "view": view, "frame": i, **vec.to_dict()},
                                    sort_keys=True))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} recovery vectors to {args.out}")
    return 0


def cmd_transfer(args, cfg: RunConfig) -> int:
    path = _existing(args.recovered, "recovery file")
    vectors = rn.load_recovery(path)
    groups = {}
    for lineno, line in enumerate(l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()):
        groups.setdefault(json.loads(line).get("sequence", "sequence"), []).append(vectors[lineno])
    template = _template(args.template)
    garment = load_pattern(_existing(args.garment, "garment")) if args.garment else None
    out = {}
    for i, seq_id in enumerate(sorted(groups)):
        scene = SceneConfig(**{**asdict(cfg.scene), "seed": sequence_seed(args.seed, i), "light_strengths": None})
        out[seq_id] = transfer(groups[seq_id], template, garment, scene, cfg.sim, fps=args.fps, source_id=seq_id)
    export_dataset(out, args.out, template, preview=cfg.scene.preview, preview_every=cfg.scene.preview_every,
                   cloth_snapshot_every=cfg.scene.cloth_snapshot_every)
    print(f"transferred {len(out)} sequence(s) to {args.out}")
    return 0


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="JSON run configuration (schema_version, scene/sim/train/model/interp)")
    p.add_argument("--seed", type=int, default=0, help="root of all randomness (default 0)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshforge", description="Synthetic clothed-body sequences, metrics and a toy "
                                                   "recurrent mesh regressor.",
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    p = sub.add_parser("generate", help="render annotated sequences into a dataset directory")
    _common(p)
    p.add_argument("--poses", nargs="+", help="pose sequence file(s), one sequence each")
    p.add_argument("--toy", type=int, default=0, help="instead of --poses, generate N random short clips")
    p.add_argument("--template", help="body template JSON (default: procedural)")
    p.add_argument("--garment", help="garment pattern JSON")
    p.add_argument("--scene", dest="config", help="alias of --config")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: available CPUs)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("interp", help="novel sequence from the most distant pose pair")
    _common(p)
    p.add_argument("--poses", required=True, help="pose sequence X")
    p.add_argument("--other", help="pose sequence Y (default: X)")
    p.add_argument("--out", required=True, help="output pose sequence file")
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("drape", help="drape a garment to equilibrium and write an OBJ")
    _common(p)
    p.add_argument("--garment", required=True, help="garment pattern JSON")
    p.add_argument("--template", help="body template JSON (default: procedural)")
    p.add_argument("--pose", help="pose sequence file (default: T-pose)")
    p.add_argument("--frame", type=int, default=0, help="frame of --pose to drape on")
    p.add_argument("--seconds", type=float, default=10.0, help="simulated time limit")
    p.add_argument("--out", required=True, help="output OBJ path")
    p.set_defaults(func=cmd_drape)

    p = sub.add_parser("evaluate", help="metric table of a prediction dataset against ground truth")
    _common(p)
    p.add_argument("--pred", required=True, help="prediction dataset directory or annot_<view>.jsonl file")
    p.add_argument("--gt", required=True, help="ground-truth dataset directory or annotation file")
    p.add_argument("--unnormalized", action="store_true", help="MPVPE as a per-frame vertex sum")
    p.add_argument("--precision", type=int, default=1, help="decimal places in the table")
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train-toy", help="train the toy recurrent regressor")
    _common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--steps", type=int, default=None, help="override train.max_steps")
    p.add_argument("--lr", type=float, default=None, help="override train.learning_rate")
    p.add_argument("--log", default=None, help="plain-text loss log path")
    p.add_argument("--out", required=True, help="output parameter file")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("recover", help="recovery vectors for every frame of a dataset")
    _common(p)
    p.add_argument("--params", required=True, help="parameter file from train-toy")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--view", default=None, help="view to read (default: first)")
    p.add_argument("--out", required=True, help="output recovery file (JSON lines)")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("transfer", help="re-animate the template with recovered vectors")
    _common(p)
    p.add_argument("--recovered", required=True, help="recovery file (JSON lines)")
    p.add_argument("--template", help="body template JSON (default: procedural)")
    p.add_argument("--garment", help="garment pattern JSON")
    p.add_argument("--fps", type=float, default=30.0, help="frame rate of the recovered sequence")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_transfer)

    parser.epilog = _flag_summary(sub)
    return parser


def _flag_summary(sub) -> str:
    lines = ["subcommand flags:"]
    for name, p in sub.choices.items():
        flags = [s for a in p._actions for s in a.option_strings if s.startswith("--") and s != "--help"]
        lines.append(f"  {name}: {' '.join(flags)}")
    lines.append("environment: MESHFORGE_LOG=DEBUG|INFO|WARNING|ERROR")
    lines.append("exit status: 0 ok, 1 validation error, 2 runtime/numeric error")
    return "\n".join(lines)


def _setup_logging(verbose: int):
    level = os.environ.get("MESHFORGE_LOG", "WARNING").upper()
    if verbose:
        level = "INFO" if verbose == 1 else "DEBUG"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("meshforge").setLevel(getattr(logging, level, logging.WARNING))


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        _setup_logging(args.verbose)
        cfg = validate_config(args.config)
        return args.func(args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MeshforgeError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":  # pragma: no cover
    main()
