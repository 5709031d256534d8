"""
Command-line entry point: retarget, train, eval, match, genref.

Exit codes: 0 success, 2 configuration/input error, 3 runtime divergence.
Log verbosity comes from the MIMICRL_LOG environment variable.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import (
    ConfigError,
    MappingError,
    MimicError,
    NonFiniteGradient,
    NonFiniteLoss,
    NonFiniteState,
    ParseError,
    SchemaError,
    TooLarge,
    ValidationError,
)
from .genref import TASKS, generate, resolve_skeleton
from .matching import ascii_alignment, brute_force_matching, dp_optimal_matching
from .motion_io import load_motion, save_motion
from .retarget import load_joint_map, project_sagittal, retarget_motion
from .similarity import SimWeights, motion_descriptors, similarity_matrix

log = logging.getLogger("mimicrl")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3
CONFIG_ERRORS = (ConfigError, MappingError, ParseError, SchemaError, ValidationError, FileNotFoundError, TooLarge)
DIVERGENCE_ERRORS = (NonFiniteState, NonFiniteLoss, NonFiniteGradient)


def args_hash(args):
    d = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def provenance(args, extra=None):
    d = {"tool": "mimicrl", "version": __version__, "config_hash": args_hash(args)}
    if extra:
        d.update(extra)
    return d


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    if path:
        Path(path).write_text(text + "\n")
    return text


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------- commands
def cmd_retarget(args):
    src = load_motion(args.motion)
    jmap = load_joint_map(args.map)
    tgt_skel = resolve_skeleton(args.target_skel)
    out, report = retarget_motion(src, tgt_skel, jmap)
    if args.planar:
        out = project_sagittal(out, tgt_skel)
    out.meta = dict(out.meta)
    out.meta["retarget"] = provenance(args, {"report": report.to_dict()})
    save_motion(out, args.out)
    if args.report:
        write_json(args.report, {**provenance(args), **report.to_dict()})
    if report.untouched_target_joints:
        log.info("untouched target joints: %s", ", ".join(report.untouched_target_joints))
    return EXIT_OK


def cmd_train(args):
    from .pporl.config import load_run_config
    from .pporl.trainer import Trainer

    run = load_run_config(args.config)
    if args.seed is not None:
        run.seed = int(args.seed)
        run.source = {**run.source, "seed": run.seed}
    if args.preset:
        from .pporl.config import run_config_from_dict

        src = {**run.source, "preset": args.preset}
        run = run_config_from_dict(src, run.base_dir)
    if args.motion:
        run.motion = str(Path(args.motion).resolve())
        run.source = {**run.source, "motion": run.motion}
    if args.iterations is not None:
        run.train.iterations = int(args.iterations)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"provenance": {"version": __version__, "config_hash": run.hash()}, **run.source}
    (out / "config.yaml").write_text(yaml.safe_dump(echo, sort_keys=True))
    tr = Trainer(run, out)
    tr.train(run.train.iterations, eval_every=args.eval_every, checkpoint_every=args.checkpoint_every)
    log.info("training finished after %d iterations; outputs in %s", tr.iteration, out)
    return EXIT_OK


def cmd_eval(args):
    from .pporl.evaluate import evaluate
    from .pporl.trainer import load_checkpoint

    meta_prov = provenance(args)
    if args.episodes == 0:
        print(write_json(args.out, {**meta_prov, "episodes": 0}))
        return EXIT_OK
    tr, meta = load_checkpoint(args.checkpoint, n_envs=1)
    terrains = args.terrain
    rep = evaluate(tr, args.episodes, args.seed, terrains, deterministic=not args.stochastic)
    rep.update(meta_prov)
    rep["checkpoint_config_hash"] = meta.get("config_hash")
    rep["iteration"] = meta.get("iteration")
    if args.trace:
        from .simworld.env import write_trace

        _, summ = tr.rollout_descriptors(1, args.seed, not args.stochastic, trace=True)
        write_trace(args.trace, summ["trace"])
    print(write_json(args.out, rep))
    return EXIT_OK


def cmd_match(args):
    ref = load_motion(args.ref)
    traj = load_motion(args.traj)
    if ref.skeleton.names() != traj.skeleton.names():
        raise ConfigError("reference and trajectory must share a skeleton")
    ee = args.end_effectors or []
    yr, layout = motion_descriptors(ref, ee)
    ys, _ = motion_descriptors(traj, ee)
    S = similarity_matrix(yr, ys, layout, SimWeights(), args.metric)
    with warnings.catch_warnings():
        m = dp_optimal_matching(S, args.min_sim)
    out = {**provenance(args), "matching": m.to_dict(), "n_ref": len(ref), "n_traj": len(traj)}
    if not m.pairs:
        log.warning("empty matching: no reference frame reaches similarity %.3f", args.min_sim)
        out["warning"] = "empty matching"
    if args.brute_force:
        bf = brute_force_matching(S)
        dp_raw = dp_optimal_matching(S, 0.0)
        out["brute_force"] = {"total_similarity": bf.total, "pairs": [list(p) for p in bf.pairs], "agrees": bf.total == dp_raw.total}
    text = write_json(args.out, out)
    print(text)
    print(ascii_alignment(m, len(ref), len(traj)))
    return EXIT_OK


def cmd_genref(args):
    span = None
    if args.span_start is not None or args.span_len is not None:
        from .genref import default_span

        s0, l0 = default_span(args.frames)
        span = (args.span_start if args.span_start is not None else s0, args.span_len if args.span_len is not None else l0)
    m = generate(args.task, args.frames, args.fps, args.skel, args.inject_teleport, args.inject_float, span)
    m.meta["cli"] = provenance(args)
    save_motion(m, args.out)
    log.info("wrote %d frames of %r to %s", len(m.frames), args.task, args.out)
    return EXIT_OK


# ------------------------------------------------------------------ parser
def build_parser():
    p = argparse.ArgumentParser(prog="mimicrl", description="Motion retargeting and imitation training toolkit.")
    p.add_argument("--version", action="version", version=f"mimicrl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("retarget", help="retarget a motion onto another skeleton")
    r.add_argument("--motion", required=True, help="source motion JSON")
    r.add_argument("--map", required=True, help="joint map JSON")
    r.add_argument("--target-skel", required=True, help="skeleton file, packaged skeleton or robot name")
    r.add_argument("--out", required=True, help="output motion JSON")
    r.add_argument("--planar", action="store_true", help="project the result onto the sagittal plane")
    r.add_argument("--report", help="write the retarget report as JSON")
    r.set_defaults(func=cmd_retarget)

    t = sub.add_parser("train", help="train an imitation policy")
    t.add_argument("--config", required=True, help="run config YAML")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--iterations", type=int)
    t.add_argument("--motion", help="override the reference motion path")
    t.add_argument("--preset", help="training preset: desk, fullscale, gailfo, state_err, safety")
    t.add_argument("--eval-every", type=int, default=0)
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--terrain", action="append", help="terrain kind (repeatable) or 'all'")
    e.add_argument("--seed", type=int, default=777)
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of using the mean")
    e.add_argument("--out", help="write the JSON report here as well")
    e.add_argument("--trace", help="export a per-step CSV trace of one episode")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("match", help="optimal matching between two motions")
    m.add_argument("--ref", required=True)
    m.add_argument("--traj", required=True)
    m.add_argument("--brute-force", action="store_true", help="cross-check with exhaustive search (small inputs)")
    m.add_argument("--metric", choices=("humanoid", "quadruped"), default="humanoid")
    m.add_argument("--min-sim", type=float, default=0.05)
    m.add_argument("--end-effectors", nargs="*")
    m.add_argument("--out")
    m.set_defaults(func=cmd_match)

    g = sub.add_parser("genref", help="generate a scripted reference motion")
    g.add_argument("--task", required=True, choices=TASKS)
    g.add_argument("--frames", type=int, default=151)
    g.add_argument("--fps", type=float, default=30.0)
    g.add_argument("--skel", default="default", help="skeleton file, packaged skeleton or robot name")
    g.add_argument("--out", required=True)
    g.add_argument("--inject-teleport", action="store_true")
    g.add_argument("--inject-float", action="store_true")
    g.add_argument("--span-start", type=int)
    g.add_argument("--span-len", type=int)
    g.set_defaults(func=cmd_genref)
    return p


def main(argv=None):
    level = os.environ.get("MIMICRL_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DIVERGENCE_ERRORS as e:
        log.error("divergence: %s", e)
        return EXIT_DIVERGED
    except CONFIG_ERRORS as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_CONFIG
    except MimicError as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
