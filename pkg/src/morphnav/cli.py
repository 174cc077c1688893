"""Command-line entry point.

Subcommands: sample-embodiments, gen-scene, gen-data, make-bench, eval,
render. Exit codes: 0 success, 2 usage error, 1 runtime error. The
resolved configuration of every run is logged to stderr; data goes to
files or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .embodiment import (DEFAULT_RANGES, SamplingRanges, filter_ranges,
                         preset_embodiment, sample_embodiment, PRESET_NAMES)
from .rng import split_seed
from .scene import SceneParams, generate_scene, save_scene
from .sim import TaskSpec

DEFAULT_OUT_ENV = "MORPHNAV_OUT"


def _out_path(path: str) -> str:
    base = os.environ.get(DEFAULT_OUT_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_ranges(args) -> SamplingRanges:
    ranges = DEFAULT_RANGES
    if getattr(args, "ranges", None):
        with open(args.ranges) as f:
            ranges = SamplingRanges.from_json(f.read())
    for name, lo, hi in getattr(args, "narrow", None) or []:
        ranges = filter_ranges(ranges, name, (float(lo), float(hi)))
    return ranges


def _load_scene_params(args) -> SceneParams:
    if getattr(args, "params", None):
        with open(args.params) as f:
            return SceneParams.from_dict(json.load(f)).validated()
    return SceneParams()


def _cmd_sample_embodiments(args) -> int:
    ranges = _load_ranges(args)
    _log(f"sample-embodiments n={args.n} seed={args.seed} "
         f"ranges={ranges.to_json()}")
    out = sys.stdout if args.out in (None, "-") else open(_out_path(args.out), "w")
    try:
        for i in range(args.n):
            e = sample_embodiment(split_seed(args.seed, i, 0), ranges)
            out.write(e.to_json() + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_gen_scene(args) -> int:
    params = _load_scene_params(args)
    _log(f"gen-scene seed={args.seed} params={json.dumps(params.to_dict(), sort_keys=True)}")
    scene = generate_scene(args.seed, params)
    save_scene(scene, _out_path(args.out))
    _log(f"wrote {args.out}: {scene.nx}x{scene.nz} cells, "
         f"{len(scene.instances)} instances")
    return 0


def _cmd_gen_data(args) -> int:
    from .dataset import generate_dataset
    ranges = _load_ranges(args)
    params = _load_scene_params(args)
    _log(f"gen-data n={args.n} seed={args.seed} out={args.out} "
         f"workers={args.workers} shard_size={args.shard_size} "
         f"store_obs={args.store_obs}")
    t0 = time.monotonic()
    manifest = generate_dataset(_out_path(args.out), n=args.n,
                                master_seed=args.seed, ranges=ranges,
                                scene_params=params,
                                shard_size=args.shard_size,
                                workers=args.workers,
                                store_observations=args.store_obs)
    dt = time.monotonic() - t0
    _log(f"generated {args.n} episodes in {dt:.1f}s "
         f"({args.n / dt * 60:.1f} episodes/min), "
         f"success_fraction={manifest['success_fraction']:.4f}")
    return 0


def _cmd_make_bench(args) -> int:
    from .harness import make_benchmark
    ranges = _load_ranges(args)
    params = _load_scene_params(args)
    task = TaskSpec(target_category="chair", max_steps=args.max_steps)
    _log(f"make-bench n={args.n} seed={args.seed} mode={args.mode} "
         f"preset={args.preset} low_variant={args.low} out={args.out}")
    embodiment = None
    if args.embodiment:
        from .embodiment import EmbodimentConfig
        with open(args.embodiment) as f:
            embodiment = EmbodimentConfig.from_json(f.read())
    suite = make_benchmark(args.seed, args.n, mode=args.mode,
                           scene_params=params, preset=args.preset,
                           embodiment=embodiment, ranges=ranges,
                           task_defaults=task, low_variant=args.low,
                           disclose_embodiment=not args.undisclosed)
    suite.save(_out_path(args.out))
    _log(f"wrote suite {suite.suite_id} with {suite.n} episodes")
    return 0


def _cmd_eval(args) -> int:
    from .harness import BenchmarkSuite, PolicyHandle, run_benchmark
    suite = BenchmarkSuite.load(args.suite)
    if args.collision_penalty:
        from dataclasses import replace as _rep
        episodes = tuple(
            _rep(s, task=TaskSpec(
                target_category=s.task.target_category,
                success_distance=s.task.success_distance,
                max_steps=s.task.max_steps,
                collision_penalty=args.collision_penalty))
            for s in suite.episodes)
        suite = _rep(suite, episodes=episodes)
    if args.policy.startswith("bridge:"):
        handle = PolicyHandle(kind="bridge", endpoint=args.policy[len("bridge:"):])
    else:
        kinds = {"expert": "expert", "greedy": "greedy", "random": "random",
                 "moveahead": "moveahead"}
        if args.policy not in kinds:
            raise SystemExit(2)
        handle = PolicyHandle(kind=kinds[args.policy], seed=args.seed)
    _log(f"eval suite={args.suite} ({suite.n} episodes) policy={args.policy} "
         f"workers={args.workers} collision_penalty={args.collision_penalty}")
    t0 = time.monotonic()
    summary, _records = run_benchmark(
        handle, suite, workers=args.workers,
        records_path=_out_path(args.report) if args.report else None)
    dt = time.monotonic() - t0
    _log(f"evaluated {suite.n} episodes in {dt:.1f}s "
         f"({suite.n / dt * 60:.1f} episodes/min)")
    print(summary.to_table())
    if args.json:
        print(summary.to_json())
    return 0


def _cmd_render(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np
    from . import planner as _planner
    from .dataset import EpisodeSpec
    from .sim import Action, Pose, reset, step

    with open(args.trace) as f:
        lines = [json.loads(ln) for ln in f if ln.strip()]
    if not (0 <= args.index < len(lines)):
        raise SystemExit(2)
    rec = lines[args.index]
    spec_d = rec.get("spec") or rec.get("spec", None)
    if spec_d is None:
        _log("trace record carries no episode spec; cannot render")
        return 1
    spec = EpisodeSpec.from_dict(spec_d)
    params = SceneParams()
    if args.params:
        with open(args.params) as f:
            params = SceneParams.from_dict(json.load(f))
    scene = generate_scene(spec.scene_seed, params)

    # executed path by replay
    state, _ = reset(scene, spec.embodiment, spec.start, spec.task)
    xs, zs = [state.pose.x], [state.pose.z]
    for name in rec["actions"]:
        state, result = step(state, Action.from_name(name))
        xs.append(state.pose.x)
        zs.append(state.pose.z)
        if result.terminal:
            break

    plan = _planner.plan_path(scene, spec.embodiment, spec.start,
                              spec.task.target_category)

    fig, ax = plt.subplots(figsize=(7, 7))
    blocked = scene.blocked_mask(0.0, spec.embodiment.collider[1])
    ex, ez = scene.extent
    ax.imshow(blocked, origin="lower", extent=(0, ex, 0, ez),
              cmap="Greys", alpha=0.4)
    for inst in scene.instances:
        if inst.category == "wall":
            continue
        hue = (hash(inst.category) % 360) / 360.0
        color = plt.cm.hsv(hue)
        ax.add_patch(plt.Rectangle((inst.x_min, inst.z_min),
                                   inst.x_max - inst.x_min,
                                   inst.z_max - inst.z_min,
                                   fill=True, alpha=0.5, color=color))
        ax.text(inst.rep_point[0], inst.rep_point[2], inst.category,
                fontsize=6, ha="center")
    gp = [plan.grid.node_xz(ix, iz) for ix, iz in plan.path]
    if gp:
        ax.plot([p[0] for p in gp], [p[1] for p in gp], "b-",
                lw=1, label="planned path")
    wx = [w[0] for w in plan.waypoints_xz]
    wz = [w[1] for w in plan.waypoints_xz]
    ax.plot(wx, wz, "bo", ms=5, label="waypoints")
    ax.plot(xs, zs, "g-", lw=2, alpha=0.7, label="executed")
    ax.plot([spec.start.x], [spec.start.z], "k^", ms=9, label="start")
    ax.set_xlim(0, ex)
    ax.set_ylim(0, ez)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=7)
    ax.set_title(f"episode {spec.episode_id}: {spec.task.instruction}")
    fig.savefig(_out_path(args.out), dpi=130, bbox_inches="tight")
    plt.close(fig)
    _log(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morphnav",
                                description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("sample-embodiments", help="sample random embodiments")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--ranges", help="sampling ranges JSON file")
    sp.add_argument("--narrow", nargs=3, action="append",
                    metavar=("PARAM", "LO", "HI"),
                    help="narrow one parameter range (repeatable)")
    sp.add_argument("--out", help="output file (default stdout)")
    sp.set_defaults(fn=_cmd_sample_embodiments)

    sp = sub.add_parser("gen-scene", help="generate one scene file")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--params", help="scene params JSON file")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_gen_scene)

    sp = sub.add_parser("gen-data", help="generate an expert dataset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sp.add_argument("--shard-size", type=int, default=32)
    sp.add_argument("--ranges")
    sp.add_argument("--narrow", nargs=3, action="append",
                    metavar=("PARAM", "LO", "HI"))
    sp.add_argument("--params")
    sp.add_argument("--store-obs", action="store_true")
    sp.set_defaults(fn=_cmd_gen_data)

    sp = sub.add_parser("make-bench", help="build a benchmark suite")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--mode", choices=("fixed", "random", "external"),
                    default="random")
    sp.add_argument("--preset", choices=sorted(PRESET_NAMES))
    sp.add_argument("--embodiment", help="explicit embodiment JSON file")
    sp.add_argument("--ranges")
    sp.add_argument("--narrow", nargs=3, action="append",
                    metavar=("PARAM", "LO", "HI"))
    sp.add_argument("--params")
    sp.add_argument("--max-steps", type=int, default=600)
    sp.add_argument("--low", action="store_true",
                    help="lower elevated targets for low-camera embodiments")
    sp.add_argument("--undisclosed", action="store_true",
                    help="do not disclose embodiments to external policies")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_make_bench)

    sp = sub.add_parser("eval", help="evaluate a policy on a suite")
    sp.add_argument("--suite", required=True)
    sp.add_argument("--policy", required=True,
                    help="expert | greedy | random | moveahead | bridge:tcp://host:port")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--collision-penalty", type=float, default=0.0)
    sp.add_argument("--report", help="write per-episode records NDJSON here")
    sp.add_argument("--json", action="store_true",
                    help="also print the summary as JSON")
    sp.set_defaults(fn=_cmd_eval)

    sp = sub.add_parser("render", help="render a trace record top-down")
    sp.add_argument("--trace", required=True,
                    help="per-episode records NDJSON from eval --report")
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--params")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, KeyError) as exc:
        _log(f"error: {exc}")
        return 1
    except OSError as exc:
        _log(f"error: {exc}")
        return 1
    except RuntimeError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
