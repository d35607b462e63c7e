"""Command-line interface: generate scenes, solve them, run benchmark
suites, replay saved plans, and render SVG frames."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench as bench_mod
from .render import render_frame, render_plan_frames
from .retrieval import RetrievalQuery, compute_ngr, plan_retrieval
from .scene import ParseError, ValidationError, generate_scene, load_scene, save_scene, scene_name
from .sim import replay
from .solver import Algorithm, SolverConfig, load_plan, save_plan, solve

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2


def _load_scene_arg(args) -> tuple[str, "Scene"]:
    if args.scene is not None:
        text = Path(args.scene).read_text()
        return (Path(args.scene).stem, load_scene(text))
    name = scene_name(args.level, args.seed)
    return (name, generate_scene(args.level, args.seed))


def _add_scene_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", help="scene file (overrides --level/--seed)")
    p.add_argument("--level", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--seed", type=int, default=0)


def cmd_gen(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        scene = generate_scene(args.level, seed)
        path = out / f"{scene_name(args.level, seed)}.yaml"
        path.write_text(save_scene(scene))
        print(path)
    return EXIT_OK


def _make_trace(path: Path):
    fh = open(path, "w")
    fh.write("time_s,gripper_x,gripper_y,gripper_theta,moved_ids\n")

    def trace(t, pose, moved):
        fh.write(f"{t:.4f},{pose.x:.6f},{pose.y:.6f},{pose.theta:.6f},{';'.join(map(str, moved))}\n")

    return fh, trace


def cmd_solve(args) -> int:
    name, scene = _load_scene_arg(args)
    cfg = SolverConfig(
        timeout_s=args.timeout_s, algorithm=Algorithm(args.algorithm), seed=args.seed
    )
    plan = solve(scene, cfg)
    s = plan.stats
    print(
        f"{name}: success={s.success} pushes={s.pushes_executed} cbs_calls={s.cbs_calls} "
        f"planning={s.planning_time:.2f}s sim={s.sim_time:.2f}s"
        + ("" if s.success else f" reason={s.failure_reason!r}")
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene_path = out / f"{name}.yaml"
    scene_path.write_text(save_scene(scene))
    plan_path = out / f"{name}-{args.algorithm}.plan.yaml"
    plan_path.write_text(save_plan(plan))
    print(plan_path)
    if args.trace:
        fh, trace = _make_trace(out / f"{name}-{args.algorithm}.trace.csv")
        with fh:
            replay(scene, plan.trajectories, trace=trace)
    return EXIT_OK if s.success else EXIT_FAILURE


def cmd_bench(args) -> int:
    if args.paper_scale:
        spec = bench_mod.BenchmarkSpec.paper_scale(base_seed=args.base_seed)
    else:
        spec = bench_mod.BenchmarkSpec(
            levels=tuple(int(x) for x in args.levels.split(",")),
            scenes_per_level=args.scenes,
            algorithms=tuple(Algorithm(a) for a in args.algorithms.split(",")),
            timeout_s=args.timeout_s,
            base_seed=args.base_seed,
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"

    def progress(row):
        print(
            f"level={row.level} seed={row.seed} alg={row.algorithm.value} "
            f"success={str(row.success).lower()} pushes={row.pushes} "
            f"t={row.planning_time_s:.1f}s",
            flush=True,
        )

    with open(csv_path, "w") as fh:
        rows, summary = bench_mod.run_benchmark(spec, csv_out=fh, progress=progress)
    table = bench_mod.format_summary(summary)
    (out / "summary.txt").write_text(table + "\n")
    print(table)
    print(csv_path)
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        scene = load_scene(Path(args.scene_file).read_text())
        plan = load_plan(Path(args.plan_file).read_text())
    except (ParseError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    trace = None
    fh = None
    if args.trace:
        fh, trace = _make_trace(Path(args.trace))
    try:
        result = replay(scene, plan.trajectories, trace=trace)
    finally:
        if fh is not None:
            fh.close()
    for v in result.violations:
        print(f"violation t={v.time:.3f}s object={v.object_id} kind={v.kind.value}")
    print(f"retrieved={result.retrieved} violations={len(result.violations)}")
    return EXIT_OK if result.success else EXIT_FAILURE


def cmd_render(args) -> int:
    name, scene = _load_scene_arg(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.plan is not None:
        plan = load_plan(Path(args.plan).read_text())
        frames = render_plan_frames(scene, plan.trajectories, frame_dt=args.frame_dt)
        for k, svg in enumerate(frames):
            (out / f"{name}-frame-{k:04d}.svg").write_text(svg)
        print(f"{len(frames)} frames -> {out}")
        return EXIT_OK
    ngr = None
    if args.ngr:
        r = plan_retrieval(RetrievalQuery(scene, frozenset(o.id for o in scene.immovables())))
        if r is not None:
            ngr = compute_ngr(scene, r)
    svg = render_frame(scene, ngr=ngr)
    path = out / f"{name}.svg"
    path.write_text(svg)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shelfpush", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate scene files")
    g.add_argument("--level", type=int, default=1, choices=(1, 2, 3))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--out-dir", default="out")
    g.set_defaults(fn=cmd_gen)

    s = sub.add_parser("solve", help="solve one scene")
    _add_scene_source(s)
    s.add_argument("--algorithm", default=Algorithm.ITERATIVE.value,
                   choices=[a.value for a in Algorithm])
    s.add_argument("--timeout-s", type=float, default=120.0)
    s.add_argument("--out-dir", default="out")
    s.add_argument("--trace", action="store_true", help="write a per-step replay trace CSV")
    s.set_defaults(fn=cmd_solve)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("--levels", default="1,2,3")
    b.add_argument("--scenes", type=int, default=bench_mod.DESK_SCENES_PER_LEVEL)
    b.add_argument("--algorithms", default=",".join(a.value for a in Algorithm))
    b.add_argument("--timeout-s", type=float, default=bench_mod.DESK_TIMEOUT_S)
    b.add_argument("--base-seed", type=int, default=0)
    b.add_argument("--paper-scale", action="store_true",
                   help="100 scenes per level with a 120 s timeout")
    b.add_argument("--out-dir", default="out")
    b.set_defaults(fn=cmd_bench)

    r = sub.add_parser("replay", help="replay a saved plan against a scene file")
    r.add_argument("scene_file")
    r.add_argument("plan_file")
    r.add_argument("--trace", help="write a per-step trace CSV to this path")
    r.set_defaults(fn=cmd_replay)

    v = sub.add_parser("render", help="render a scene (or plan animation) to SVG")
    _add_scene_source(v)
    v.add_argument("--plan", help="plan file to animate")
    v.add_argument("--frame-dt", type=float, default=0.5)
    v.add_argument("--ngr", action="store_true", help="overlay the retrieval swept region")
    v.add_argument("--out-dir", default="out")
    v.set_defaults(fn=cmd_render)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
