"""Command-line interface: scene generation, preprocessing, grasp dumps,
benchmark runs and the session service."""

from __future__ import annotations

import argparse
import sys

import numpy as np


def _cmd_scene_gen(args) -> int:
    from .scene import ground_truth_cloud, sample_scene, save_scene

    scene = sample_scene(args.seed, args.objects)
    save_scene(scene, args.out)
    print(f"wrote {args.out} ({len(scene.objects)} objects)")
    if args.ply:
        from .cloud import save_ply

        save_ply(ground_truth_cloud(scene, seed=args.seed), args.ply)
        print(f"wrote {args.ply}")
    return 0


def _parse_xyz(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return np.asarray(parts)


def _cmd_prep(args) -> int:
    from .cloud import load_ply, save_ply
    from .laser import LaserTarget
    from .preprocess import extract_clusters, remove_horizontal_planes, segment_target

    cloud = load_ply(args.infile)
    cleaned, report = remove_horizontal_planes(cloud, seed=args.seed)
    clusters = extract_clusters(cleaned)
    target = LaserTarget(position=args.laser, confidence=2)
    seg = segment_target(cleaned, clusters, target, min_pts=args.min_pts)
    save_ply(seg.cloud, args.out)
    lines = [
        f"input_points {len(cloud)}",
        f"fraction_removed {report.fraction_removed:.9g}",
        f"planes {len(report.planes)}",
    ]
    for i, p in enumerate(report.planes):
        lines.append(
            f"plane {i} normal {p.normal[0]:.9g} {p.normal[1]:.9g} {p.normal[2]:.9g} "
            f"offset {p.offset:.9g} inliers {p.inlier_count}"
        )
    lines.append(f"segment_points {len(seg.cloud)}")
    lines.append(f"segment_provenance {seg.provenance}")
    text = "\n".join(lines) + "\n"
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    print(text, end="")
    print(f"wrote {args.out}")
    return 0


def _cmd_grasps(args) -> int:
    from .harness import _advance_perception
    from .scene import load_scene
    from .session import PipelineConfig, Session

    scene = load_scene(args.scene)
    session = Session(scene, PipelineConfig(), seed=args.seed)
    ok = _advance_perception(session, args.laser)
    st = session.state
    if st.failure is not None:
        print(f"pipeline failed: {st.failure.value}", file=sys.stderr)
        return 1
    for c in st.ranked:
        p = c.position
        a, x = c.approach, c.axis
        b = c.base_point
        print(
            f"grasp {c.candidate_id} pos {p[0]:.9g} {p[1]:.9g} {p[2]:.9g} "
            f"approach {a[0]:.9g} {a[1]:.9g} {a[2]:.9g} "
            f"axis {x[0]:.9g} {x[1]:.9g} {x[2]:.9g} "
            f"width {c.width:.9g} base {b[0]:.9g} {b[1]:.9g} {b[2]:.9g} "
            f"score {c.scores.total:.9g}"
        )
    return 0


def _cmd_sim_run(args) -> int:
    from .harness import run_benchmark
    from .session import PipelineConfig

    config = PipelineConfig(mode=args.mode, selection=args.selection)
    result = run_benchmark(
        args.trials,
        config,
        base_seed=args.seed,
        object_count=args.objects,
        max_targets=args.targets,
    )
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(result.metrics.to_csv())
        print(f"wrote {args.out}")
    print(result.table(), end="")
    return 0


def _cmd_sim_ab(args) -> int:
    from .harness import run_ab_comparison

    result = run_ab_comparison(args.scenes, base_seed=args.seed)
    print(result.table(), end="")
    return 0


def _cmd_sim_serve(args) -> int:
    import uvicorn

    from .scene import load_scene
    from .service import create_app

    scene = load_scene(args.scene) if args.scene else None
    app = create_app(scene=scene)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="laserpick")
    sub = ap.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene utilities")
    scene_sub = scene.add_subparsers(dest="scene_command", required=True)
    gen = scene_sub.add_parser("gen", help="sample a random scene")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--objects", type=int, default=6)
    gen.add_argument("--out", default="scene.yaml")
    gen.add_argument("--ply", default=None, help="also write ground-truth PLY")
    gen.set_defaults(func=_cmd_scene_gen)

    prep = sub.add_parser("prep", help="plane removal + laser segmentation")
    prep.add_argument("--in", dest="infile", required=True)
    prep.add_argument("--laser", type=_parse_xyz, required=True, help="x,y,z")
    prep.add_argument("--out", default="segment.ply")
    prep.add_argument("--report", default=None)
    prep.add_argument("--min-pts", type=int, default=50)
    prep.add_argument("--seed", type=int, default=0)
    prep.set_defaults(func=_cmd_prep)

    grasps = sub.add_parser("grasps", help="dump ranked grasp candidates")
    grasps.add_argument("--scene", required=True)
    grasps.add_argument("--laser", type=_parse_xyz, required=True, help="x,y,z")
    grasps.add_argument("--seed", type=int, default=0)
    grasps.set_defaults(func=_cmd_grasps)

    sim = sub.add_parser("sim", help="simulation harness")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    run = sim_sub.add_parser("run", help="seeded benchmark trials")
    run.add_argument("--trials", type=int, default=10)
    run.add_argument("--mode", choices=["pick_drop", "pick_place"], default="pick_drop")
    run.add_argument("--selection", choices=["automatic", "manual"], default="automatic")
    run.add_argument("--seed", type=int, default=1000)
    run.add_argument("--objects", type=int, default=6)
    run.add_argument("--targets", type=int, default=None, help="targets per scene")
    run.add_argument("--out", default=None, help="metrics CSV path")
    run.set_defaults(func=_cmd_sim_run)

    ab = sim_sub.add_parser("ab", help="automatic vs manual on adjacency scenes")
    ab.add_argument("--scenes", type=int, default=50)
    ab.add_argument("--seed", type=int, default=5000)
    ab.set_defaults(func=_cmd_sim_ab)

    serve = sim_sub.add_parser("serve", help="run the session service")
    serve.add_argument("--port", type=int, default=8420)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--scene", default=None, help="scene YAML file")
    serve.set_defaults(func=_cmd_sim_serve)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
