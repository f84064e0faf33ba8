"""Command-line frontend composing the library into reproducible pipelines.

Subcommands: encode, decode, eval, stats, synth, bench. Every run emits a
JSON manifest (command, parameters, paths, version, stage timings) next to
its primary output; timings aside, outputs are byte-identical across
re-runs with the same inputs and flags.

Exit codes: 0 ok, 2 usage/schema error, 3 missing or corrupt heatmap file,
4 truth/results image-id mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .association import DecodeParams, decode_image
from .dataset_io import (
    AnnotationSet,
    load_annotations,
    load_results,
    write_annotations,
    write_results,
    compute_stats,
)
from .errors import (
    PkhmFormatError,
    PosekitError,
    SkeletonError,
    UnknownImageId,
    UnknownImageRef,
)
from .evaluation import evaluate
from .heatmaps import encode_keypoints, encode_limbs, read_pkhm, write_pkhm
from .synthgen import SceneConfig, generate_scene, scenes_to_annotations

EXIT_USAGE = 2
EXIT_BAD_HEATMAP = 3
EXIT_ID_MISMATCH = 4


def _fail(code: int, message: str) -> int:
    print(f"posekit: {message}", file=sys.stderr)
    return code


def _write_manifest(path: Path, command: str, params: dict, inputs: list[str],
                    outputs: list[str], timings: dict[str, float]) -> None:
    doc = {
        "command": command,
        "parameters": params,
        "inputs": inputs,
        "outputs": outputs,
        "version": __version__,
        "timings_s": timings,
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _jobs_default() -> int:
    try:
        return max(1, int(os.environ.get("POSEKIT_JOBS", "1")))
    except ValueError:
        return 1


def cmd_encode(args) -> int:
    if args.sigma is not None and args.sigma <= 0:
        return _fail(EXIT_USAGE, f"--sigma must be > 0, got {args.sigma}")
    if not (0.0 < args.scale <= 1.0):
        return _fail(EXIT_USAGE, f"--scale must be in (0, 1], got {args.scale}")
    try:
        aset = load_annotations(args.annotations)
    except PosekitError as e:
        return _fail(EXIT_USAGE, f"bad annotation file: {e}")
    spec = aset.spec
    if args.sigma is not None:
        from dataclasses import replace

        spec = replace(spec, sigma=args.sigma)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    outputs = []
    for im in aset.images:
        w = max(1, round(im.width * args.scale))
        h = max(1, round(im.height * args.scale))
        insts = aset.instances.get(im.id, [])
        kp = encode_keypoints(insts, spec, w, h, scale=args.scale)
        limb = encode_limbs(insts, spec, w, h, scale=args.scale)
        kp_path = out_dir / f"{im.id}_keypoints.pkhm"
        limb_path = out_dir / f"{im.id}_limbs.pkhm"
        write_pkhm(kp, kp_path)
        write_pkhm(limb, limb_path)
        outputs += [str(kp_path), str(limb_path)]
    elapsed = time.perf_counter() - t0
    _write_manifest(
        out_dir / "manifest.json",
        "encode",
        {"sigma": spec.sigma, "scale": args.scale},
        [str(args.annotations)],
        outputs,
        {"encode": elapsed},
    )
    return 0


def _decode_one(spec, params, kp_path: Path, limb_path: Path):
    kp = read_pkhm(kp_path)
    limb = read_pkhm(limb_path)
    t0 = time.perf_counter()
    poses = decode_image(kp, limb, spec, params)
    return poses, time.perf_counter() - t0


def cmd_decode(args) -> int:
    in_dir = Path(args.heatmaps)
    try:
        aset = load_annotations(args.annotations)
    except PosekitError as e:
        return _fail(EXIT_USAGE, f"bad annotation file: {e}")
    params = DecodeParams(
        peak_threshold=args.threshold,
        samples=args.samples,
        score_floor=args.score_floor,
        sample_floor=args.sample_floor,
        keep_singletons=args.keep_singletons,
    )
    if args.config:
        params = DecodeParams.from_json(Path(args.config).read_text())

    pairs = []
    for im in aset.images:
        kp_path = in_dir / f"{im.id}_keypoints.pkhm"
        limb_path = in_dir / f"{im.id}_limbs.pkhm"
        pairs.append((im.id, kp_path, limb_path))

    results = {}
    latencies = []
    try:
        jobs = args.jobs or _jobs_default()
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                decoded = list(
                    pool.map(lambda p: _decode_one(aset.spec, params, p[1], p[2]), pairs)
                )
        else:
            decoded = [_decode_one(aset.spec, params, kp, limb) for _, kp, limb in pairs]
    except PkhmFormatError as e:
        return _fail(EXIT_BAD_HEATMAP, str(e))
    for (image_id, _, _), (poses, dt) in zip(pairs, decoded):
        results[image_id] = poses
        latencies.append(dt)

    out_path = Path(args.out)
    write_results(results, out_path)
    lat = np.array(latencies) if latencies else np.zeros(1)
    _write_manifest(
        out_path.with_suffix(out_path.suffix + ".manifest.json"),
        "decode",
        json.loads(params.to_json()),
        [str(args.heatmaps), str(args.annotations)],
        [str(out_path)],
        {
            "decode_total": float(lat.sum()),
            "decode_mean": float(lat.mean()),
            "decode_p50": float(np.percentile(lat, 50)),
            "decode_p99": float(np.percentile(lat, 99)),
        },
    )
    return 0


def cmd_eval(args) -> int:
    try:
        aset = load_annotations(args.truth)
        results = load_results(args.results)
    except PosekitError as e:
        return _fail(EXIT_USAGE, f"bad input file: {e}")
    truths = {im.id: aset.instances.get(im.id, []) for im in aset.images}
    try:
        report = evaluate(results, truths, aset.spec, max_detections=args.max_detections)
    except (UnknownImageId, UnknownImageRef) as e:
        return _fail(EXIT_ID_MISMATCH, str(e))
    print(report.table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
        _write_manifest(
            Path(args.out).with_suffix(".manifest.json"),
            "eval",
            {"max_detections": args.max_detections},
            [str(args.truth), str(args.results)],
            [str(args.out)],
            {},
        )
    return 0


def cmd_stats(args) -> int:
    try:
        aset = load_annotations(args.annotations)
    except PosekitError as e:
        return _fail(EXIT_USAGE, f"bad annotation file: {e}")
    stats = compute_stats(aset, reference_part=args.reference_part)
    total_frames = len(aset.images)
    singles = stats.instance_count_histogram.get(1, 0)
    summary = {
        "frames": total_frames,
        "instances": sum(
            k * v for k, v in stats.instance_count_histogram.items()
        ),
        "single_instance_fraction": (singles / total_frames) if total_frames else 0.0,
        **{f"{k}_fraction": v for k, v in stats.scale_proportions.items()},
    }
    doc = {**stats.to_dict(), "summary": summary}
    text = json.dumps(doc, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(f"frames: {total_frames}")
    print(f"instances: {summary['instances']}")
    print(f"single-instance frames: {100.0 * summary['single_instance_fraction']:.1f}%")
    for name in ("small", "medium", "large"):
        print(f"{name} instances: {100.0 * stats.scale_proportions[name]:.1f}%")
    return 0


def cmd_synth(args) -> int:
    if args.frames < 0:
        return _fail(EXIT_USAGE, "--frames must be >= 0")
    lo, _, hi = args.instances.partition(":")
    try:
        inst_lo, inst_hi = int(lo), int(hi or lo)
    except ValueError:
        return _fail(EXIT_USAGE, f"--instances must be N or MIN:MAX, got {args.instances!r}")
    w, h = args.size
    from .types import default_spec

    spec = default_spec(sigma=args.sigma)
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    scenes = []
    t0 = time.perf_counter()
    for i in range(args.frames):
        n = int(rng.integers(inst_lo, inst_hi + 1))
        config = SceneConfig(
            seed=args.seed + 1 + i,
            num_instances=n,
            canvas_width=w,
            canvas_height=h,
            min_separation=args.min_separation,
            scale_min=args.scale_range[0],
            scale_max=args.scale_range[1],
            sigma_margin=args.sigma,
        )
        try:
            scenes.append(generate_scene(config, spec))
        except PosekitError as e:
            return _fail(EXIT_USAGE, str(e))
    aset = scenes_to_annotations(scenes, w, h, spec)
    write_annotations(aset, args.out)
    _write_manifest(
        Path(args.out).with_suffix(".manifest.json"),
        "synth",
        {
            "seed": args.seed,
            "frames": args.frames,
            "instances": args.instances,
            "size": [w, h],
            "min_separation": args.min_separation,
            "scale_range": list(args.scale_range),
            "sigma": args.sigma,
        },
        [],
        [str(args.out)],
        {"synth": time.perf_counter() - t0},
    )
    return 0


def cmd_bench(args) -> int:
    if args.scenes <= 0:
        return _fail(EXIT_USAGE, "--scenes must be > 0")
    from .types import default_spec

    w, h = args.size
    spec = default_spec()
    params = DecodeParams()
    latencies = []
    poses_digest = []
    for i in range(args.scenes):
        config = SceneConfig(
            seed=args.seed + i,
            num_instances=1 + i % 3,
            canvas_width=w,
            canvas_height=h,
        )
        scene = generate_scene(config, spec)
        kp = encode_keypoints(scene, spec, w, h)
        limb = encode_limbs(scene, spec, w, h)
        t0 = time.perf_counter()
        poses = decode_image(kp, limb, spec, params)
        latencies.append(time.perf_counter() - t0)
        poses_digest.append(len(poses))
    lat_ms = np.array(latencies) * 1000.0
    report = {
        "scenes": args.scenes,
        "size": [w, h],
        "decoded_instances": int(sum(poses_digest)),
        "latency_ms": {
            "mean": float(lat_ms.mean()),
            "p50": float(np.percentile(lat_ms, 50)),
            "p99": float(np.percentile(lat_ms, 99)),
        },
    }
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def _size(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h)


def _range(text: str) -> tuple[float, float]:
    a, _, b = text.partition(":")
    return float(a), float(b or a)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posekit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="render ground-truth heatmaps from annotations")
    p.add_argument("annotations")
    p.add_argument("--out", required=True, help="output directory for PKHM files")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode PKHM heatmaps into pose results")
    p.add_argument("heatmaps", help="directory produced by 'posekit encode'")
    p.add_argument("annotations", help="annotation file naming the images and skeleton")
    p.add_argument("--out", required=True, help="results JSON path")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--score-floor", type=float, default=0.05)
    p.add_argument("--sample-floor", type=float, default=0.05)
    p.add_argument("--keep-singletons", action="store_true")
    p.add_argument("--config", help="JSON file overriding the decode parameters")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (env POSEKIT_JOBS)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("truth", help="annotation file")
    p.add_argument("results", help="results JSON")
    p.add_argument("--out", help="write the full report as JSON")
    p.add_argument("--max-detections", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("annotations")
    p.add_argument("--out", help="write stats JSON")
    p.add_argument("--reference-part", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic annotated dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--instances", default="1:3", help="N or MIN:MAX per frame")
    p.add_argument("--size", type=_size, default=(96, 96), metavar="WxH")
    p.add_argument("--min-separation", type=float, default=12.0)
    p.add_argument("--scale-range", type=_range, default=(8.0, 14.0), metavar="MIN:MAX")
    p.add_argument("--sigma", type=float, default=2.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="post-processing latency benchmark")
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--size", type=_size, default=(96, 96), metavar="WxH")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SkeletonError as e:
        return _fail(EXIT_USAGE, str(e))
    except PkhmFormatError as e:
        return _fail(EXIT_BAD_HEATMAP, str(e))


if __name__ == "__main__":
    sys.exit(main())
