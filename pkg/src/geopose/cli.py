"""geopose command line.

Every subcommand writes its outputs plus a ``manifest.json`` recording the
command, input digests, seed and parameters. Outputs do not depend on
``--threads``. Failures exit with status 1 and one ``error: <Kind>: message``
line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AugmentedSample, height_augment, rotate_augment, scale_augment
from .errors import EmptyComparisonError, GeoposeError, InvalidArgumentError
from .geometry import AffineCamera, GeocentricPose, flow_field
from .io import read_gpr, read_pose, write_gpr, write_manifest, write_png, write_pose
from .metrics import angle_errors, endpoint_rmse, error_stats, instance_iou_analysis, r_squared
from .ortho import ElevationModel, OrthoParams, ortho_inverse, orthorectify
from .raster import FlowField, Raster
from .rectify import rectify_to_ground
from .synth import SceneSpec, generate_scene, render

CSV_FIELDS = [
    "kind",
    "name",
    "value",
    "instance_id",
    "iou_unrectified",
    "iou_rectified",
    "max_magnitude",
    "included",
    "threshold",
    "rms_iou",
]


class CliError(GeoposeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def fmt(v) -> str:
    """Locale-independent decimal with 9 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".9g")


def _bool_raster(mask: np.ndarray) -> Raster:
    return Raster(mask.astype(np.float32))


def _load_flow(d: Path, pose: GeocentricPose) -> FlowField:
    if (d / "flow.gpr").exists() and (d / "magnitudes.gpr").exists():
        return FlowField(read_gpr(d / "flow.gpr"), read_gpr(d / "magnitudes.gpr"))
    return flow_field(pose)


def _load_pose(d: Path) -> GeocentricPose:
    s, a = read_pose(d / "pose.json")
    return GeocentricPose(s, a, read_gpr(d / "heights.gpr"))


def _existing(d: Path, names) -> dict:
    return {n: d / n for n in names if (d / n).exists()}


def cmd_synth(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.spec:
        doc = json.loads(Path(args.spec).read_text())
        spec = SceneSpec(
            n_boxes=int(doc.get("n_boxes", 4)),
            height_range=tuple(doc.get("height_range", (3.0, 30.0))),
            size_range=tuple(doc.get("size_range", (8, 32))),
            extent=tuple(doc.get("extent", (128, 128))),
        )
    else:
        spec = SceneSpec(
            n_boxes=args.n_boxes,
            height_range=tuple(args.height_range),
            size_range=tuple(args.size_range),
            extent=tuple(args.extent),
        )
    scene = generate_scene(args.seed, spec)
    b = render(scene, args.scale, args.angle_rad, threads=args.threads)
    write_gpr(out / "image.gpr", b.image)
    write_gpr(out / "heights.gpr", b.heights)
    write_gpr(out / "flow.gpr", b.flow.vectors)
    write_gpr(out / "magnitudes.gpr", b.flow.magnitudes)
    write_gpr(out / "instances.gpr", b.instances)
    write_gpr(out / "footprints.gpr", b.footprints)
    write_gpr(out / "occluded_ground.gpr", _bool_raster(b.occluded_ground.occluded))
    write_pose(out / "pose.json", b.pose.scale, b.pose.angle)
    (out / "scene.json").write_text(json.dumps(scene.to_json(), indent=2, sort_keys=True) + "\n")
    if args.png:
        write_png(out / "image.png", b.image)
        write_png(out / "heights.png", b.heights)
    params = {
        "scale": args.scale,
        "angle_rad": args.angle_rad,
        "n_boxes": spec.n_boxes,
        "height_range": list(spec.height_range),
        "size_range": list(spec.size_range),
        "extent": list(spec.extent),
    }
    write_manifest(out, "synth", {"spec": Path(args.spec)} if args.spec else {}, params, seed=args.seed)


def cmd_augment(args) -> None:
    src = Path(args.bundle)
    out = Path(args.out)
    ops = [o for o in (args.rotate_rad, args.scale, args.height_factor) if o is not None]
    if len(ops) != 1:
        raise InvalidArgumentError("give exactly one of --rotate-rad, --scale, --height-factor")
    pose = _load_pose(src)
    sample = AugmentedSample(read_gpr(src / "image.gpr"), pose, _load_flow(src, pose))
    if args.rotate_rad is not None:
        res = rotate_augment(sample, args.rotate_rad, args.interp, threads=args.threads)
    elif args.scale is not None:
        res = scale_augment(sample, args.scale, args.interp, threads=args.threads)
    else:
        res = height_augment(sample, args.height_factor, threads=args.threads)
    out.mkdir(parents=True, exist_ok=True)
    write_gpr(out / "image.gpr", res.image)
    write_gpr(out / "heights.gpr", res.pose.heights)
    write_gpr(out / "flow.gpr", res.flow.vectors)
    write_gpr(out / "magnitudes.gpr", res.flow.magnitudes)
    write_pose(out / "pose.json", res.pose.scale, res.pose.angle)
    if args.png:
        write_png(out / "image.png", res.image)
    inputs = _existing(src, ["image.gpr", "heights.gpr", "pose.json", "flow.gpr", "magnitudes.gpr"])
    params = {"interp": args.interp, "provenance": res.provenance}
    write_manifest(out, "augment", inputs, params)


def _parse_elev(spec: str | None) -> tuple[ElevationModel, dict]:
    if spec is None:
        return ElevationModel.constant(0.0), {}
    p = Path(spec)
    if spec.endswith(".gpr"):
        return ElevationModel.from_raster(read_gpr(p)), {"elevation": p}
    if spec.endswith(".json"):
        doc = json.loads(p.read_text())
        return ElevationModel.planar(doc.get("c", 0.0), doc.get("gx", 0.0), doc.get("gy", 0.0)), {"elevation": p}
    try:
        return ElevationModel.constant(float(spec)), {}
    except ValueError:
        raise InvalidArgumentError(f"elevation must be a .gpr, a .json or a number, got {spec!r}") from None


def cmd_ortho(args) -> None:
    raster = read_gpr(args.raster)
    camera = AffineCamera.from_json(json.loads(Path(args.camera).read_text()))
    elev, elev_inputs = _parse_elev(args.elev)
    params = OrthoParams(camera, args.k)
    fn = ortho_inverse if args.inverse else orthorectify
    res = fn(raster, params, elev, args.interp, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_gpr(out, res)
    inputs = {"raster": Path(args.raster), "camera": Path(args.camera), **elev_inputs}
    write_manifest(
        out,
        "ortho",
        inputs,
        {"k": args.k, "inverse": args.inverse, "interp": args.interp, "elev": args.elev},
    )


def cmd_rectify(args) -> None:
    raster = read_gpr(args.raster)
    s, a = read_pose(args.pose)
    pose = GeocentricPose(s, a, read_gpr(args.heights))
    res = rectify_to_ground(raster, pose, args.mode, median_width=args.median_width, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_gpr(out / "rectified.gpr", res.rectified)
    write_gpr(out / "occlusion.gpr", _bool_raster(res.occlusion.occluded))
    write_gpr(out / "hit_mask.gpr", _bool_raster(res.hit_mask))
    if args.png:
        write_png(out / "rectified.png", res.rectified, mask=res.occlusion.occluded)
        write_png(out / "occlusion.png", _bool_raster(res.occlusion.occluded))
    inputs = {"raster": Path(args.raster), "pose": Path(args.pose), "heights": Path(args.heights)}
    write_manifest(out, "rectify", inputs, {"mode": args.mode, "median_width": args.median_width})


def metric_rows(pred: Path, ref: Path, thresholds, threads: int = 1) -> list[dict]:
    rows = []

    def metric(name, value):
        rows.append({"kind": "metric", "name": name, "value": fmt(value)})

    for name in ("heights", "magnitudes"):
        if (pred / f"{name}.gpr").exists() and (ref / f"{name}.gpr").exists():
            p, r = read_gpr(pred / f"{name}.gpr"), read_gpr(ref / f"{name}.gpr")
            st = error_stats(p, r)
            metric(f"{name}.rmse", st.rmse)
            metric(f"{name}.mae", st.mae)
            metric(f"{name}.n", st.n)
            metric(f"{name}.r2", r_squared(p.band(), r.band()).r2)
    if (pred / "flow.gpr").exists() and (ref / "flow.gpr").exists():
        fp = FlowField(read_gpr(pred / "flow.gpr"), read_gpr(pred / "magnitudes.gpr"))
        fr = FlowField(read_gpr(ref / "flow.gpr"), read_gpr(ref / "magnitudes.gpr"))
        metric("flow.endpoint_rmse", endpoint_rmse(fp, fr))
    if (pred / "pose.json").exists() and (ref / "pose.json").exists():
        sp, ap = read_pose(pred / "pose.json")
        sr, ar = read_pose(ref / "pose.json")
        metric("pose.angle_error_deg", abs(math.degrees(float(angle_errors([ap], [ar])[0]))))
        metric("pose.scale_abs_error", abs(sp - sr))

    need = ["instances.gpr", "footprints.gpr", "heights.gpr", "pose.json"]
    if (pred / "rectified.gpr").exists() and all((ref / n).exists() for n in need):
        ref_pose = _load_pose(ref)
        unrect = read_gpr(ref / "instances.gpr")
        gt_warp = rectify_to_ground(unrect, ref_pose, "categorical", threads=threads).rectified
        analysis = instance_iou_analysis(
            unrect,
            read_gpr(pred / "rectified.gpr"),
            gt_warp,
            read_gpr(ref / "footprints.gpr"),
            _load_flow(ref, ref_pose),
            thresholds,
        )
        metric("instances.mean_iou_included", analysis.mean_included_iou())
        metric("instances.n_included", sum(r.included for r in analysis.records))
        for r in analysis.records:
            rows.append(
                {
                    "kind": "instance",
                    "instance_id": fmt(r.instance_id),
                    "iou_unrectified": fmt(r.iou_unrectified),
                    "iou_rectified": fmt(r.iou_rectified),
                    "max_magnitude": fmt(r.max_magnitude),
                    "included": fmt(r.included),
                }
            )
        for i in analysis.skipped:
            rows.append({"kind": "skipped", "instance_id": fmt(i)})
        for t, v in analysis.curve:
            rows.append({"kind": "curve", "threshold": fmt(t), "rms_iou": fmt(v)})
    if not rows:
        raise EmptyComparisonError(f"nothing comparable between {pred} and {ref}")
    return rows


def write_csv(path: Path, rows: list[dict], fields=CSV_FIELDS) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def cmd_metrics(args) -> None:
    pred, ref = Path(args.pred_dir), Path(args.ref_dir)
    for d in (pred, ref):
        if not d.is_dir():
            raise InvalidArgumentError(f"not a directory: {d}")
    rows = metric_rows(pred, ref, args.thresholds, threads=args.threads)
    out = Path(args.out)
    write_csv(out, rows)
    inputs = {f"pred/{p.name}": p for p in sorted(pred.iterdir()) if p.suffix in (".gpr", ".json") and not p.name.endswith("manifest.json")}
    inputs.update({f"ref/{p.name}": p for p in sorted(ref.iterdir()) if p.suffix in (".gpr", ".json") and not p.name.endswith("manifest.json")})
    write_manifest(out, "metrics", inputs, {"thresholds": list(args.thresholds)})


def cmd_hist(args) -> None:
    series: dict[str, np.ndarray] = {}
    scales = []
    for f in args.files:
        p = Path(f)
        if p.suffix == ".json":
            scales.append(read_pose(p)[0])
            continue
        r = read_gpr(p)
        for c in range(r.channels):
            v = r.band(c)[r.valid].astype(np.float64)
            series[p.name if r.channels == 1 else f"{p.name}:{c}"] = v
    if scales:
        series["scale"] = np.asarray(scales)
    rows = []
    for name, v in series.items():
        if v.size == 0:
            continue
        counts, edges = np.histogram(v, bins=args.bins)
        for n, lo, hi in zip(counts, edges[:-1], edges[1:]):
            rows.append({"series": name, "bin_lo": fmt(lo), "bin_hi": fmt(hi), "count": fmt(int(n))})
    if not rows:
        raise EmptyComparisonError("no valid values to histogram")
    out = Path(args.out)
    write_csv(out, rows, fields=["series", "bin_lo", "bin_hi", "count"])
    if args.png:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        for name, v in series.items():
            if v.size:
                ax.hist(v, bins=args.bins, histtype="step", label=name)
        ax.set_ylabel("count")
        ax.legend()
        fig.savefig(args.png, dpi=100, metadata={"Software": None})
        plt.close(fig)
    write_manifest(out, "hist", {f"input{i}": Path(f) for i, f in enumerate(args.files)}, {"bins": args.bins})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geopose", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate and render a synthetic box scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spec", help="scene spec JSON (overrides the box flags)")
    p.add_argument("--n-boxes", type=int, default=4)
    p.add_argument("--height-range", type=float, nargs=2, default=(3.0, 30.0), metavar=("LO", "HI"))
    p.add_argument("--size-range", type=int, nargs=2, default=(8, 32), metavar=("LO", "HI"))
    p.add_argument("--extent", type=int, nargs=2, default=(128, 128), metavar=("W", "H"))
    p.add_argument("--scale", type=float, default=0.5, help="pixels per meter")
    p.add_argument("--angle-rad", type=float, default=0.0)
    p.add_argument("--png", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="rotate, scale or raise the heights of a bundle")
    p.add_argument("bundle")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rotate-rad", type=float)
    g.add_argument("--scale", type=float)
    g.add_argument("--height-factor", type=float)
    p.add_argument("--interp", choices=("nearest", "bilinear"), default="bilinear")
    p.add_argument("--png", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("ortho", help="orthorectify a raster (or undo it with --inverse)")
    p.add_argument("raster")
    p.add_argument("--camera", required=True, help='JSON {"a": [[...], [...]]}')
    p.add_argument("--elev", help="elevation: GPR raster, planar JSON {c, gx, gy} or a constant")
    p.add_argument("--k", type=float, default=1.0, help="output pixels per meter")
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--interp", choices=("nearest", "bilinear"), default="bilinear")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ortho)

    p = sub.add_parser("rectify", help="rectify a raster to ground level")
    p.add_argument("raster")
    p.add_argument("--pose", required=True)
    p.add_argument("--heights", required=True)
    p.add_argument("--mode", choices=("continuous", "categorical"), default="continuous")
    p.add_argument("--median-width", type=int)
    p.add_argument("--png", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("metrics", help="compare a prediction directory with a reference directory")
    p.add_argument("pred_dir")
    p.add_argument("ref_dir")
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.0, 5.0, 10.0, 20.0, 40.0])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("hist", help="histograms of raster values or pose scales")
    p.add_argument("files", nargs="+")
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--png")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hist)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise InvalidArgumentError("--threads must be >= 1")
        args.func(args)
    except (GeoposeError, OSError, ValueError, KeyError, TypeError) as e:
        msg = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
