"""Command-line interface.

Every subcommand reads and writes the raster container, GeoJSON, weight
files or JSON Lines reports, and writes atomically. Failures print one
``error[<Category>]: <message>`` line to stderr and exit with the
category's code.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import torch
from scipy import ndimage

from . import errors
from .errors import ConfigError, FieldBoundsError, FormatError, IoError
from .fsutil import atomic_write, read_bytes
from .loss_metrics import LAYERS, raster_report
from .nnblocks import (
    FusionConfig, ModelWeights, config_from_dict, config_to_dict, fit_toy,
    fusion_forward, toy_config, unet3d_forward,
)
from .postprocess import (
    RasterMeta, ThresholdPair, default_grid, dumps_geojson, extract_fields,
    from_geojson, front_table, label_polygons, match_polygons, tune_thresholds,
)
from .postprocess.polygons import FOUR
from .raster import DEFAULT_GEOTRANSFORM, RasterContainer
from .s1proc import S1_BANDS, S1Stack, coherency_from_channels, dualpol_decompose, standardize, transform_s1
from .synth import SceneSpec, gen_scene

SYNTH_CRS = "LOCAL:synthetic-10m"
S2_BANDS = ("blue", "green", "red", "nir")


def _exit_code_table() -> str:
    rows = ["exit codes:", "  0  success", "  1  other error", "  2  usage error"]
    for cls in sorted(errors.ALL_ERRORS, key=lambda c: c.exit_code):
        rows.append(f"  {cls.exit_code:<2} {cls.__name__}")
    return "\n".join(rows)


def _jsonl(records) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


def _read_text(path) -> str:
    try:
        return read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path} is not UTF-8 text: {exc}") from None


def _read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from None


def _pair(tb, te) -> ThresholdPair:
    return ThresholdPair(float(tb), float(te))


# --- subcommands --------------------------------------------------------------

def cmd_synth_data(a):
    spec = SceneSpec(seed=a.seed, H=a.size, W=a.size, n_fields=a.fields, T=a.times,
                     cloud_fraction=a.cloud_fraction, cloud_speed_px=a.cloud_speed, speckle_looks=a.looks)
    labels, gt, s2, s1, clouds = gen_scene(spec)
    try:
        os.makedirs(a.out_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {a.out_dir}: {exc.strerror or exc}") from None
    meta = RasterMeta(a.size, a.size, DEFAULT_GEOTRANSFORM, SYNTH_CRS)

    def put(name, data, bands):
        RasterContainer(data, list(bands), DEFAULT_GEOTRANSFORM, SYNTH_CRS).write(os.path.join(a.out_dir, name))

    put("s2_like.fbr", s2, S2_BANDS)
    put("s1_like.fbr", s1, S1_BANDS)
    put("gt.fbr", gt.stack(), LAYERS)
    put("labels.fbr", labels[None].astype(np.float64), ["label"])
    put("clouds.fbr", clouds[None].astype(np.float64), ["cloud"])
    atomic_write(os.path.join(a.out_dir, "gt_polygons.geojson"), dumps_geojson(label_polygons(labels, meta)))


def cmd_transform_s1(a):
    r = RasterContainer.read(a.inp)
    if tuple(r.band_names) != S1_BANDS:
        raise FormatError(f"S1 bands must be {list(S1_BANDS)}, got {r.band_names}")
    if r.data.ndim != 4:
        raise FormatError("S1 raster must be 5 x T x H x W")
    out = transform_s1(S1Stack(r.data, r.transformed))
    RasterContainer(out.bands, r.band_names, r.geotransform, r.crs, True, r.dtype).write(a.out)


def cmd_decompose_dualpol(a):
    r = RasterContainer.read(a.in_j)
    J = coherency_from_channels(r.data)
    dp = dualpol_decompose(J)
    out = np.stack([dp.alpha, dp.entropy, dp.anisotropy])
    RasterContainer(out, ["alpha", "entropy", "anisotropy"], r.geotransform, r.crs).write(a.out)


def _model_input(path, standardise):
    r = RasterContainer.read(path)
    if r.data.ndim != 4:
        raise FormatError(f"{path}: model input must be C x T x H x W")
    x = r.data.astype(np.float64)
    if standardise:
        x = standardize(x)[0]
    return r, x


def cmd_predict(a):
    cfg = config_from_dict(_read_json(a.model_cfg))
    w = ModelWeights.load(a.weights)
    r, x = _model_input(a.inp, not a.no_standardize)
    if isinstance(cfg, FusionConfig):
        if a.in_s1 is None:
            raise ConfigError("the fusion model needs --in-s1")
        _, x1 = _model_input(a.in_s1, not a.no_standardize)
        pred = fusion_forward(x, x1, cfg, w)
    else:
        if a.in_s1 is not None:
            raise ConfigError("--in-s1 is only used by fusion models")
        pred = unet3d_forward(x, cfg, w)
    RasterContainer(pred.stack(), list(LAYERS), r.geotransform, r.crs).write(a.out)


def cmd_metrics(a):
    pred = RasterContainer.read(a.pred)
    truth = RasterContainer.read(a.truth)
    rec = raster_report(pred.band("extent", 0), truth.band("extent", 0), a.threshold)
    atomic_write(a.report, _jsonl([rec]))


def _extent_bounds(a):
    er = RasterContainer.read(a.extent)
    br = er if a.bounds is None else RasterContainer.read(a.bounds)
    e = er.band("extent", 0)
    b = br.band("boundary", 1 if br is er else 0)
    if e.ndim != 2 or b.shape != e.shape:
        raise FormatError(f"extent {e.shape} and boundary {b.shape} must be matching 2-D bands")
    return er, e, b


def cmd_polygonize(a):
    er, e, b = _extent_bounds(a)
    res = extract_fields(e, b, er.meta, _pair(a.tb, a.te), a.tolerance, a.min_area)
    atomic_write(a.out_geojson, dumps_geojson(res.polygons))


def cmd_match_polygons(a):
    pred = from_geojson(_read_text(a.pred))
    truth = from_geojson(_read_text(a.truth))
    matches = match_polygons(pred, truth, a.iou_min)
    atomic_write(a.report, _jsonl(m._asdict() for m in matches))


def cmd_tune_thresholds(a):
    _, e, b = _extent_bounds(a)
    truth = RasterContainer.read(a.truth).band("extent", 0) > 0.5
    count = int(ndimage.label(truth, structure=FOUR)[1])
    res = tune_thresholds(e, b, truth, count, default_grid(a.grid_step), jobs=a.jobs)
    atomic_write(a.report, _jsonl(front_table(res)))


def cmd_fit_toy(a):
    spec = SceneSpec(seed=a.seed, H=a.size, W=a.size, n_fields=a.fields, T=a.times)
    _, gt, s2, _, _ = gen_scene(spec)
    cfg = toy_config(in_channels=s2.shape[0], features=a.features)
    w, trace = fit_toy(cfg, [(standardize(s2)[0], gt)], a.steps, a.lr, seed=a.seed)
    w.save(a.out_weights)
    atomic_write(a.trace, _jsonl({"step": i, "loss": v} for i, v in enumerate(trace)))
    if a.out_cfg:
        atomic_write(a.out_cfg, json.dumps(config_to_dict(cfg), indent=1) + "\n")


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fieldbounds", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Field boundary delineation toolkit.", epilog=_exit_code_table())
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_, epilog=_exit_code_table(),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=fn)
        return sp

    s = cmd("synth-data", cmd_synth_data, "generate a synthetic scene with ground truth")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--fields", type=int, default=6)
    s.add_argument("--times", type=int, default=4)
    s.add_argument("--cloud-fraction", type=float, default=0.0)
    s.add_argument("--cloud-speed", type=float, default=8.0)
    s.add_argument("--looks", type=int, default=4)
    s.add_argument("--out-dir", required=True)

    s = cmd("transform-s1", cmd_transform_s1, "angle to radians and symlog backscatter on an S1 raster")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)

    s = cmd("decompose-dualpol", cmd_decompose_dualpol, "entropy/alpha/anisotropy of 2x2 coherency rasters")
    s.add_argument("--in-j", required=True, help="8 channels: Re/Im of J_xx, J_xy, J_yx, J_yy")
    s.add_argument("--out", required=True)

    s = cmd("predict", cmd_predict, "run a U-Net3D or fusion model, writing extent/boundary/distance")
    s.add_argument("--model-cfg", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--in", dest="inp", required=True, help="optical (or sole) C x T x H x W raster")
    s.add_argument("--in-s1", help="SAR raster for fusion models")
    s.add_argument("--no-standardize", action="store_true", help="feed bands without per-band scaling")
    s.add_argument("--out", required=True)

    s = cmd("metrics", cmd_metrics, "raster metrics of a predicted extent against the truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--report", required=True)

    def extent_args(s):
        s.add_argument("--extent", required=True, help="raster with an 'extent' band")
        s.add_argument("--bounds", help="raster with a 'boundary' band (default: the extent raster)")

    s = cmd("polygonize", cmd_polygonize, "refined thresholding, polygons, simplification and area filter")
    extent_args(s)
    s.add_argument("--tb", type=float, default=0.2)
    s.add_argument("--te", type=float, default=0.4)
    s.add_argument("--min-area", type=float, default=100.0, help="square map units")
    s.add_argument("--tolerance", type=float, default=10.0, help="simplification tolerance in map units")
    s.add_argument("--out-geojson", required=True)

    s = cmd("match-polygons", cmd_match_polygons, "greedy IoU matching with Hausdorff and MSD per match")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--iou-min", type=float, default=1e-3)
    s.add_argument("--report", required=True)

    s = cmd("tune-thresholds", cmd_tune_thresholds, "Pareto front of threshold pairs and the best pair")
    extent_args(s)
    s.add_argument("--truth", required=True)
    s.add_argument("--grid-step", type=float, default=0.05)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--report", required=True)

    s = cmd("fit-toy", cmd_fit_toy, "train the reduced model on a synthetic scene by gradient descent")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int, default=500)
    s.add_argument("--lr", type=float, default=0.5)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--times", type=int, default=4)
    s.add_argument("--fields", type=int, default=6)
    s.add_argument("--features", type=int, default=8)
    s.add_argument("--out-weights", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--out-cfg", help="also write the model configuration JSON")
    return p


def main(argv=None) -> int:
    torch.set_num_threads(1)
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except FieldBoundsError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[IoError]: {exc}", file=sys.stderr)
        return IoError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
