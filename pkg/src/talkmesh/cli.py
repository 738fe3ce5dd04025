"""File-based command-line driver.

Exit codes: 0 success, 1 domain error (diagnostic on stderr), 2 usage error.
All randomness comes from explicit ``--seed`` flags or the config document.
"""
import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .encoding import load_features, save_features
from .errors import FormatError, MissingField, ShapeMismatch, TalkMeshError
from .featio import load_container, save_container
from .mesh import Mesh, load_obj, load_obj_uv, load_region_masks, save_obj, save_region_masks
from .sampler import draw_samples, init_distribution, load_samples, pin_all_vertices, save_samples
from .synthesis import AnimationSequence, init_params, synthesize_sequence
from .synthetic import DatasetItem, make_synthetic_dataset
from .training import (TrainingConfig, load_checkpoint, samples_from_arrays, samples_to_arrays,
                       save_checkpoint, train, write_history_csv)
from .uv import UVAtlas, conformal_parameterize, load_atlas, save_atlas

GRADCHECK_TOL = 1e-4


def _read_atlas(path, mesh):
    if path.lower().endswith(".obj"):
        uv = load_obj_uv(path)
        if len(uv) != mesh.n_vertices:
            raise ShapeMismatch(f"{path}: {len(uv)} vt records for {mesh.n_vertices} vertices")
        return UVAtlas(uv, mesh.faces)
    atlas = load_atlas(path)
    if atlas.uv.shape[0] != mesh.n_vertices or not np.array_equal(atlas.faces, mesh.faces):
        raise ShapeMismatch(f"{path}: atlas does not share the mesh topology")
    return atlas


def _read_frames(path):
    """Frames, topology and optional template vertices of an animation container."""
    if os.path.isdir(path):
        path = os.path.join(path, "animation.feat")
    arrays, meta = load_container(path)
    if "frames" not in arrays:
        raise MissingField(f"{path}: no 'frames' array")
    topo = arrays.get("topology")
    return (np.asarray(arrays["frames"], dtype=np.float64),
            None if topo is None else np.asarray(topo, dtype=np.int64).reshape(-1, 3),
            arrays.get("template.vertices"), meta)


def _resolve(base, p):
    return p if os.path.isabs(p) else os.path.join(base, p)


# -- subcommands ------------------------------------------------------------

def cmd_parameterize(args):
    mesh = load_obj(args.mesh)
    atlas = conformal_parameterize(mesh)
    if args.output.lower().endswith(".obj"):
        save_obj(mesh, args.output, uv=atlas.uv)
    else:
        save_atlas(atlas, args.output)
    return 0


def cmd_sample(args):
    mesh = load_obj(args.mesh)
    atlas = _read_atlas(args.atlas, mesh)
    masks = load_region_masks(args.masks, mesh)
    dist = init_distribution(mesh, atlas, masks, args.alpha, args.sigma)
    samples = draw_samples(dist, atlas, args.M, args.seed, pin_boundary=not args.no_pin_boundary)
    save_samples(samples, args.output)
    return 0


def cmd_make_synthetic(args):
    item, samples, atlas = make_synthetic_dataset(args.seed, args.vertices, args.frames, args.dim,
                                                  args.samples, args.amplitude)
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    save_obj(item.template, os.path.join(out, "template.obj"))
    save_region_masks(item.masks, os.path.join(out, "masks.json"))
    save_features(item.audio, os.path.join(out, "audio.feat"))
    save_container(os.path.join(out, "gt.feat"), {
        "frames": item.gt_frames, "topology": item.template.faces,
        "template.vertices": item.template.vertices,
    }, meta={"frame_rate": item.frame_rate})
    save_atlas(atlas, os.path.join(out, "atlas.feat"))
    save_samples(samples, os.path.join(out, "samples.feat"))
    tc = TrainingConfig(seed=args.seed, M=args.samples)
    tc = dataclasses.replace(tc, model=dataclasses.replace(tc.model, D=args.dim))
    doc = {
        "template": "template.obj", "masks": "masks.json", "atlas": "atlas.feat",
        "samples": "samples.feat", "sequences": [{"audio": "audio.feat", "gt": "gt.feat"}],
        "training": tc.to_dict(),
    }
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def load_run_config(path, overrides=None):
    """Training config document plus flag overrides (flags win).

    Returns ``(config, dataset, atlas, samples)``; ``atlas`` and ``samples``
    are None when the document does not name them.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: {e}") from None
    base = os.path.dirname(os.path.abspath(path))
    for key in ("template", "masks", "sequences"):
        if key not in doc:
            raise MissingField(f"{path}: missing '{key}'")
    tc = TrainingConfig.from_dict(doc.get("training", {}))
    o = {k: v for k, v in (overrides or {}).items() if v is not None}
    model_o = {k: o.pop(k) for k in ("use_ste", "use_rgcn", "use_dcam") if k in o}
    tc = dataclasses.replace(tc, **o, model=dataclasses.replace(tc.model, **model_o))
    paths = [_resolve(base, doc["template"]), _resolve(base, doc["masks"])]
    paths += [_resolve(base, doc[k]) for k in ("atlas", "samples") if doc.get(k)]
    for s in doc["sequences"]:
        paths += [_resolve(base, s["audio"]), _resolve(base, s["gt"])]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise MissingField(f"referenced files do not exist: {', '.join(missing)}")

    template = load_obj(_resolve(base, doc["template"]))
    masks = load_region_masks(_resolve(base, doc["masks"]), template)
    dataset = []
    for s in doc["sequences"]:
        audio = load_features(_resolve(base, s["audio"]))
        frames, _, _, meta = _read_frames(_resolve(base, s["gt"]))
        if frames.shape[1] != template.n_vertices:
            raise ShapeMismatch(f"{s['gt']}: {frames.shape[1]} vertices, template has {template.n_vertices}")
        if audio.D != tc.model.D:
            raise ShapeMismatch(f"{s['audio']}: feature dim {audio.D} != model D {tc.model.D}")
        dataset.append(DatasetItem(template, frames, audio, masks, float(meta.get("frame_rate", 30.0))))
    atlas = _read_atlas(_resolve(base, doc["atlas"]), template) if doc.get("atlas") else None
    samples = load_samples(_resolve(base, doc["samples"])) if doc.get("samples") else None
    return tc, dataset, atlas, samples


def cmd_train(args):
    overrides = {"steps": args.steps, "learning_rate": args.lr, "seed": args.seed,
                 "use_ste": False if args.no_ste else None,
                 "use_rgcn": False if args.no_rgcn else None,
                 "use_dcam": False if args.no_dcam else None}
    tc, dataset, atlas, samples = load_run_config(args.config, overrides)
    atlas = atlas if atlas is not None else conformal_parameterize(dataset[0].template)
    n = len(dataset)
    state = train(dataset, tc, init_params(tc.model, tc.seed), samples=None if samples is None else [samples] * n,
                  atlases=[atlas] * n)
    prep = state.prepared[0]
    extra = {"template.vertices": prep.item.template.vertices, "template.faces": prep.item.template.faces,
             "atlas.uv": prep.atlas.uv}
    extra.update(samples_to_arrays(prep.ctx.samples))
    save_checkpoint(args.output, state, tc, extra, meta={"frame_rate": prep.item.frame_rate})
    if args.history:
        write_history_csv(state.history, args.history)
    return 0


def cmd_synth(args):
    state, tc, extra, meta = load_checkpoint(args.checkpoint)
    for k in ("template.vertices", "template.faces", "atlas.uv"):
        if k not in extra:
            raise MissingField(f"{args.checkpoint}: checkpoint lacks '{k}'")
    template = Mesh(extra["template.vertices"], np.asarray(extra["template.faces"], dtype=np.int64))
    atlas = UVAtlas(extra["atlas.uv"], template.faces)
    samples = pin_all_vertices(atlas) if args.original_topology else samples_from_arrays(extra)
    audio = load_features(args.audio)
    rate = args.frame_rate or float(meta.get("frame_rate", 30.0))
    T = args.frames or max(2, int(round(audio.T * rate / audio.source_rate)))
    anim = synthesize_sequence(template, atlas, samples, audio, state.params, T, tc.model, rate)
    os.makedirs(args.output, exist_ok=True)
    anim.save(os.path.join(args.output, "animation.feat"))
    if not args.no_obj:
        anim.export_obj_dir(args.output)
    return 0


def cmd_eval(args):
    from .metrics import evaluate_sequence, write_reports_csv

    pred, pred_topo, _, _ = _read_frames(args.pred)
    gt, gt_topo, tmpl_v, _ = _read_frames(args.gt)
    if args.template:
        template = load_obj(args.template)
    elif tmpl_v is not None and gt_topo is not None:
        template = Mesh(tmpl_v, gt_topo)
    else:
        raise MissingField("ground truth carries no template; pass --template")
    masks = load_region_masks(args.masks, template)
    seq = AnimationSequence(pred, pred_topo if pred_topo is not None else template.faces)
    report = evaluate_sequence(seq, gt, masks, template, absolute_fdd=args.absolute_fdd)
    write_reports_csv([report], args.output, [os.path.basename(os.path.normpath(args.pred))])
    return 0


def cmd_gradcheck(args):
    from .checks import REGISTRY

    names = [args.module] if args.module else list(REGISTRY)
    ok = True
    for name in names:
        rep = REGISTRY[name](args.eps)
        passed = rep.max_rel_error < GRADCHECK_TOL
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {rep}")
    return 0 if ok else 1


# -- parser -----------------------------------------------------------------

def build_parser():
    from .checks import REGISTRY

    p = argparse.ArgumentParser(prog="talkmesh", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("parameterize", help="conformal UV atlas of a disk-topology mesh")
    s.add_argument("mesh")
    s.add_argument("-o", "--output", required=True, help="atlas file (.obj writes vt records)")
    s.set_defaults(func=cmd_parameterize)

    s = sub.add_parser("sample", help="draw a multi-resolution sample set")
    s.add_argument("mesh")
    s.add_argument("atlas")
    s.add_argument("masks")
    s.add_argument("-M", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--alpha", type=float, default=4.0)
    s.add_argument("--sigma", type=float, default=None)
    s.add_argument("--no-pin-boundary", action="store_true")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("make-synthetic", help="write a synthetic template, masks, audio and ground truth")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--vertices", type=int, default=200)
    s.add_argument("--frames", type=int, default=20)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--samples", type=int, default=300)
    s.add_argument("--amplitude", type=float, default=0.08)
    s.set_defaults(func=cmd_make_synthetic)

    s = sub.add_parser("train", help="train from a JSON run document")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True, help="checkpoint path")
    s.add_argument("--steps", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--no-ste", action="store_true", help="time-free position encoding")
    s.add_argument("--no-rgcn", action="store_true")
    s.add_argument("--no-dcam", action="store_true")
    s.add_argument("--history", help="optional CSV of per-step losses")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("synth", help="animate the checkpoint template from audio features")
    s.add_argument("checkpoint")
    s.add_argument("audio")
    s.add_argument("-o", "--output", required=True, help="animation directory")
    s.add_argument("--frames", type=int)
    s.add_argument("--frame-rate", type=float)
    s.add_argument("--original-topology", action="store_true", help="evaluate at the template vertices")
    s.add_argument("--no-obj", action="store_true", help="skip per-frame OBJ export")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("eval", help="E_vl, E_ve and FDD of a prediction")
    s.add_argument("pred", help="animation container or synth output directory")
    s.add_argument("gt")
    s.add_argument("masks")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--template")
    s.add_argument("--absolute-fdd", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    s.add_argument("--module", choices=sorted(REGISTRY))
    s.add_argument("--eps", type=float, default=1e-5)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TalkMeshError, OSError, ValueError, KeyError) as e:
        print(f"talkmesh {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
