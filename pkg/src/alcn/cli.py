"""Command-line interface: ``alcn <subcommand> ...``.

Exit status is 0 on success and 2 on input errors (unreadable or malformed
files, bad parameter values).
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import classic, evaluate, nn, synth, train
from .adaptive import alcn_color, alcn_image, default_bank
from .image import ImageIOError, downscale, load_image, save_image

log = logging.getLogger("alcn")

METHODS = ("alcn", "standard", "dog", "slcn", "dlcn", "lrn", "he", "clahe", "sqi", "whiten")


class InputError(Exception):
    """Bad user input; reported on stderr with exit status 2."""


def _rescale(img):
    lo, hi = float(img.min()), float(img.max())
    return np.zeros_like(img) if hi - lo < 1e-12 else (img - lo) / (hi - lo)


def _section(params_file, name, cls):
    if params_file is None:
        return cls()
    values = classic.read_params(params_file)
    return classic.params_from(values.get(name, {}), cls)


def _to_gray(img):
    if img.ndim == 3:
        return img.astype(np.float64) @ np.array([0.299, 0.587, 0.114]) / 255.0
    return img


# ------------------------------------------------------------ subcommands

def cmd_normalize(args):
    img = load_image(args.input)
    if args.downscale != 1.0:
        if img.ndim == 3:
            raise InputError("--downscale applies to grayscale inputs only")
        img = downscale(img, args.downscale)
    if args.method == "alcn":
        if args.model is None:
            raise InputError("--method alcn needs --model")
        net = nn.load_model(args.model)
        if img.ndim == 3:
            save_image(args.output, alcn_color(img, net, stride=args.stride))
            return 0
        out = alcn_image(img, net, stride=args.stride)
    else:
        img = _to_gray(img)
        m, pf = args.method, args.params
        if m == "standard":
            out = classic.normalize_standard(img)
        elif m == "dog":
            out = classic.dog(img, _section(pf, "dog", classic.DoGParams))
        elif m == "slcn":
            out = classic.slcn(img, args.sigma_sub)
        elif m == "dlcn":
            out = classic.dlcn(img, args.sigma_sub, args.sigma_div, args.floor, args.sqrt_denominator)
        elif m == "lrn":
            out = classic.lrn(img, _section(pf, "lrn", classic.LrnParams))[0]
        elif m == "he":
            out = classic.hist_eq(img)
        elif m == "clahe":
            out = classic.clahe(img, _section(pf, "clahe", classic.ClaheParams))
        elif m == "sqi":
            out = classic.sqi(img, args.sigma_sub)
        else:  # whiten
            rng = np.random.default_rng(args.seed)
            m_side = args.whiten_size
            filt = classic.whitening_filter(classic.sample_patches(img, m_side, 10 * m_side * m_side * 4, rng))
            out = classic.whiten(img, filt)
    save_image(args.output, out if args.no_rescale else _rescale(out))
    return 0


def _config(args):
    return train.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                             momentum=args.momentum, seed=args.seed, activation=args.activation,
                             clip_norm=args.clip_norm)


def cmd_train_joint(args):
    ds = synth.load_dataset(args.data)
    cfg = _config(args)
    normalizer = nn.load_model(args.init_normalizer) if args.init_normalizer else None
    if args.freeze_normalizer and normalizer is None:
        raise InputError("--freeze-normalizer needs --init-normalizer")
    cfg.freeze_normalizer = args.freeze_normalizer
    res = train.joint_train(ds, default_bank(), cfg, num_classes=len(ds.label_names) or None,
                            normalizer=normalizer)
    nn.save_model(res.normalizer, args.out_normalizer)
    nn.save_model(res.detector, args.out_detector)
    if args.loss_csv:
        train.write_loss_csv(args.loss_csv, res.epoch_losses)
    print(f"final_loss={res.epoch_losses[-1]!r}")
    return 0


def cmd_train_dog(args):
    ds = synth.load_dataset(args.data)
    if args.split != "all":
        dark, bright = train.split_by_brightness(ds, args.threshold)
        ds = dark if args.split == "dark" else bright
        if len(ds) == 0:
            raise InputError(f"the {args.split} split is empty")
    init = _section(args.params, "dog", classic.DoGParams)
    res = train.dog_param_train(ds, _config(args), init, num_classes=len(ds.label_names) or None)
    classic.write_params(args.out, "dog", res.omega)
    if args.out_detector:
        nn.save_model(res.detector, args.out_detector)
    if args.loss_csv:
        train.write_loss_csv(args.loss_csv, res.epoch_losses)
    print(f"final_loss={res.epoch_losses[-1]!r}")
    return 0


def cmd_gen_synth(args):
    if len(args.asset) != len(args.mask):
        raise InputError("give one --mask per --asset")
    assets = []
    for a, m in zip(args.asset, args.mask):
        img, mask = _to_gray(load_image(a)), _to_gray(load_image(m))
        if args.downscale != 1.0:
            img, mask = downscale(img, args.downscale), downscale(mask, args.downscale)
        assets.append(synth.ForegroundAsset(img, mask > 0.5, Path(a).stem))
    pool = synth.load_backgrounds(args.backgrounds) if args.backgrounds else []
    if args.uniform_backgrounds or not pool:
        pool.append(synth.UniformBackground())
    p = synth.AugmentParams(A=args.A, B=args.B, S=args.S, noise_sigma=args.noise_sigma,
                            modulate_noise=not args.no_noise_modulation, seed=args.seed)
    ds = synth.generate_corpus(assets, pool, args.count, args.positive_fraction, p, args.seed)
    synth.save_dataset(ds, args.out)
    return 0


def cmd_detect(args):
    det = nn.load_model(args.detector)
    norm = nn.load_model(args.normalizer) if args.normalizer else None
    img = _to_gray(load_image(args.input))
    boxes = evaluate.sliding_detect(img, det, norm, stride=args.stride, box_size=args.box_size,
                                    threshold=args.threshold, nms_iou=args.nms, alcn_stride=args.alcn_stride)
    evaluate.write_boxes_csv(args.out, {args.image_id or Path(args.input).stem: boxes})
    print(f"detections={len(boxes)}")
    return 0


def cmd_eval(args):
    dets = evaluate.read_boxes_csv(args.detections, scored=True)
    truth = evaluate.read_boxes_csv(args.truth, scored=False)
    curve = evaluate.pr_auc(dets, truth, args.iou, args.interp)
    evaluate.write_pr_csv(args.out, curve)
    print(f"AUC={curve.auc:.6f}")
    return 0


def cmd_bench(args):
    net = nn.load_model(args.model) if args.model else None
    rows = evaluate.bench_normalize(args.sizes, repetitions=args.repetitions, stride=args.stride,
                                    normalizer=net)
    print("size,median_ms,convolutions")
    for r in rows:
        print(f"{r['size']},{r['median_ms']:.3f},{r['convolutions']}")
    return 0


# ------------------------------------------------------------ parser

def _train_flags(p):
    p.add_argument("--data", required=True, help="dataset file written by gen-synth")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip-norm", type=float, default=train.TrainConfig.clip_norm,
                   help="per-network gradient norm ceiling (0 disables)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--activation", choices=("tanh", "relu"), default="tanh")
    p.add_argument("--loss-csv", help="write per-epoch mean losses here")


def build_parser():
    ap = argparse.ArgumentParser(prog="alcn", description="Adaptive local contrast normalization toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="normalize one image")
    p.add_argument("--method", choices=METHODS, default="alcn")
    p.add_argument("--model", help="normalizer model (method alcn)")
    p.add_argument("--stride", type=int, default=8, help="ALCN prediction stride")
    p.add_argument("--params", help="key=value parameter file (dog.*, lrn.*, clahe.*)")
    p.add_argument("--sigma-sub", type=float, default=2.0)
    p.add_argument("--sigma-div", type=float, default=2.0)
    p.add_argument("--floor", type=float, default=1e-4, help="DLCN denominator floor")
    p.add_argument("--sqrt-denominator", action="store_true")
    p.add_argument("--whiten-size", type=int, default=5)
    p.add_argument("--downscale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-rescale", action="store_true", help="clip to [0,1] instead of min/max rescaling")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("train-joint", help="train normalizer and detector together")
    _train_flags(p)
    p.add_argument("--init-normalizer")
    p.add_argument("--freeze-normalizer", action="store_true")
    p.add_argument("--out-normalizer", required=True)
    p.add_argument("--out-detector", required=True)
    p.set_defaults(func=cmd_train_joint)

    p = sub.add_parser("train-dog", help="learn DoG parameters with a detector")
    _train_flags(p)
    p.add_argument("--params", help="initial dog.* values")
    p.add_argument("--split", choices=("all", "dark", "bright"), default="all")
    p.add_argument("--threshold", type=float, default=train.DARK_THRESHOLD)
    p.add_argument("--out", required=True, help="learned parameters as key=value text")
    p.add_argument("--out-detector")
    p.set_defaults(func=cmd_train_dog)

    p = sub.add_parser("gen-synth", help="generate a synthetic training corpus")
    p.add_argument("--asset", action="append", required=True)
    p.add_argument("--mask", action="append", required=True)
    p.add_argument("--backgrounds", help="directory of background images")
    p.add_argument("--uniform-backgrounds", action="store_true", help="add uniform-level backgrounds to the pool")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--positive-fraction", type=float, default=0.5)
    p.add_argument("--A", type=float, default=0.5)
    p.add_argument("--B", type=float, default=0.4)
    p.add_argument("--S", type=float, default=0.1)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--no-noise-modulation", action="store_true")
    p.add_argument("--downscale", type=float, default=1.0, help="downscale assets by this factor first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("detect", help="sliding-window detection on one image")
    p.add_argument("--detector", required=True)
    p.add_argument("--normalizer", help="ALCN normalizer; raw intensities when omitted")
    p.add_argument("--input", required=True)
    p.add_argument("--image-id")
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--alcn-stride", type=int, default=8)
    p.add_argument("--box-size", type=int, default=300)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--nms", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="PR curve and AUC of detections against ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--iou", type=float, default=0.8)
    p.add_argument("--interp", choices=("trapezoid", "pascal11"), default="trapezoid")
    p.add_argument("--out", default="pr.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time whole-image ALCN")
    p.add_argument("--sizes", type=int, nargs="+", default=[128])
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--model")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputError, ImageIOError, nn.ModelFormatError, ValueError, OSError) as exc:
        print(f"alcn {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
