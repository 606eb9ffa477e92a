"""Command-line entry point: ``rgbd-panoptic <subcommand> ...``.

Exit codes: 0 success, 1 failed check, 2 bad arguments, 3 malformed input file
or config.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from rgbd_panoptic import formats, gradcheck, losses, metrics, postprocess, scheduler, synthdata
from rgbd_panoptic.config import ConfigError, load_config
from rgbd_panoptic.fusion import Variant

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_FORMAT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _decoder_outputs(args) -> postprocess.DecoderOutputs:
    return postprocess.DecoderOutputs(
        formats.read_tensor(args.sem), formats.read_tensor(args.cen), formats.read_tensor(args.emb)
    )


def cmd_infer(args) -> int:
    cfg = load_config(args.config)
    mask = postprocess.panoptic_inference(_decoder_outputs(args), cfg.postprocess())
    formats.write_mask(args.out, mask)
    print(f"wrote {args.out}: {int(mask.instance_map.max())} instances")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    pred = formats.read_mask(args.pred)
    gt = formats.read_mask(args.gt)
    report = metrics.panoptic_quality(pred, gt, cfg.stuff_classes)
    print(report.format())
    print(f"mIoU={metrics.mean_iou(pred.class_map, gt.class_map, args.num_classes):.6f}")
    return EXIT_OK


def cmd_losses(args) -> int:
    cfg = load_config(args.config)
    sem = formats.read_tensor(args.sem)
    labels = formats.read_mask(args.labels).class_map
    cen = formats.read_tensor(args.cen)
    cen_gt = formats.read_tensor(args.cen_gt)
    emb = formats.read_tensor(args.emb)
    ann = postprocess.instance_annotation(formats.read_mask(args.instances).instance_map)

    l_sem = losses.cross_entropy(sem, labels)
    l_cen = losses.focal_loss(cen, cen_gt.reshape(cen_gt.shape[-2:]), cfg.focal())
    l_emb = losses.embedding_loss(emb, ann, cfg.embedding())
    l_pan = losses.panoptic_loss(l_sem, l_cen, l_emb.total, cfg.loss_weights())
    for name, value in (
        ("L_sem", l_sem), ("L_cen", l_cen), ("L_att", l_emb.att), ("L_rep", l_emb.rep),
        ("L_reg", l_emb.reg), ("L_emb", l_emb.total), ("L_pan", l_pan),
    ):
        print(f"{name}={value:.9g}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    variants = None if args.variant is None else [Variant.parse(args.variant)]
    results = gradcheck.run_gradcheck(variants, seed=args.seed, trials=args.trials)
    worst = 0.0
    for name, err in results:
        status = "ok" if err < gradcheck.TOLERANCE else "FAIL"
        print(f"{name} max_rel_err={err:.3e} {status}")
        worst = max(worst, err)
    print(f"max_rel_err={worst:.3e}")
    return EXIT_OK if worst < gradcheck.TOLERANCE else EXIT_CHECK_FAILED


def cmd_synth(args) -> int:
    try:
        spec = synthdata.SceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scene spec {args.spec}: {exc}") from None
    manifest = synthdata.write_scene(synthdata.generate(spec), spec, args.out_dir)
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_drop_sim(args) -> int:
    if not 0.0 <= args.p <= 1.0:
        raise _UsageError(f"--p must lie in [0, 1], got {args.p}")
    if args.steps < 1:
        raise _UsageError(f"--steps must be >= 1, got {args.steps}")
    print(scheduler.format_summary(scheduler.simulate(args.p, args.steps, args.seed)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rgbd-panoptic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("infer", help="run panoptic post-processing on decoder outputs")
    p.add_argument("--sem", required=True)
    p.add_argument("--cen", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PQ report and mIoU of a predicted mask")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--config")
    p.add_argument("--num-classes", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("losses", help="evaluate all training losses")
    for flag in ("--sem", "--labels", "--cen", "--cen-gt", "--emb", "--instances"):
        p.add_argument(flag, required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--spec", required=True, help="JSON scene spec")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("drop-sim", help="simulate the adaptive modality-drop scheduler")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_drop_sim)
    return parser


def cli_main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (formats.FormatError, ConfigError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
