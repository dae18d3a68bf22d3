"""Command-line front end: ``tightnet train`` and ``tightnet infer``.

Exit codes: 0 success, 1 runtime failure (bad data, bad checkpoint,
mismatched channels), 2 usage errors.
"""

import argparse
import sys

from .cgi import CGIError
from .data import DatasetError
from .infer import InferenceError, infer
from .train import TrainConfig, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tightnet",
        description="learned tightness predictor over CGI1 geometry images")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fit a generator on a pair directory")
    tr.add_argument("--data", required=True,
                    help="directory of *_input.cgi / *_target.cgi pairs")
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--steps", type=int, default=TrainConfig.steps)
    tr.add_argument("--adv-weight", type=float, default=TrainConfig.adv_weight)
    tr.add_argument("--l1-weight", type=float, default=TrainConfig.l1_weight)
    tr.add_argument("--batch", type=int, default=TrainConfig.batch)
    tr.add_argument("--lr", type=float, default=TrainConfig.lr)
    tr.add_argument("--base", type=int, default=TrainConfig.base)
    tr.add_argument("--depth", type=int, default=TrainConfig.depth)
    tr.add_argument("--tightness-scale", type=float,
                    default=TrainConfig.tightness_scale)
    tr.add_argument("--seed", type=int, default=TrainConfig.seed)
    tr.add_argument("--device", default=TrainConfig.device)
    tr.add_argument("--log-every", type=int, default=TrainConfig.log_every)

    inf = sub.add_parser("infer", help="predict tightness for one image")
    inf.add_argument("--in", dest="input", required=True,
                     help="clothed geometry image (CGI1)")
    inf.add_argument("--ckpt", required=True, help="trained checkpoint")
    inf.add_argument("--out", required=True, help="prediction image path")
    inf.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = TrainConfig(steps=args.steps, batch=args.batch, lr=args.lr,
                              l1_weight=args.l1_weight,
                              adv_weight=args.adv_weight, base=args.base,
                              depth=args.depth,
                              tightness_scale=args.tightness_scale,
                              seed=args.seed, device=args.device,
                              log_every=args.log_every)
            summary = train(args.data, args.out, cfg)
            print(f"train: {summary['n_pairs']} pairs, "
                  f"{summary['steps']} steps, "
                  f"l1 {summary['initial_l1']:.5f} -> "
                  f"{summary['final_l1']:.5f}, "
                  f"checkpoint {summary['checkpoint']}")
        else:
            summary = infer(args.input, args.ckpt, args.out,
                            device=args.device)
            print(f"infer: {summary['input']} -> {summary['output']} "
                  f"({summary['resolution'][0]}x{summary['resolution'][1]}, "
                  f"{len(summary['channels'])} channels)")
    except (CGIError, DatasetError, InferenceError, ValueError,
            OSError) as exc:
        print(f"tightnet: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
