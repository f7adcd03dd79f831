"""hsvlm-prep: convert MAT-v5 datasets and embed class prompts.

Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

import argparse
import sys

from .convert import convert_mat
from .embed import DEFAULT_MODEL, PROMPT_KINDS, embed_prompts
from .errors import PrepError
from .recipes import RECIPES


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="hsvlm-prep")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("convert",
                       help="MAT-v5 cube + ground truth to .hsc/.hsl")
    p.add_argument("--dataset", required=True, choices=sorted(RECIPES))
    p.add_argument("--cube", required=True, help="MAT file with the data cube")
    p.add_argument("--gt", required=True, help="MAT file with the label map")
    p.add_argument("--out", required=True, help="output path prefix")

    p = sub.add_parser("embed",
                       help="render + embed class prompts into a .hsp file")
    p.add_argument("--classes", required=True,
                   help="text file, one class name per line, class 1 first")
    p.add_argument("--kind", default="descriptive", choices=PROMPT_KINDS)
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--out", required=True)
    return parser


def cmd_convert(args) -> int:
    manifest = convert_mat(args.cube, args.gt, RECIPES[args.dataset], args.out)
    print(f"{args.dataset}: wrote {args.out}.hsc / {args.out}.hsl, "
          f"{manifest['labeled_pixels']} labeled pixels, "
          f"max label {manifest['max_label']}")
    return 0


def cmd_embed(args) -> int:
    with open(args.classes) as f:
        names = [line.strip() for line in f if line.strip()]
    matrix = embed_prompts(names, args.kind, args.out, model_id=args.model)
    print(f"wrote {args.out}: {matrix.shape[0]} x {matrix.shape[1]} "
          f"({args.kind} prompts, {args.model})")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return {"convert": cmd_convert, "embed": cmd_embed}[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (PrepError, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
