"""Command-line entry point: render figures from a training run directory.

    hetda-plots convergence RUN_DIR OUT.png
    hetda-plots embedding  RUN_DIR OUT.png

Exit codes: 0 success, 1 usage error, 2 bad or missing input.
"""

import argparse
import sys

from .render import RenderError, plot_convergence, plot_embedding


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: usage-error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="hetda-plots", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn, blurb in (
        ("convergence", plot_convergence, "loss traces over iterations"),
        ("embedding", plot_embedding, "2-D embedding scatter"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("run_dir", help="training run directory")
        p.add_argument("out_image", help="output PNG path")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.fn(args.run_dir, args.out_image)
    except (RenderError, OSError) as err:
        print(f"hetda-plots: data-error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {args.out_image}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
