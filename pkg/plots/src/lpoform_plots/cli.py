"""Render campaign figures:

    lpoform-plot <bounds|ranges|controls|reltraj|all> --in <dir> --out <path>

With `all`, --out names a directory that receives one PNG per figure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import SchemaError
from .figures import FIGURES, plot_reltraj


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lpoform-plot", description=__doc__)
    parser.add_argument("figure", choices=sorted(FIGURES) + ["all"])
    parser.add_argument("--in", dest="campaign", required=True,
                        help="campaign output directory")
    parser.add_argument("--out", required=True,
                        help="output image path (directory for 'all')")
    parser.add_argument("--sample", type=int, default=0,
                        help="sample id for the relative-trajectory figure")
    args = parser.parse_args(argv)

    try:
        if args.figure == "all":
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            for name, fn in sorted(FIGURES.items()):
                target = out_dir / f"{name}.png"
                if fn is plot_reltraj:
                    fn(args.campaign, target, sample=args.sample)
                else:
                    fn(args.campaign, target)
                print(f"wrote {target}")
        else:
            fn = FIGURES[args.figure]
            if fn is plot_reltraj:
                out = fn(args.campaign, args.out, sample=args.sample)
            else:
                out = fn(args.campaign, args.out)
            print(f"wrote {out}")
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    except LookupError as exc:
        print(f"lookup error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
