"""Command-line driver: ``featmap {embed,metrics,importance,render}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io, knn_graph, metrics, projection, report, svg, tangent
from .config import RunConfig
from .errors import (DataError, DegenerateFrameError, FeatmapError, GraphError,
                     OptimizationDiverged, ParameterError, UnsupportedDimension)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("featmap")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(p, need_output=True):
    d = RunConfig()
    p.add_argument("--input", required=True, help="input matrix (csv or f32bin)")
    p.add_argument("--output", required=need_output, help="output directory or file")
    p.add_argument("--format", choices=io.FORMATS, default=d.format)
    p.add_argument("--label-column", default=None, help="CSV column (name or index) holding labels")
    p.add_argument("--k", type=int, default=d.k, help="number of neighbours")
    p.add_argument("--d-max", type=int, default=d.d_max)
    p.add_argument("--tau", type=float, default=d.tau, help="variance share for intrinsic dimension")
    p.add_argument("--threads", type=int, default=d.threads)
    p.add_argument("--seed", type=int, default=d.seed)


def build_parser():
    d = RunConfig()
    parser = _Parser(prog="featmap", description="Feature-preserving embeddings with tangent frames.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="run the full embedding pipeline")
    _add_common(p)
    p.add_argument("--dim", type=int, default=d.d_prime, help="embedding dimension")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--q", type=float, default=d.q, help="frame-embedding share of epochs")
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="density weight")
    p.add_argument("--min-dist", type=float, default=d.min_dist)
    p.add_argument("--neg-samples", type=int, default=d.neg_samples)
    p.add_argument("--focus", type=int, default=None, help="point whose frame is drawn in plot.svg")
    p.add_argument("--figures", action="store_true", help="also write matplotlib PNG figures")

    p = sub.add_parser("metrics", help="quality metrics of an embedding as JSON")
    _add_common(p, need_output=False)
    p.add_argument("--embedding", required=True, help="embedding.csv or an embed output directory")

    p = sub.add_parser("importance", help="tangent frames and feature importance only")
    _add_common(p)

    p = sub.add_parser("render", help="SVG scatter plot from an embed output directory")
    p.add_argument("--input", required=True, help="directory written by 'featmap embed'")
    p.add_argument("--output", required=True, help="SVG file to write")
    p.add_argument("--focus", type=int, default=None)
    return parser


def _config(args):
    cfg = RunConfig(
        k=args.k, d_max=args.d_max, tau=args.tau, seed=args.seed, threads=args.threads,
        input=args.input, output=args.output, format=args.format, label_column=args.label_column,
    )
    for name in ("epochs", "q", "lam", "min_dist", "neg_samples"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if hasattr(args, "dim"):
        cfg.d_prime = args.dim
    cfg.threads = cfg.effective_threads()
    return cfg


def cmd_embed(args):
    cfg = _config(args)
    data = io.load_matrix(cfg.input, cfg.format, cfg.label_column)
    result = projection.embed(data, cfg)
    io.write_embedding(result, cfg.output)
    if result.embedding.shape[1] == 2:
        svg.render_result(result, os.path.join(cfg.output, "plot.svg"), focus=args.focus)
    if args.figures:
        report.write_figures(result, cfg.output)
    d = result.diagnostics
    print(json.dumps({"output": cfg.output, "radius_correlation": round(d["radius_correlation"], 6),
                      "frame_dim": d["frame_dim"], "seconds": round(d["seconds"], 3)}))


def cmd_metrics(args):
    cfg = _config(args)
    data = io.load_matrix(cfg.input, cfg.format, cfg.label_column)
    y, emb_labels = io.read_embedding(args.embedding)
    if len(y) != data.m:
        raise DataError(f"embedding has {len(y)} rows but the input has {data.m}")
    labels = data.labels if data.labels is not None else emb_labels
    report_ = metrics.evaluate(data.values, y, labels, cfg.k)
    print(json.dumps(report_.to_dict(), indent=1))


def cmd_importance(args):
    cfg = _config(args)
    cfg.validate()
    data = io.load_matrix(cfg.input, cfg.format, cfg.label_column)
    cfg.validate(data.m)
    nbrs, _, graph = knn_graph.similarity_graph(data.values, cfg.k)
    bundle = tangent.estimate_frames(data.values, graph, nbrs, min(cfg.d_max, cfg.k, data.n), cfg.tau)
    os.makedirs(cfg.output, exist_ok=True)
    io.write_importance(os.path.join(cfg.output, "importance.csv"), bundle.importance(), data.feature_names)
    with open(os.path.join(cfg.output, "intrinsic_dims.csv"), "w", encoding="utf-8") as fh:
        fh.write("dim\n" + "\n".join(str(int(v)) for v in bundle.dims) + "\n")
    print(json.dumps({"output": cfg.output, "frame_dim": bundle.global_dim,
                      "median_intrinsic_dim": float(np.median(bundle.dims))}))


def cmd_render(args):
    y, labels = io.read_embedding(args.input)
    frames = sv = imp = names = None
    fpath = os.path.join(args.input, "frames.json")
    ipath = os.path.join(args.input, "importance.csv")
    if os.path.exists(fpath):
        frames, sv = io.read_frames(fpath)
    if os.path.exists(ipath):
        imp, names = io.read_importance(ipath)
    if args.focus is not None and not 0 <= args.focus < len(y):
        raise ParameterError(f"focus index {args.focus} outside [0, {len(y)})")
    svg.render_scatter_svg(y, args.output, labels=labels, focus=args.focus, frames=frames,
                           singular_values=sv, importance=imp, feature_names=names)
    print(json.dumps({"output": args.output}))


COMMANDS = {"embed": cmd_embed, "metrics": cmd_metrics, "importance": cmd_importance, "render": cmd_render}


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ParameterError, UsageError) as exc:
        print(f"featmap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, UnsupportedDimension, GraphError, OSError) as exc:
        print(f"featmap: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateFrameError, OptimizationDiverged, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"featmap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FeatmapError as exc:
        print(f"featmap: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
