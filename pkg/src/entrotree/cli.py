"""Command-line entry point: ``entrotree <se|optimize|artifacts|forward|synth|oracle>``.

Exit codes: 0 success, 2 input or validation failure, 3 constraint failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .arrays import ArrayFormatError, read_series, write_array3, write_mask_csv, write_matrix_csv, write_series
from .graph import GraphError, load_graph, save_edge_list
from .hierarchy import HeadCountError, build_mask_set, hier_score
from .kernels import KernelError, SeriesWindow
from .synth import DEFAULT_START, community_labels, synth_graph, synth_series
from .transformer import (ForwardError, InvariantViolation, ModelConfig, forward_detailed,
                          init_weights, load_weights)
from .tree import (EncodingTree, TreeError, exhaustive_min_2level, flat_tree, level_partition,
                   minimize, minimize_traced, structural_entropy, validate)

EXIT_INPUT = 2
EXIT_CONSTRAINT = 3


class ConfigError(ValueError):
    pass


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Fill unset flags from --config; explicit flags win, unknown keys fail."""
    if not getattr(args, "config", None):
        return args
    conf = read_config(args.config)
    actions = {a.dest: a for a in parser._actions
               if a.dest not in ("help", "config", "command", "_parser")}
    unknown = sorted(set(conf) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, raw in conf.items():
        if getattr(args, key) is not None and getattr(args, key) is not False:
            continue
        act = actions[key]
        if act.nargs == 0:
            value = raw.lower() in ("1", "true", "yes", "on")
        else:
            value = act.type(raw) if act.type else raw
        setattr(args, key, value)
    return args


def _pick(value, default):
    return default if value is None else value


def _load_graph(args):
    return load_graph(args.graph, _pick(args.graph_format, "edge-list-csv"),
                      directed=bool(getattr(args, "directed", False)))


def _load_tree(path, g):
    tree = EncodingTree.from_json(Path(path).read_text(encoding="utf-8"), g)
    report = validate(tree, g)
    if not report.ok:
        raise TreeError(f"tree fails validation: {report}")
    return tree


def cmd_se(args):
    g = _load_graph(args)
    tree = _load_tree(args.tree, g) if args.tree else flat_tree(g)
    print(f"{structural_entropy(g, tree):.9f}")
    return 0


def cmd_optimize(args):
    g = _load_graph(args)
    tree, steps = minimize_traced(g, max_height=args.max_height)
    Path(args.out).write_text(tree.to_json() + "\n", encoding="utf-8")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "operator", "a", "b", "entropy"])
            for s in steps:
                w.writerow([s.iteration, s.operator, s.a, s.b, f"{s.entropy:.9f}"])
    print(f"iterations={len(steps)}")
    print(f"height={tree.height}")
    print(f"entropy={structural_entropy(g, tree):.9f}")
    return 0


def cmd_artifacts(args):
    g = _load_graph(args)
    tree = _load_tree(args.tree, g)
    masks = build_mask_set(tree, g, args.heads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, m in enumerate(masks.masks):
        name = f"mask_{i:02d}_{m.source}.csv"
        write_mask_csv(out / name, m.allow)
        files.append(name)
    write_matrix_csv(out / "hier_score.csv", hier_score(g, tree))
    manifest = masks.manifest()
    manifest["mask_files"] = files
    manifest["score_file"] = "hier_score.csv"
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    print(f"L={masks.n_masks}")
    for f in files:
        print(f"wrote {f}")
    return 0


def _model_config(args) -> ModelConfig:
    cfg = ModelConfig()
    for key in ("layers", "d", "heads", "horizon", "out_channels", "stride", "hops", "pe_k",
                "seed"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.kernel_sizes:
        cfg.kernel_sizes = tuple(int(k) for k in str(args.kernel_sizes).split(","))
    return cfg


def cmd_forward(args):
    cfg = _model_config(args)
    try:
        g = _load_graph(args)
        data, meta = read_series(args.series)
        window = SeriesWindow(data, float(meta.get("interval", 5)),
                              int(meta.get("start_timestamp", DEFAULT_START)))
    except (GraphError, ArrayFormatError, KernelError, OSError) as exc:
        raise ForwardError("input", str(exc)) from exc
    if args.tree:
        tree = _load_tree(args.tree, g)
    else:
        tree = minimize(g, max_height=_pick(args.max_height, 3))
    T, N, C = window.shape
    if args.weights:
        weights = load_weights(args.weights)
    else:
        try:
            weights = init_weights(cfg, C, T)
        except ValueError as exc:
            raise ForwardError("weights", str(exc)) from exc
    result = forward_detailed(cfg, weights, window, g, tree, check=args.check,
                              record=bool(args.dump_attention))
    write_array3(args.out, result.prediction)
    if args.dump_attention:
        dump = Path(args.dump_attention)
        dump.mkdir(parents=True, exist_ok=True)
        for (layer, kind, head), w in sorted(result.recorder.maps.items()):
            if kind != "spatial":
                continue
            # averaged over time steps
            write_matrix_csv(dump / f"attn_layer{layer}_head{head}.csv", w.mean(axis=0))
    print(f"input_length={T}")
    print(f"hidden_length={result.hidden_length}")
    print(f"masks={result.n_masks}")
    print("output_shape=" + "x".join(str(s) for s in result.prediction.shape))
    return 0


def cmd_synth(args):
    kind = args.kind
    seed = _pick(args.seed, 0)
    params = {"n": _pick(args.n, 30), "c": _pick(args.c, 3), "p_in": _pick(args.p_in, 0.4),
              "p_out": _pick(args.p_out, 0.03), "rows": _pick(args.rows, 3),
              "cols": _pick(args.cols, 3)}
    if kind == "random-community" and params["c"] < 1:
        raise GraphError("c must be >= 1")
    g = synth_graph(kind, params, seed=seed)
    if kind == "random-community":
        labels = community_labels(g.n, params["c"])
    else:
        labels = np.zeros(g.n, dtype=int)
    interval = 5
    T = _pick(args.T, 288)
    x = synth_series(labels, T=T, channels=_pick(args.channels, 3), seed=seed, interval=interval)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_edge_list(g, out / "graph.csv")
    write_series(out / "series.bin", x, interval, DEFAULT_START)
    print(f"n={g.n}")
    print(f"edges={g.n_edges}")
    print("series_shape=" + "x".join(str(s) for s in x.shape))
    return 0


def cmd_oracle(args):
    g = _load_graph(args)
    _, h_star = exhaustive_min_2level(g)
    greedy = minimize(g, max_height=2)
    h_greedy = structural_entropy(g, greedy)
    match = abs(h_greedy - h_star) <= 1e-9
    print(f"greedy={h_greedy:.9f}")
    print(f"oracle={h_star:.9f}")
    if greedy.height >= 2:
        print("greedy_partition=" + " | ".join(
            " ".join(map(str, b)) for b in level_partition(greedy, 1)))
    print(f"match={'yes' if match else 'no'}")
    return 0


def _graph_flags(p, tree=False):
    p.add_argument("graph")
    p.add_argument("--graph-format", choices=["edge-list-csv", "adjacency-csv"], default=None)
    p.add_argument("--directed", action="store_true", default=None)
    if tree:
        p.add_argument("--tree")


def build_parser():
    parser = argparse.ArgumentParser(prog="entrotree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.set_defaults(_parser=p)
        return p

    p = add("se", "structural entropy of a graph under a tree (flat if omitted)")
    _graph_flags(p, tree=True)
    p.set_defaults(func=cmd_se)

    p = add("optimize", "greedy structural-entropy minimization")
    _graph_flags(p)
    p.add_argument("--out", required=False)
    p.add_argument("--max-height", type=int)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_optimize)

    p = add("artifacts", "emit masks, hierarchical scores and head manifest")
    _graph_flags(p)
    p.add_argument("tree")
    p.add_argument("--heads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_artifacts)

    p = add("forward", "seeded forward pass over a series window")
    p.add_argument("--graph")
    p.add_argument("--graph-format", choices=["edge-list-csv", "adjacency-csv"])
    p.add_argument("--directed", action="store_true", default=None)
    p.add_argument("--series")
    p.add_argument("--tree")
    p.add_argument("--weights")
    p.add_argument("--out")
    p.add_argument("--dump-attention")
    p.add_argument("--assert", dest="check", action="store_true", default=None)
    p.add_argument("--max-height", type=int)
    for name in ("layers", "d", "heads", "horizon", "out-channels", "stride", "hops", "pe-k"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--kernel-sizes")
    p.set_defaults(func=cmd_forward)

    p = add("synth", "synthetic graph + series fixtures")
    p.add_argument("kind", choices=["cycle", "barbell-triangles", "grid", "random-community"])
    p.add_argument("--n", type=int)
    p.add_argument("--c", type=int)
    p.add_argument("--p-in", type=float)
    p.add_argument("--p-out", type=float)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = add("oracle", "compare greedy (height 2) with exhaustive 2-level search")
    _graph_flags(p)
    p.set_defaults(func=cmd_oracle)
    return parser


_REQUIRED = {
    "optimize": ("out",), "artifacts": ("heads", "out"),
    "forward": ("graph", "series", "out"), "synth": ("out",),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = resolve(args, args._parser)
        missing = [k for k in _REQUIRED.get(args.command, ()) if getattr(args, k) is None]
        if missing:
            raise ConfigError("missing required option(s): "
                              + ", ".join("--" + m.replace("_", "-") for m in missing))
        return args.func(args)
    except HeadCountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"L={exc.n_masks}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except ForwardError as exc:
        cause = exc.__cause__
        if isinstance(cause, HeadCountError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONSTRAINT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"error: [invariant] {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GraphError, TreeError, ConfigError, ArrayFormatError, KernelError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
