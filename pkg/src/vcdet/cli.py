"""Command-line entry point: ``vcdet gen | descriptor | match | eval``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .alignment import TnConfig, read_matches, write_matches
from .config import manifest_argv, read_kv, write_manifest
from .evaluation import (ABLATION_STEPS, METRIC_NOTE, ablation_report, descriptor_muap,
                         format_report, matching_muap, read_ground_truth, report_csv,
                         write_ground_truth)
from .pca import save_pca
from .pipeline import run_matching
from .postproc import EPSILON_FLOOR, ConsistencyStats, ScoreNormConfig, TemporalConcatConfig
from .retrieval import (AGGREGATIONS, DescriptorTrackResult, PipelineConfig, SearchConfig,
                        pipeline_descriptor_track, read_candidates, write_candidates)
from .simgen import DISTRACTOR_MODES, SimConfig, generate
from .store import Role, read_corpus, write_corpus
from .views import read_edit_labels, write_edit_labels

log = logging.getLogger("vcdet")

GEN_FILES = ["queries.vdsc", "refs.vdsc", "noise.vdsc", "gt.csv", "labels.csv"]


class UsageError(Exception):
    pass


class _Help(argparse.ArgumentDefaultsHelpFormatter):
    # defaults of None are resolved later and documented in the help text
    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


def _threads(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def _weights(text):
    try:
        vals = json.loads(text) if text.strip().startswith("[") else [float(x) for x in text.split(",")]
        return tuple(float(x) for x in vals)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weight list {text!r}") from None


def _add_gen(sub):
    p = sub.add_parser("gen", help="generate a synthetic corpus with planted copies",
                       formatter_class=_Help)
    d = SimConfig()
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--refs", type=int, default=d.n_refs, help="reference videos")
    p.add_argument("--queries", type=int, default=d.n_queries, help="query videos")
    p.add_argument("--noise-videos", type=int, default=d.n_noise, help="noise-corpus videos")
    p.add_argument("--dim", type=int, default=d.d, help="descriptor dimension")
    p.add_argument("--frames-min", type=int, default=d.frames_min, help="shortest video, frames")
    p.add_argument("--frames-max", type=int, default=d.frames_max, help="longest video, frames")
    p.add_argument("--fps", type=float, default=d.fps, help="sampled frames per second")
    p.add_argument("--copy-fraction", type=float, default=d.copy_fraction,
                   help="fraction of queries carrying a copied segment")
    p.add_argument("--noise-sigma", type=float, default=d.noise_sigma,
                   help="perturbation norm of copied descriptors")
    p.add_argument("--distractor-mode", choices=DISTRACTOR_MODES, default=d.distractor_mode,
                   help="content of unedited queries")
    p.add_argument("--stack-fraction", type=float, default=d.stack_fraction,
                   help="fraction of edited queries simulating stacked layouts")
    p.add_argument("--cut-fraction", type=float, default=d.cut_fraction,
                   help="fraction of unedited queries with a scene cut")
    p.add_argument("--generic-prob", type=float, default=d.generic_prob,
                   help="per-frame chance of a shared stock frame")
    p.set_defaults(func=cmd_gen)


def _add_descriptor(sub):
    p = sub.add_parser("descriptor", help="descriptor track: post-process and search",
                       formatter_class=_Help)
    p.add_argument("--queries", required=True, help="query VDSC (view stacks)")
    p.add_argument("--refs", required=True, help="reference VDSC")
    p.add_argument("--noise", help="noise VDSC (needed by --score-norm)")
    p.add_argument("--labels", help="edit-labels CSV used to route crop schemes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key=value file for tc.* and sn.* settings")
    for flag, text in [("multi-view", "use all crop views of edited queries"),
                       ("consistency-weight", "divide query descriptors by their mean Gram entry"),
                       ("temporal-concat", "weighted sliding-window concat + PCA"),
                       ("score-norm", "subtract the per-query noise baseline")]:
        p.add_argument(f"--{flag}", action=argparse.BooleanOptionalAction, default=False, help=text)
    p.add_argument("--weight-refs", action=argparse.BooleanOptionalAction, default=False,
                   help="also apply consistency weighting to references")
    p.add_argument("--cw-before-tc", action=argparse.BooleanOptionalAction, default=False,
                   help="weight before temporal concat instead of after")
    p.add_argument("--cw-floor", type=float, default=EPSILON_FLOOR,
                   help="lower clamp of the consistency divisor")
    p.add_argument("--tc-window", type=int, default=None, help="window length (default 3)")
    p.add_argument("--tc-weights", type=_weights, default=None,
                   help="comma-separated window weights (default 0.5,1,0.5)")
    p.add_argument("--tc-dim", type=int, default=None, help="PCA output dim (default: input d)")
    p.add_argument("--rank-k", type=int, default=None, help="noise neighbour rank (default 10)")
    p.add_argument("--beta", type=float, default=None, help="score-norm strength (default 1.0)")
    p.add_argument("--top-k", type=int, default=1200, help="candidates kept per query")
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="max_pair",
                   help="frame-pair to video-pair score reduction")
    p.add_argument("--agg-k", type=int, default=5, help="pairs summed by sum_topk_pairs")
    p.set_defaults(func=cmd_descriptor)


def _add_tn_flags(p):
    d = TnConfig()
    p.add_argument("--sim-threshold", type=float, default=d.sim_threshold,
                   help="minimum similarity for a node")
    p.add_argument("--max-step", type=int, default=d.max_step,
                   help="largest frame gap of an edge, per axis")
    p.add_argument("--min-nodes", type=int, default=d.min_nodes,
                   help="shortest reported path")
    p.add_argument("--max-segments", type=int, default=d.max_segments,
                   help="segments extracted per pair")
    p.add_argument("--min-path-score", type=float, default=d.min_path_score,
                   help="lightest reported path weight")
    p.add_argument("--score-mode", choices=("sum", "mean"), default=d.score_mode,
                   help="segment score: path weight or mean node weight")


def _add_match(sub):
    p = sub.add_parser("match", help="matching track: Temporal Network on candidate pairs",
                       formatter_class=_Help)
    p.add_argument("--candidates", required=True, help="candidate CSV from 'descriptor'")
    p.add_argument("--queries", required=True, help="processed query VDSC")
    p.add_argument("--refs", required=True, help="processed reference VDSC")
    p.add_argument("--weights", help="weights.csv from 'descriptor' (consistency divisors)")
    p.add_argument("--out", required=True, help="output directory")
    _add_tn_flags(p)
    p.add_argument("--collapse-views", action=argparse.BooleanOptionalAction, default=True,
                   help="max-pool stacked view rows before alignment")
    p.add_argument("--rescore", action=argparse.BooleanOptionalAction, default=True,
                   help="threshold on un-weighted similarity, then scale segment scores")
    p.set_defaults(func=cmd_match)


def _add_eval(sub):
    p = sub.add_parser("eval", help="micro-AP for either track, or the 4-row ablation",
                       formatter_class=_Help)
    p.add_argument("--gt", help="ground-truth CSV (default: <data>/gt.csv with --ablation)")
    p.add_argument("--candidates", help="candidate CSV to score")
    p.add_argument("--matches", help="matches CSV to score")
    p.add_argument("--ablation", action="store_true",
                   help="run both tracks for the four cumulative configurations")
    p.add_argument("--data", help="directory written by 'gen' (for --ablation)")
    p.add_argument("--out", required=True, help="output directory")
    _add_tn_flags(p)
    p.set_defaults(func=cmd_eval)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vcdet", description="Video copy detection on frame descriptors.")
    parser.add_argument("--version", action="version", version=f"vcdet {__version__}")
    parser.add_argument("--threads", type=_threads, default=os.cpu_count() or 1,
                        help="worker threads (outputs do not depend on it)")
    parser.add_argument("--from-manifest", metavar="PATH",
                        help="replay the command recorded in a manifest")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", metavar="{gen,descriptor,match,eval}")
    _add_gen(sub)
    _add_descriptor(sub)
    _add_match(sub)
    _add_eval(sub)
    return parser


def _settings(args, skip=("func", "threads", "from_manifest", "verbose", "command", "out")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _inputs(args, names):
    return {n: getattr(args, n) for n in names if getattr(args, n, None)}


def _finish(args, argv, outputs, settings=None, inputs=()):
    write_manifest(args.out, args.command, argv, settings or _settings(args),
                   _inputs(args, inputs), outputs, __version__)


def _checked(build, *args):
    # invalid flag combinations surface as usage errors, not runtime failures
    try:
        return build(*args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_gen(args, argv):
    cfg = _checked(lambda: SimConfig(seed=args.seed, n_refs=args.refs, n_queries=args.queries,
                    n_noise=args.noise_videos, d=args.dim, frames_min=args.frames_min,
                    frames_max=args.frames_max, fps=args.fps, copy_fraction=args.copy_fraction,
                    noise_sigma=args.noise_sigma, distractor_mode=args.distractor_mode,
                    stack_fraction=args.stack_fraction, cut_fraction=args.cut_fraction,
                    generic_prob=args.generic_prob))
    data = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(data.query_stacks(), out / "queries.vdsc")
    write_corpus(data.refs, out / "refs.vdsc")
    write_corpus(data.noise, out / "noise.vdsc")
    write_ground_truth(data.gt, out / "gt.csv")
    write_edit_labels([data.labels[q] for q in data.queries.ids], out / "labels.csv")
    _finish(args, argv, GEN_FILES, settings=cfg.as_dict())
    log.info("wrote %d queries, %d references, %d noise videos, %d planted copies to %s",
             len(data.queries), len(data.refs), len(data.noise), len(data.gt), out)


def _tc_sn(args):
    kv = read_kv(args.config) if args.config else {}
    unknown = set(kv) - {"tc.window", "tc.weights", "tc.output_dim", "sn.rank_k", "sn.beta"}
    if unknown:
        raise UsageError(f"{args.config}: unknown keys {sorted(unknown)}")
    tcd, snd = TemporalConcatConfig(), ScoreNormConfig()

    def pick(flag, key, conv, default):
        if flag is not None:
            return flag
        if key in kv:
            return conv(kv[key])
        return default

    window = pick(args.tc_window, "tc.window", int, tcd.window)
    weights = pick(args.tc_weights, "tc.weights", _weights, None)
    if weights is None:
        weights = tcd.weights if window == tcd.window else tuple([1.0] * window)
    tc = TemporalConcatConfig(
        window=window, weights=weights,
        output_dim=pick(args.tc_dim, "tc.output_dim", int, tcd.output_dim))
    sn = ScoreNormConfig(rank_k=pick(args.rank_k, "sn.rank_k", int, snd.rank_k),
                         beta=pick(args.beta, "sn.beta", float, snd.beta))
    return tc, sn


def descriptor_config(args) -> PipelineConfig:
    tc, sn = _tc_sn(args)
    return PipelineConfig(
        multi_view=args.multi_view, consistency_weight=args.consistency_weight,
        temporal_concat=args.temporal_concat, score_norm=args.score_norm,
        weight_refs=args.weight_refs, cw_before_tc=args.cw_before_tc, cw_floor=args.cw_floor,
        tc=tc, sn=sn,
        search=SearchConfig(top_k=args.top_k, aggregation=args.aggregation, agg_k=args.agg_k))


def _flat_config(cfg: PipelineConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if hasattr(v, "__dataclass_fields__"):
            for g in fields(v):
                out[f"{f.name}.{g.name}"] = getattr(v, g.name)
        else:
            out[f.name] = v
    return out


def write_weights(res: DescriptorTrackResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "gram_mean", "divisor", "clamped"])
        for qid, st in res.gram.items():
            w.writerow([qid, repr(st.gram_mean), repr(st.divisor), int(st.clamped)])


def read_weights(path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["query_id"]: float(row["divisor"]) for row in csv.DictReader(fh)}


def cmd_descriptor(args, argv):
    cfg = _checked(descriptor_config, args)
    if cfg.score_norm and not args.noise:
        raise UsageError("--score-norm needs --noise")
    queries = read_corpus(args.queries, Role.QUERY)
    refs = read_corpus(args.refs, Role.REFERENCE)
    noise = read_corpus(args.noise, Role.NOISE) if args.noise else None
    labels = read_edit_labels(args.labels) if args.labels else None
    res = pipeline_descriptor_track(queries, refs, noise, cfg, labels=labels, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(res.queries, out / "queries.vdsc")
    write_corpus(res.refs, out / "refs.vdsc")
    write_candidates(res.candidates, out / "candidates.csv")
    write_weights(res, out / "weights.csv")
    outputs = ["queries.vdsc", "refs.vdsc", "candidates.csv", "weights.csv"]
    if res.pca is not None:
        save_pca(res.pca, out / "pca.vpca")
        outputs.append("pca.vpca")
    _finish(args, argv, outputs, settings=_flat_config(cfg),
            inputs=("queries", "refs", "noise", "labels", "config"))


def tn_config(args) -> TnConfig:
    return TnConfig(sim_threshold=args.sim_threshold, max_step=args.max_step,
                    min_nodes=args.min_nodes, max_segments=args.max_segments,
                    min_path_score=args.min_path_score, score_mode=args.score_mode)


def cmd_match(args, argv):
    tn = _checked(tn_config, args)
    cands = read_candidates(args.candidates)
    queries = read_corpus(args.queries, Role.QUERY)
    refs = read_corpus(args.refs, Role.REFERENCE)
    gram = {}
    if args.weights:
        gram = {q: ConsistencyStats(d, d, False) for q, d in read_weights(args.weights).items()}
    res = DescriptorTrackResult({"": cands}, queries, refs, gram=gram)
    matches = run_matching(res, tn, threads=args.threads, rescore=args.rescore,
                           collapse=args.collapse_views)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matches(matches, out / "matches.csv")
    _finish(args, argv, ["matches.csv"],
            inputs=("candidates", "queries", "refs", "weights"))


def cmd_eval(args, argv):
    out = Path(args.out)
    tn = _checked(tn_config, args)
    if args.ablation:
        if not args.data:
            raise UsageError("--ablation needs --data (a directory written by 'gen')")
        data = Path(args.data)
        gt = read_ground_truth(args.gt or data / "gt.csv")
        queries = read_corpus(data / "queries.vdsc", Role.QUERY)
        refs = read_corpus(data / "refs.vdsc", Role.REFERENCE)
        noise = read_corpus(data / "noise.vdsc", Role.NOISE)
        labels = read_edit_labels(data / "labels.csv")
        configs = [PipelineConfig(score_norm=True, **step) for step in ABLATION_STEPS]
        rows = ablation_report(configs, queries, refs, noise, gt, labels=labels,
                               tn_cfg=tn, threads=args.threads)
        text, table = format_report(rows), report_csv(rows)
    else:
        if not args.gt:
            raise UsageError("eval needs --gt")
        if not (args.candidates or args.matches):
            raise UsageError("eval needs --candidates and/or --matches")
        gt = read_ground_truth(args.gt)
        metrics = {}
        if args.candidates:
            metrics["muap_descriptor"] = descriptor_muap(read_candidates(args.candidates), gt)
        if args.matches:
            metrics["muap_matching"] = matching_muap(read_matches(args.matches), gt)
        text = f"# {METRIC_NOTE}\n" + "".join(f"{k}={v:.6f}\n" for k, v in metrics.items())
        table = "metric,value\n" + "".join(f"{k},{v!r}\n" for k, v in metrics.items())
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(table, encoding="utf-8")
    sys.stdout.write(text)
    _finish(args, argv, ["report.txt", "report.csv"],
            inputs=("gt", "candidates", "matches", "data"))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.from_manifest:
        if args.command:
            parser.error("--from-manifest cannot be combined with a subcommand")
        try:
            recorded = manifest_argv(args.from_manifest)
        except (OSError, ValueError) as exc:
            print(f"vcdet: {exc}", file=sys.stderr)
            return 1
        threads = args.threads
        args = parser.parse_args(recorded)
        args.threads = threads
        argv = recorded
    if not args.command:
        parser.print_usage(sys.stderr)
        print("vcdet: error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        # record only the subcommand part: top-level options never affect outputs
        args.func(args, argv[argv.index(args.command):])
    except UsageError as exc:
        print(f"vcdet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"vcdet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
