"""Command-line front end.

Exit codes: 0 success, 2 bad input or unsupported request, 3 degenerate
statistic (the result record is still written, with p = 1).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .clustering import fit_score, topo_kmeans
from .errors import HKPDError
from .inference import GroupedSample, permanova_baseline, tanova, two_sample_test
from .io import (AnalysisManifest, dumps, load_diagram, load_embedding, read_group_file, read_matrix_csv,
                 read_points_csv, write_json)
from .persistence import build_graph_filtration, build_rips, compute_diagram
from .simulate import StudyConfig, run_study, run_timing_study
from .spectral import DEFAULT_MARGIN, DEFAULT_M, DEFAULT_SIGMA, embed, fit_domain_map, make_basis

log = logging.getLogger("hkpd")

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3


def _emit(payload: dict, out: str | None) -> None:
    if out:
        write_json(payload, out)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(dumps(payload))


def _stamp(payload: dict, manifest: AnalysisManifest) -> dict:
    payload["manifest"] = manifest.to_dict()
    payload["manifest_sha256"] = manifest.sha256
    return payload


def cmd_pd(args) -> int:
    if args.kind == "points":
        pts = read_points_csv(args.input)
        max_dim = 2 if args.dim == 1 and not args.skeleton else 1
        f = build_rips(pts, max_eps=args.max_eps, max_dim=max_dim)
    else:
        w = read_matrix_csv(args.input)
        f = build_graph_filtration(w, max_dim=1 if args.skeleton else 2)
    d = compute_diagram(f, args.dim)
    manifest = AnalysisManifest.for_inputs("pd", [args.input],
                                           params={"kind": args.kind, "dim": args.dim, "max_eps": args.max_eps})
    _emit(_stamp(d.to_dict(), manifest), args.out)
    return EXIT_OK


def cmd_embed(args) -> int:
    diagrams = [load_diagram(p) for p in args.diagrams]
    dmap = fit_domain_map(diagrams, args.margin)
    basis = make_basis(args.M)
    manifest = AnalysisManifest.for_inputs("embed", args.diagrams, M=args.M, domain_map=dmap.to_dict(),
                                           params={"margin": args.margin})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(manifest.to_dict(), out_dir / "manifest.json")
    for path, d in zip(args.diagrams, diagrams):
        e = embed(d, basis, dmap)
        target = out_dir / (Path(path).stem + ".embedding.json")
        write_json(_stamp_hash(e.to_dict(), manifest), target)
        log.info("wrote %s", target)
    return EXIT_OK


def _stamp_hash(payload: dict, manifest: AnalysisManifest) -> dict:
    payload["manifest_sha256"] = manifest.sha256
    return payload


def _load_sample(group_file) -> tuple[GroupedSample, list[Path]]:
    entries = read_group_file(group_file)
    embeddings = [load_embedding(p) for p, _ in entries]
    return GroupedSample(embeddings, np.array([lab for _, lab in entries])), [p for p, _ in entries]


def cmd_test(args) -> int:
    sample, paths = _load_sample(args.groups)
    if args.mode == "two-sample":
        res = two_sample_test(sample, sigma=args.sigma, n_steps=args.steps, seed=args.seed)
    elif args.mode == "tanova":
        res = tanova(sample, sigma=args.sigma, n_steps=args.steps, seed=args.seed)
    else:
        res = permanova_baseline(sample, n_perms=args.steps, seed=args.seed, sigma=args.sigma)
    manifest = AnalysisManifest.for_inputs(
        "test", [args.groups, *paths], M=sample.basis.M, sigma=args.sigma,
        domain_map=sample.embeddings[0].map.to_dict(), seeds={"chain": res.seed},
        params={"mode": args.mode, "steps": args.steps})
    payload = res.to_dict()
    payload["groups"] = [str(g) for g in sample.group_names]
    _emit(_stamp(payload, manifest), args.out)
    if res.degenerate:
        log.warning("degenerate statistic (0/0); reported p = 1")
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_cluster(args) -> int:
    if args.groups:
        sample, paths = _load_sample(args.groups)
        embeddings = sample.embeddings
    else:
        paths = [Path(p) for p in args.embeddings]
        if not paths:
            raise HKPDError("give embedding files or --groups")
        embeddings = [load_embedding(p) for p in paths]
    manifest_kw = dict(M=embeddings[0].basis.M, sigma=args.sigma, domain_map=embeddings[0].map.to_dict())
    inputs = ([args.groups] if args.groups else []) + list(paths)
    if args.k_range:
        lo, hi = args.k_range
        rows = fit_score(embeddings, range(lo, hi + 1), sigma=args.sigma, seed=args.seed, n_init=args.n_init)
        best = max((r for r in rows if np.isfinite(r["silhouette"])), key=lambda r: r["silhouette"], default=None)
        k = best["k"] if best else lo
        payload = {"scores": rows, "best_k": k}
    else:
        k = args.k
        payload = {}
    c = topo_kmeans(embeddings, k, sigma=args.sigma, n_init=args.n_init, seed=args.seed)
    payload.update(c.to_dict())
    payload["inputs"] = [str(p) for p in paths]
    manifest = AnalysisManifest.for_inputs("cluster", inputs, seeds={"kmeans": c.seed},
                                           params={"n_init": args.n_init}, **manifest_kw)
    _emit(_stamp(payload, manifest), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = StudyConfig.from_yaml(args.config)
    if args.study and args.study != cfg.study:
        raise HKPDError(f"--study {args.study} disagrees with config study {cfg.study!r}")

    def progress(done, total):
        log.info("%s: %d/%d", cfg.study, done, total)

    if cfg.study == "timing":
        report = run_timing_study(cfg, progress=progress)
    else:
        report = run_study(cfg, jobs=args.jobs, progress=progress)
        if args.csv:
            report.to_csv(args.csv)
    manifest = AnalysisManifest.for_inputs("simulate", [args.config], M=cfg.M, sigma=cfg.sigma,
                                           seeds={"root": cfg.seed}, params={"study": cfg.study})
    _emit(_stamp(report.to_dict(), manifest), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkpd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hkpd {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pd", help="persistence diagram of a point cloud or weighted graph")
    s.add_argument("input")
    s.add_argument("--kind", choices=["points", "graph"], default="points")
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--max-eps", type=float, default=None)
    s.add_argument("--skeleton", action="store_true", help="stop the filtration at edges (H0 only)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_pd)

    s = sub.add_parser("embed", help="heat-kernel embeddings on one shared domain map")
    s.add_argument("diagrams", nargs="+")
    s.add_argument("--M", type=int, default=DEFAULT_M)
    s.add_argument("--margin", type=float, default=DEFAULT_MARGIN)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("test", help="two-sample, T-ANOVA or PERMANOVA test")
    s.add_argument("--mode", choices=["two-sample", "tanova", "permanova"], required=True)
    s.add_argument("--groups", required=True, help="CSV of (embedding path, group label)")
    s.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("cluster", help="topological k-means")
    s.add_argument("embeddings", nargs="*")
    s.add_argument("--groups", help="group file; labels are ignored")
    k = s.add_mutually_exclusive_group(required=True)
    k.add_argument("--k", type=int)
    k.add_argument("--k-range", type=int, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    s.add_argument("--n-init", type=int, default=20)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("simulate", help="run a study from a YAML config")
    s.add_argument("--study", choices=["power", "sensitivity", "noise", "hole", "null", "timing"])
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--csv", help="per-run p-values")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="hkpd: %(message)s", stream=sys.stderr)
    if getattr(args, "steps", 0) is None:
        args.steps = 1_000_000 if args.mode == "tanova" else 100_000 if args.mode == "two-sample" else 10_000
    try:
        return args.func(args)
    except (HKPDError, ValueError, OSError, yaml.YAMLError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
