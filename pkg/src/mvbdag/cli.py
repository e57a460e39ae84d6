"""Command-line harness: simulate, learn, enumerate, evaluate and bench.

Every output CSV starts with a ``# mvbdag-<kind> v1`` comment line. The
default output directory can be set with ``MVBDAG_OUT``; ``--out`` wins.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datagen import FAMILIES, GraphSpec, generate, write_ground_truth
from .exact import enumerate_equivalence_class, minimal_equivalence_class, write_equivalence_class
from .graph import Dag, cpdag, read_edge_list, shd_cpdag, write_adjacency_csv, write_edge_list
from .learner import SolverConfig, binotears, read_config, solve, write_trace
from .mvb import (
    INTERACTION_KINDS,
    BinaryDataset,
    InteractionMap,
    MVBError,
    empirical_general_params,
    read_dataset,
    read_general_params,
    write_dataset,
)

log = logging.getLogger("mvbdag")

METHODS = ("binotears", "solve-full", "solve-first-order", "enumerate")
OUT_ENV = "MVBDAG_OUT"

DETAIL_FIELDS = ("family", "p", "k", "rep", "method", "seed", "shd", "est_edges", "true_edges",
                 "seconds", "status", "message")
SUMMARY_FIELDS = ("family", "p", "k", "method", "reps", "failed", "mean_shd", "se_shd")


@dataclass(frozen=True)
class ExperimentSpec:
    families: tuple = ("ER",)
    ps: tuple = (5,)
    ks: tuple = (1,)
    n: int = 10_000
    tau: str = "first+second"
    methods: tuple = ("binotears",)
    reps: int = 10
    seed: int = 0
    out: Path = field(default=Path("mvbdag-out"))
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not (self.families and self.ps and self.ks and self.methods):
            raise ValueError("grids must be nonempty")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; expected {METHODS}")
        if self.tau not in INTERACTION_KINDS:
            raise ValueError(f"unknown interaction kind {self.tau!r}")

    def cells(self):
        for family in self.families:
            for k in self.ks:
                for p in self.ps:
                    yield family, p, k


def replication_seed(seed: int, family: str, p: int, k: int, rep: int) -> int:
    """Independent seed per (cell, replication); unaffected by the grid's other cells."""
    key = [int(seed), FAMILIES.index(family), int(p), int(k), int(rep)]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def cell_name(family: str, p: int, k: int) -> str:
    return f"{family}_p{p}_k{k}"


def _write_csv(path: Path, kind: str, header, rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# mvbdag-{kind} v1\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _atomic_dir(final: Path):
    """Temporary sibling directory; call the returned commit() to move it into place."""
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{final.name}-", dir=final.parent))

    def commit():
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)

    return tmp, commit


# ---------------------------------------------------------------------------
# learning


def learn(method: str, data: BinaryDataset, cfg: SolverConfig, gp=None):
    """Estimated DAG plus the solver result (None for the non-solver methods)."""
    if method == "binotears":
        return binotears(data, cfg), None
    if method in ("solve-full", "solve-first-order"):
        kind = "full" if method == "solve-full" else "first-only"
        res = solve(data, InteractionMap(kind, data.p), cfg)
        return res.dag, res
    if method == "enumerate":
        table = gp if gp is not None else empirical_general_params(data)
        models = minimal_equivalence_class(enumerate_equivalence_class(table))
        return models[0].graph, None
    raise ValueError(f"unknown method {method!r}")


def _run_replication(spec: ExperimentSpec, family: str, p: int, k: int, rep: int) -> list[list]:
    seed = replication_seed(spec.seed, family, p, k, rep)
    rows = []
    try:
        data, truth = generate(GraphSpec(p, k, family, seed), spec.n, spec.tau, seed=seed)
    except MVBError as exc:
        return [[family, p, k, rep, m, seed, "", "", "", 0.0, "failed", str(exc)] for m in spec.methods]
    target = cpdag(truth.graph)
    for method in spec.methods:
        t0 = time.perf_counter()
        try:
            est, _ = learn(method, data, spec.config, gp=truth.gp)
            shd = shd_cpdag(cpdag(est), target)
            rows.append([family, p, k, rep, method, seed, shd, est.n_edges, truth.graph.n_edges,
                         round(time.perf_counter() - t0, 3), "ok", ""])
        except (MVBError, ArithmeticError, ValueError) as exc:
            rows.append([family, p, k, rep, method, seed, "", "", truth.graph.n_edges,
                         round(time.perf_counter() - t0, 3), "failed", str(exc)])
    return rows


def summarize(detail: list[list]) -> list[list]:
    groups: dict[tuple, list] = {}
    for row in detail:
        rec = dict(zip(DETAIL_FIELDS, row))
        groups.setdefault((rec["family"], rec["p"], rec["k"], rec["method"]), []).append(rec)
    out = []
    for key in sorted(groups):
        recs = groups[key]
        shd = np.array([r["shd"] for r in recs if r["status"] == "ok"], dtype=float)
        failed = sum(r["status"] != "ok" for r in recs)
        mean = float(shd.mean()) if shd.size else math.nan
        se = float(shd.std(ddof=1) / math.sqrt(shd.size)) if shd.size > 1 else (0.0 if shd.size else math.nan)
        out.append([*key, len(recs), failed, mean, se])
    return out


def run_bench(spec: ExperimentSpec, jobs: int = 1) -> tuple[list[list], list[list]]:
    tasks = [(f, p, k, r) for f, p, k in spec.cells() for r in range(spec.reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_replication, *zip(*[(spec, *t) for t in tasks])))
    else:
        results = [_run_replication(spec, *t) for t in tasks]
    detail = [row for rows in results for row in rows]
    return detail, summarize(detail)


def write_bench(spec: ExperimentSpec, detail, summary) -> list[Path]:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "detail.csv", out / "summary.csv"]
    _write_csv(paths[0], "bench-detail", DETAIL_FIELDS, detail)
    _write_csv(paths[1], "bench-summary", SUMMARY_FIELDS, summary)
    # one plotting file per (family, k): p on x, SHD on y
    for family in spec.families:
        for k in spec.ks:
            rows = [[r[1], r[3], r[6], r[7], r[4], r[5]] for r in summary if r[0] == family and r[2] == k]
            path = out / f"shd_{family}_k{k}.csv"
            _write_csv(path, "bench-figure", ("p", "method", "mean_shd", "se_shd", "reps", "failed"), rows)
            paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# commands


def _config(args) -> SolverConfig:
    cfg = read_config(args.config) if getattr(args, "config", None) else SolverConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _spec(args) -> ExperimentSpec:
    return ExperimentSpec(
        families=tuple(args.family), ps=tuple(args.p), ks=tuple(args.k), n=args.n, tau=args.tau,
        methods=tuple(args.method), reps=args.reps, seed=args.seed, out=Path(args.out),
        config=_config(args),
    )


def cmd_simulate(args) -> int:
    spec = _spec(args)
    for family, p, k in spec.cells():
        for rep in range(spec.reps):
            seed = replication_seed(spec.seed, family, p, k, rep)
            data, truth = generate(GraphSpec(p, k, family, seed), spec.n, spec.tau, seed=seed)
            tmp, commit = _atomic_dir(spec.out / cell_name(family, p, k) / f"rep{rep:03d}")
            write_dataset(data, tmp / "data.csv")
            write_ground_truth(truth, tmp)
            commit()
    print(spec.out)
    return 0


def cmd_learn(args) -> int:
    method = args.method[0]
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = read_dataset(args.data)
    gp = read_general_params(args.gp) if args.gp else None
    est, res = learn(method, data, cfg, gp=gp)
    write_edge_list(est, out / "estimate.edges")
    if res is not None:
        write_adjacency_csv(res.adjacency, out / "adjacency.csv")
        write_trace(res.trace, out / "trace.csv")
    print(out / "estimate.edges")
    return 0


def cmd_enumerate(args) -> int:
    if args.gp:
        gp = read_general_params(args.gp)
    elif args.data:
        gp = empirical_general_params(read_dataset(args.data))
    else:
        raise MVBError("enumerate needs --gp or --data")
    models = enumerate_equivalence_class(gp, tol=args.tol)
    print(write_equivalence_class(models, args.out))
    return 0


def cmd_evaluate(args) -> int:
    est, truth = read_edge_list(args.estimate), read_edge_list(args.truth)
    if est.p != truth.p:
        raise MVBError(f"graphs have different sizes: {est.p} and {truth.p}")
    row = [shd_cpdag(cpdag(est), cpdag(truth)), est.n_edges, truth.n_edges]
    header = ("shd", "est_edges", "true_edges")
    if args.out_file:
        _write_csv(Path(args.out_file), "evaluate", header, [row])
    writer = csv.writer(sys.stdout)
    sys.stdout.write("# mvbdag-evaluate v1\n")
    writer.writerow(header)
    writer.writerow(row)
    return 0


def cmd_bench(args) -> int:
    spec = _spec(args)
    detail, summary = run_bench(spec, jobs=args.jobs)
    for path in write_bench(spec, detail, summary):
        print(path)
    return 0 if all(r[5] == 0 for r in summary) else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    default_out = os.environ.get(OUT_ENV, "mvbdag-out")
    parser = argparse.ArgumentParser(prog="mvbdag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def grid(sp, methods_default):
        sp.add_argument("--p", type=int, nargs="+", default=[5])
        sp.add_argument("--k", type=int, nargs="+", default=[1])
        sp.add_argument("--family", nargs="+", choices=FAMILIES, default=["ER"])
        sp.add_argument("--n", type=int, default=10_000)
        sp.add_argument("--tau", choices=INTERACTION_KINDS, default="first+second")
        sp.add_argument("--method", nargs="+", choices=METHODS, default=methods_default)
        sp.add_argument("--reps", type=int, default=10)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config")
        sp.add_argument("--out", default=default_out)

    sp = sub.add_parser("simulate", help="write datasets and ground truth for a grid")
    grid(sp, ["binotears"])
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("learn", help="learn a DAG from a dataset")
    sp.add_argument("data")
    sp.add_argument("--method", nargs=1, choices=METHODS, default=["binotears"])
    sp.add_argument("--gp", help="exact table, used by --method enumerate")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default=default_out)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("enumerate", help="recover one DAG per variable order")
    sp.add_argument("--gp")
    sp.add_argument("--data")
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--out", default=default_out)
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("evaluate", help="SHD between the CPDAGs of two edge lists")
    sp.add_argument("estimate")
    sp.add_argument("truth")
    sp.add_argument("--out", dest="out_file")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("bench", help="simulate, learn and evaluate over a grid")
    grid(sp, ["binotears"])
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (MVBError, ValueError, OSError) as exc:
        print(f"mvbdag {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
