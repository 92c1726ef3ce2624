"""Command line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 generation
exhausted, 4 insufficient samples or resource limit, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .adr import load_sweep, run_adr_experiment
from .analysis import (
    METRICS_SCHEMA,
    decompose_reaction,
    decompose_spatial,
    graph_f1,
    write_metrics_header,
    write_metrics_row,
)
from .baselines import cartesian_discover, direct_discover
from .bench import (
    DEFAULT_EDGES,
    chain_recall,
    paired_f1,
    sign_test,
    summarize,
    trend,
    var_sweep,
)
from .core import graph_to_json, read_graph, read_tensor, write_tensor
from .errors import ConfigError, FormatError, McastleError
from .lens import build_lens
from .pip import PipConfig, discover
from .theory import (
    complexity_compare,
    design_effect_window,
    effective_samples,
    effective_samples_dependent,
    error_reduction,
)
from .varbench import GenSpec, generate_system, ground_truth_graph, simulate

EPILOG = """exit codes:
  0  success
  2  usage, configuration or file-format error
  3  no stable system found within max_attempts
  4  too few samples, or a resource guard refused the job
  5  numerical failure (singular design, non-convergence, instability)
"""

BACKEND_NAMES = {"ci": "ci_pc_stable", "lasso": "lasso"}


def _atomic_write(path: Path, data: str | bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        tmp.write_bytes(data)
    else:
        tmp.write_text(data)
    os.replace(tmp, path)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}") from exc


def _read_json(path) -> dict:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _jobs(args) -> int:
    if args.jobs is not None:
        return args.jobs
    try:
        return int(os.environ.get("MCASTLE_JOBS", "1"))
    except ValueError as exc:
        raise ConfigError("MCASTLE_JOBS must be an integer") from exc


def _pip_config(args) -> PipConfig:
    d = _read_json(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "backend", None):
        d["backend"] = BACKEND_NAMES[args.backend]
    return PipConfig.from_dict(d)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_var(args) -> int:
    spec = GenSpec.from_dict(_read_json(args.spec))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"spec": spec.to_dict(), "replicates": []}
    for i in range(args.replicates):
        rspec = spec.replicate(i)
        ndm, A = generate_system(rspec)
        x = simulate(A, rspec)
        stem = f"rep_{i:03d}"
        tensor = out / f"{stem}.mctl"
        tmp = tensor.with_name(tensor.name + ".tmp")
        write_tensor(x, tmp)
        os.replace(tmp, tensor)
        _atomic_write(out / f"{stem}.truth.json", graph_to_json(ground_truth_graph(ndm)) + "\n")
        manifest["replicates"].append({"index": i, "seed": rspec.seed, "tensor": tensor.name,
                                       "truth": f"{stem}.truth.json"})
    _atomic_write(out / "manifest.json", _dumps(manifest))
    print(f"wrote {args.replicates} replicates to {out}")
    return 0


def cmd_discover(args) -> int:
    x = read_tensor(args.input)
    cfg = _pip_config(args)
    t0 = time.perf_counter()
    if args.method == "mcastle":
        text = graph_to_json(discover(x, cfg))
    elif args.method == "cartesian":
        text = graph_to_json(cartesian_discover(x, cfg))
    else:
        text = direct_discover(x, cfg).to_json()
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    _atomic_write(out, text + "\n")
    report = {"method": args.method, "config": cfg.to_dict(), "seconds": elapsed,
              "shape": list(x.shape)}
    if x.n_rows >= 3 and x.n_cols >= 3:
        lens = build_lens(x)
        report["L"] = lens.L
        report["L_eff"] = effective_samples_dependent(x.n_rows, x.n_cols, x.T)
    _atomic_write(out.with_name(out.name + ".report.json"), _dumps(report))
    print(f"wrote {out}")
    return 0


def cmd_decompose(args) -> int:
    g = read_graph(args.input)
    r, s = decompose_reaction(g), decompose_spatial(g)
    reaction = {
        "V": r.V,
        "edges": [{"src": u, "dst": v, "w": w} for (u, v), w in sorted(r.edges.items())],
        "self": [{"var": v, "w": w} for v, w in sorted(r.self_weights.items())],
    }
    spatial = {
        "edges": [{"dr": p.dr, "dc": p.dc, "name": p.name, "w": w}
                  for p, w in sorted(s.edges.items())],
        "center": s.center_weight,
    }
    _atomic_write(Path(args.out_prefix + ".reaction.json"), _dumps(reaction))
    _atomic_write(Path(args.out_prefix + ".spatial.json"), _dumps(spatial))
    print(f"wrote {args.out_prefix}.reaction.json and {args.out_prefix}.spatial.json")
    return 0


def cmd_eval(args) -> int:
    m = graph_f1(read_graph(args.pred), read_graph(args.truth))
    print(f"tp={m.tp} fp={m.fp} fn={m.fn} precision={m.precision:.6g} "
          f"recall={m.recall:.6g} f1={m.f1:.6g}")
    return 0


def _done_ids(path: Path) -> set:
    if not path.exists():
        return set()
    return {line.strip() for line in path.read_text().splitlines() if line.strip()}


def cmd_sweep_adr(args) -> int:
    points = load_sweep(_read_text(args.spec))
    cfg = _pip_config(args)
    out = Path(args.out)
    done_path = Path(args.done) if args.done else out.with_name(out.name + ".done")
    done = _done_ids(done_path)
    if out.exists():
        first = out.read_text().splitlines()[:1]
        if first != [f"# schema: {METRICS_SCHEMA}"]:
            raise FormatError(f"{out} exists with a different schema")
    else:
        with open(out, "w", newline="") as fh:
            write_metrics_header(fh)
    todo = [(eid, spec) for eid, spec in points if eid not in done]
    jobs = _jobs(args)

    def run(eid, spec):
        return run_adr_experiment(spec, cfg, eid).row

    if jobs <= 1:
        results = (run(eid, spec) for eid, spec in todo)
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs, return_as="generator")(
            delayed(run)(eid, spec) for eid, spec in todo)
    n = 0
    for row in results:
        with open(out, "a", newline="") as fh:
            write_metrics_row(fh, row)
        with open(done_path, "a") as fh:
            fh.write(row["experiment_id"] + "\n")
        n += 1
    print(f"{n} experiments run, {len(points) - len(todo)} already done")
    return 0


def cmd_theory(args) -> int:
    N, V, T = args.N, args.V, args.T
    L = effective_samples(N, N, T)
    de = design_effect_window(N - 2, N - 2)
    c = complexity_compare(N, V, T)
    rows = [
        ("L", L),
        ("design_effect", de),
        ("L_eff", L / de),
        ("error_reduction", error_reduction(N, T)),
        ("naive_search_exponent", c.naive_exponent),
        ("castle_search_exponent", c.castle_exponent),
        ("log10_search_ratio", c.log10_search_ratio),
        ("log10_naive_cost", c.naive_log10_cost),
        ("log10_castle_cost", c.castle_log10_cost),
    ]
    if args.csv:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(("quantity", "value"))
        w.writerows(rows)
    else:
        for k, v in rows:
            print(f"{k:<24}{v:.6g}" if isinstance(v, float) else f"{k:<24}{v}")
    return 0


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        _atomic_write(path, "")
        return
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


def cmd_bench(args) -> int:
    jobs = _jobs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    backends = tuple(BACKEND_NAMES[b] for b in args.backends)
    sw = var_sweep(tuple(args.V), DEFAULT_EDGES, args.replicates, T=args.T, seed=args.seed,
                   backends=backends, jobs=jobs)
    _write_csv(out / "var_rows.csv", sw.rows)
    summary = summarize(sw.rows)
    _write_csv(out / "var_summary.csv", summary)
    tests = []
    for backend in backends:
        for V in args.V:
            if V < 2:
                continue
            for a, b in (("mcastle", "cartesian"), ("cartesian", "direct"), ("mcastle", "direct")):
                x, y = paired_f1(sw.rows, a, b, backend, V)
                tests.append({"backend": backend, "V": V, "a": a, "b": b, "n": len(x),
                              "mean_a": float(x.mean()) if len(x) else None,
                              "mean_b": float(y.mean()) if len(y) else None,
                              "sign_test_p": sign_test(x, y)})
    _write_csv(out / "var_sign_tests.csv", tests)
    for backend in backends:
        m = [r for r in sw.rows if r["method"] == "mcastle" and r["backend"] == backend]
        print(f"{backend}: spearman(V, f1) = {trend([r['V'] for r in m], [r['f1'] for r in m]):.3f}")
    if sw.dropped:
        print(f"dropped (V, E) points: {sw.dropped}")
    for s in summary:
        print(f"V={s['V']} {s['method']:<10} {s['backend']:<13} n={s['n']:<4} "
              f"precision={s['precision']:.3f} recall={s['recall']:.3f} f1={s['f1']:.3f}")
    return 0


def cmd_chain(args) -> int:
    cfg = _pip_config(args) if args.config else PipConfig(backend="lasso")
    rows = chain_recall(tuple(args.V), tuple(args.coefficients), tuple(range(args.seeds)),
                        T=args.T, cfg=cfg, jobs=_jobs(args))
    if args.out:
        _write_csv(Path(args.out), rows)
    for r in rows:
        print(f"V={r['V']} coefficient={r['coefficient']:g} seed={r['seed']} recall={r['recall']:.3f}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcastle", epilog=EPILOG,
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                description="Multivariate stencil causal discovery on gridded data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def jobs(sp):
        sp.add_argument("--jobs", type=int, default=None,
                        help="parallel workers (default: $MCASTLE_JOBS or 1)")

    s = sub.add_parser("gen-var", help="generate spatial VAR benchmark replicates")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--replicates", type=int, default=1)
    s.set_defaults(func=cmd_gen_var)

    s = sub.add_parser("discover", help="discover a stencil graph from a tensor file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--method", choices=("mcastle", "cartesian", "direct"), default="mcastle")
    s.add_argument("--backend", choices=tuple(BACKEND_NAMES), default=None)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_discover)

    s = sub.add_parser("decompose", help="split a stencil graph into reaction and spatial graphs")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("eval", help="precision, recall and F1 of a graph against a truth graph")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep-adr", help="run an ADR sweep, one CSV row per experiment")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--done", help="done-list file (default: <out>.done)")
    s.add_argument("--config")
    s.add_argument("--backend", choices=tuple(BACKEND_NAMES), default=None)
    jobs(s)
    s.set_defaults(func=cmd_sweep_adr)

    s = sub.add_parser("theory", help="sample-size and complexity calculators")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--V", type=int, default=1)
    s.add_argument("--T", type=int, default=1)
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_theory)

    s = sub.add_parser("bench", help="VAR method comparison at desk scale")
    s.add_argument("--out", required=True)
    s.add_argument("--V", type=int, nargs="+", default=[1, 2, 3, 4])
    s.add_argument("--replicates", type=int, default=20)
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--backends", nargs="+", choices=tuple(BACKEND_NAMES), default=["ci", "lasso"])
    jobs(s)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("chain", help="chain-recall experiment")
    s.add_argument("--V", type=int, nargs="+", default=[10, 50])
    s.add_argument("--coefficients", type=float, nargs="+", default=[0.01, 0.1, 0.5, 1.0, 2.0])
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--config")
    s.add_argument("--out")
    jobs(s)
    s.set_defaults(func=cmd_chain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except McastleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
