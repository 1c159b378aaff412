"""Command line entry point: ``thinfb run``, ``thinfb report``, ``thinfb selftest``."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import SCHEMA_VERSION, __version__
from .config import load_spec
from .errors import ConfigError, MissingManifest, ThinFBError
from .experiments import CRITERIA, KINDS, Outcome, dumps, rnd, run_criterion, table_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def worker_count() -> int:
    raw = os.environ.get("THINFB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"THINFB_THREADS must be an integer, got {raw!r}") from exc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outcome(out: Outcome, directory: Path, stem: str = "results",
                  snapshots: bool = True) -> list[str]:
    """Write JSON, CSV tables and snapshots; returns the file names."""
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    (directory / f"{stem}.json").write_text(dumps(out.to_json()))
    names.append(f"{stem}.json")
    for name, (header, rows) in sorted(out.tables.items()):
        fn = f"{stem}_{name}.csv" if stem != "results" else f"{name}.csv"
        (directory / fn).write_text(table_csv(header, rows))
        names.append(fn)
    if snapshots:
        for name, g in sorted(out.snapshots.items()):
            fn = f"{name}.grid"
            g.write_binary(directory / fn)
            names.append(fn)
    return names


def write_manifest(directory: Path, files: list[str], header: dict) -> None:
    manifest = {"schema": SCHEMA_VERSION, "version": __version__, **header,
                "files": {fn: _sha256(directory / fn) for fn in sorted(files)}}
    (directory / "manifest.json").write_text(dumps(manifest))


def cmd_run(args) -> int:
    try:
        spec = load_spec(args.spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(args.output) if args.output else spec.output
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out = KINDS[spec.kind](spec.params())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ThinFBError as exc:
        out = Outcome(spec.kind, spec.label, spec.params())
        out.flag(f"raised {type(exc).__name__}", False, str(exc))
    files = write_outcome(out, outdir)
    if not out.passed:
        (outdir / "failures.json").write_text(dumps({"schema": SCHEMA_VERSION,
                                                     "failures": out.failures()}))
        files.append("failures.json")
    write_manifest(outdir, files, {"kind": spec.kind, "spec": rnd(spec.echo()),
                                   "results": ["results.json"]})
    _print_checks(out.to_json())
    print(f"{'PASS' if out.passed else 'FAIL'}: {spec.kind} -> {outdir}")
    return EXIT_OK if out.passed else EXIT_FAIL


def _print_checks(res: dict, prefix: str = "") -> None:
    for c in res["checks"]:
        mark = "pass" if c["passed"] else "FAIL"
        bound = "" if c["relation"] == "true" else f" {c['relation']} {c['bound']}"
        print(f"{prefix}{mark:4s}  {c['name']}: {c['value']}{bound}")


def report(directory) -> tuple[int, list[str]]:
    """Summary lines for a run directory; raises MissingManifest."""
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise MissingManifest(f"no manifest.json in {d}")
    manifest = json.loads(mpath.read_text())
    lines, ok = [], True
    lines.append(f"run: {manifest.get('kind', '?')}  schema {manifest.get('schema')}")
    for fn in manifest.get("results", []):
        p = d / fn
        if not p.is_file():
            continue
        res = json.loads(p.read_text())
        lines.append(f"[{res.get('label', fn)}] {'PASS' if res['passed'] else 'FAIL'}")
        for c in res["checks"]:
            mark = "pass" if c["passed"] else "FAIL"
            bound = "" if c["relation"] == "true" else f" {c['relation']} {c['bound']}"
            lines.append(f"  {mark:4s}  {c['name']}: {c['value']}{bound}")
            ok &= c["passed"]
        for k, v in sorted(res.get("values", {}).items()):
            if not isinstance(v["value"], list):
                lines.append(f"  value {k} = {v['value']} (tol {v['tolerance']})")
    lines.append("files:")
    for fn, digest in sorted(manifest.get("files", {}).items()):
        p = d / fn
        if not p.is_file():
            status = "MISSING"
        elif _sha256(p) != digest:
            status = "CHECKSUM MISMATCH"
        else:
            status = "ok"
        ok &= status == "ok"
        lines.append(f"  {status:17s} {fn}")
    return (EXIT_OK if ok else EXIT_FAIL), lines


def cmd_report(args) -> int:
    try:
        code, lines = report(args.directory)
    except MissingManifest as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(lines))
    return code


def _criterion_task(args):
    k, seed = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return k, run_criterion(k, seed)


def run_selftest(outdir: Path, seed: int = 0, only=None, workers: int | None = None,
                 echo=print) -> dict[int, Outcome]:
    ids = sorted(only) if only else sorted(CRITERIA)
    workers = worker_count() if workers is None else workers
    tasks = [(k, seed) for k in ids]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = dict(pool.map(_criterion_task, tasks))
    else:
        results = dict(_criterion_task(t) for t in tasks)
    outdir.mkdir(parents=True, exist_ok=True)
    files, summary = [], []
    for k in ids:
        out = results[k]
        files += write_outcome(out, outdir, stem=f"criterion_{k:02d}", snapshots=False)
        summary.append({"criterion": k, "label": out.label, "passed": out.passed})
        echo(f"criterion {k:2d} {'PASS' if out.passed else 'FAIL'}  {out.label}")
    (outdir / "selftest.json").write_text(dumps({"schema": SCHEMA_VERSION, "seed": seed,
                                                "criteria": summary}))
    files.append("selftest.json")
    write_manifest(outdir, files, {"kind": "selftest", "seed": seed,
                                   "results": [f"criterion_{k:02d}.json" for k in ids]})
    return results


def cmd_selftest(args) -> int:
    only = None
    if args.only:
        try:
            only = [int(x) for x in args.only.split(",")]
        except ValueError:
            print("config error: --only takes comma-separated criterion numbers", file=sys.stderr)
            return EXIT_CONFIG
        bad = [k for k in only if k not in CRITERIA]
        if bad:
            print(f"config error: unknown criteria {bad}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        results = run_selftest(Path(args.output), args.seed, only)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if all(o.passed for o in results.values()) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thinfb", description="Thin one-phase free boundary lab")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment spec")
    r.add_argument("spec")
    r.add_argument("-o", "--output", help="override the output directory")
    r.set_defaults(func=cmd_run)
    rep = sub.add_parser("report", help="summarize a run directory")
    rep.add_argument("directory")
    rep.set_defaults(func=cmd_report)
    st = sub.add_parser("selftest", help="run the acceptance criteria")
    st.add_argument("-o", "--output", default="thinfb-selftest")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--only", help="comma-separated criterion numbers")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
