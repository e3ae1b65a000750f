"""Command line front end: ``mdlab <kind> ...``, ``mdlab run`` and ``mdlab report``.

Exit codes: 0 success, 1 invalid config or corrupted run directory, 2
unreliable estimate under ``--strict`` (argparse also uses 2 for usage
errors).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path
import sys

import numpy as np
import yaml

from . import __version__, config as cfg
from ._accel import BACKEND
from .errors import ConfigError, IntegrityError, ManifestMismatch, MdlabError, UnreliableEstimate
from .experiments import fit_slope, run_experiment

OUTPUT_ENV = "MDLAB_OUTPUT_ROOT"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def table_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def default_output(conf: cfg.ExperimentConfig) -> Path:
    if conf.output_dir:
        return Path(conf.output_dir)
    root = Path(os.environ.get(OUTPUT_ENV, "mdlab-runs"))
    return root / f"{conf.kind}-seed{conf.master_seed}"


def execute(conf: cfg.ExperimentConfig, out: Path | None = None) -> tuple[Path, object]:
    """Run one experiment and write its artifacts; returns (directory, result)."""
    out = default_output(conf) if out is None else Path(out)
    result = run_experiment(conf.kind, conf.params, conf.master_seed, conf.worker_count)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    def put(name, text, rows=None):
        data = text.encode()
        (out / name).write_bytes(data)
        files[name] = {"sha256": _sha(data), "rows": rows}

    put("config.yaml", conf.dump())
    for name, table in sorted(result.tables.items()):
        put(f"{name}.csv", table_csv(table), len(table.rows))
    summary = {"kind": result.kind, "summary": result.summary, "unreliable": result.unreliable}
    put("summary.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    manifest = {
        "library": "mdlab", "version": __version__, "backend": BACKEND,
        "kind": conf.kind, "master_seed": conf.master_seed, "config": conf.to_dict(), "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return out, result


# ----------------------------------------------------------------- report --


def load_run(path: Path) -> dict:
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.exists():
        raise IntegrityError(f"{path}: no manifest.json")
    manifest = json.loads(mf.read_text())
    for name, meta in manifest["files"].items():
        f = path / name
        if not f.exists():
            raise IntegrityError(f"{path}: missing {name}")
        data = f.read_bytes()
        if meta.get("rows") is not None:
            rows = max(data.decode().count("\n") - 1, 0)
            if rows != meta["rows"]:
                raise IntegrityError(f"{path}/{name}: {rows} rows, manifest says {meta['rows']}")
        if _sha(data) != meta["sha256"]:
            raise IntegrityError(f"{path}/{name}: checksum mismatch")
    summary = json.loads((path / "summary.json").read_text())
    return {"path": str(path), "manifest": manifest, "summary": summary["summary"], "kind": summary["kind"]}


def _within(x, lo, hi):
    return x is not None and lo <= x <= hi


def checklist(runs: list[dict]) -> tuple[list, dict]:
    """Acceptance-style verdicts derivable from run summaries."""
    items = []
    merged = {}
    for run in runs:
        s, kind = run["summary"], run["kind"]
        if kind == "gaf-mean":
            ok = abs(s["count_z_score"]) <= 3 and s["exclusion_rate"] < 0.005
            items.append(("zero intensity", ok, f"count {s['mean_count']:.4f} vs {s['expected_count']:.4f}, "
                                                f"z={s['count_z_score']:.2f}, exclusion {s['exclusion_rate']:.4f}"))
        elif kind == "gaf-variance":
            for e in s["per_r"]:
                merged[(e["h"], e["r"])] = e
            for e in s.get("kappa_ratio", []):
                merged[("ratio", e["r"])] = e
        elif kind == "gaf-clt":
            for f in s["functions"]:
                ok = abs(f["skewness"]) < 0.15 and abs(f["excess_kurtosis"]) < 0.3
                items.append((f"CLT h{f['h']} r={s['r']}", ok,
                              f"skew {f['skewness']:.4f}, excess kurtosis {f['excess_kurtosis']:.4f}"))
        elif kind == "md-chain":
            items.append(("limit analytic vs MC", abs(s["limit_estimate"] - s["limit_analytic"]) <= 0.02,
                          f"{s['limit_estimate']:.4f} vs {s['limit_analytic']:.6f}"))
        elif kind == "sandwich":
            ok = s["ok"] and not s.get("control", {"ok": False})["ok"]
            items.append(("sandwich + control", ok, f"fraction {s['fraction']:.3f}, control "
                                                    f"{s.get('control', {}).get('fraction')}"))
        elif kind == "inequalities":
            ex = s["exact"]
            bad = ex["holder_violations"] + ex["cosh_violations"] + ex["subgaussian_violations"]
            items.append(("exact inequalities", bad == 0, f"{bad} violations in {ex['instances']} instances"))
            ok = all(v["passed"] for v in s["b4"].values()) and s["b5"]["passed"] and s["th31"]["passed"]
            items.append(("B4/B5/Th3.1", ok, "one-sided Monte Carlo checks"))
        elif kind == "certificates":
            fb, al = s["fourier_lower_bound"], s["alpha_select"]
            ok = fb["consistent"] and 3 - 1e-3 < al["row_sum"] <= 3 and al["gram_lambda_min"] >= 1
            items.append(("certificates", ok, f"c_min {fb['c_min']:.3g}, alpha {al['alpha']:.6g}"))
    slope_rows = []
    for h in sorted({k[0] for k in merged if k[0] != "ratio"}):
        rows = sorted((e for k, e in merged.items() if k[0] == h), key=lambda e: e["r"])
        if len(rows) >= 2:
            slope, se = fit_slope(np.log([e["r"] for e in rows]), np.log([e["var"] for e in rows]),
                                  [e["var_se"] / e["var"] for e in rows])
            slope_rows.append({"h": h, "slope": slope, "slope_se": se, "r": [e["r"] for e in rows]})
            items.append((f"variance slope h{h}", _within(slope, -2.3, -1.7), f"{slope:.3f} +- {se:.3f}"))
    for k, e in sorted((k, e) for k, e in merged.items() if k[0] == "ratio"):
        items.append((f"kappa ratio r={e['r']}", abs(e["ratio"] - 1) <= 0.2, f"{e['ratio']:.4f}"))
    tables = {"variance": [merged[k] for k in sorted(k for k in merged if k[0] != "ratio")], "slopes": slope_rows}
    return items, tables


def report(dirs) -> tuple[str, dict]:
    runs = [load_run(d) for d in dirs]
    versions = {r["manifest"]["version"] for r in runs}
    if len(versions) > 1:
        raise ManifestMismatch(f"runs come from different library versions: {sorted(versions)}")
    items, tables = checklist(runs)
    lines = [f"{'check':<28} {'result':<6} detail"]
    for name, ok, detail in items:
        lines.append(f"{name:<28} {'PASS' if ok else 'FAIL':<6} {detail}")
    if tables["slopes"]:
        lines.append("")
        lines.append("h  slope      se      r values")
        for s in tables["slopes"]:
            lines.append(f"{s['h']}  {s['slope']:.4f}  {s['slope_se']:.4f}  {s['r']}")
    return "\n".join(lines) + "\n", {"checks": [{"check": n, "pass": ok, "detail": d} for n, ok, d in items],
                                     **tables}


# -------------------------------------------------------------------- main --


def _parse_set(items) -> dict:
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ConfigError(f"--set expects key=value, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _common(p):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--workers", type=int, help="override worker_count")
    p.add_argument("--out", help="output directory (default: $%s/<kind>-seed<seed>)" % OUTPUT_ENV)
    p.add_argument("--strict", action="store_true", help="exit 2 if any estimate is flagged unreliable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"mdlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiment described by --config")
    _common(p)
    for kind in cfg.SCHEMA:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        _common(p)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="set a parameter (YAML value)")
    p = sub.add_parser("report", help="merge run directories and print the checklist")
    p.add_argument("dirs", nargs="+", help="run directories")
    p.add_argument("--out", help="write report.txt and report.json here")
    return ap


def _load(args) -> cfg.ExperimentConfig:
    if args.command == "run":
        if not args.config:
            raise ConfigError("run needs --config")
        conf = cfg.load(args.config)
        return conf.with_overrides(args.seed, args.workers, args.out, args.strict)
    extra = _parse_set(args.set)
    if args.config and not extra:
        conf = cfg.load(args.config)
    else:
        if args.config:
            with open(args.config) as fh:
                data = yaml.safe_load(fh) or {}
        else:
            data = {"kind": args.command, "master_seed": 0 if args.seed is None else args.seed}
        data["params"] = {**(data.get("params") or {}), **extra}
        conf = cfg.validate(data)
    if conf.kind != args.command:
        raise ConfigError(f"config kind {conf.kind!r} does not match subcommand {args.command!r}")
    return conf.with_overrides(args.seed, args.workers, args.out, args.strict)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            text, data = report(args.dirs)
            sys.stdout.write(text)
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "report.txt").write_text(text)
                (out / "report.json").write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
            return 0
        conf = _load(args)
        out, result = execute(conf)
        print(f"wrote {out}")
        if result.unreliable:
            msg = "unreliable estimates: " + ", ".join(result.unreliable)
            if conf.strict:
                raise UnreliableEstimate(msg)
            print("warning: " + msg, file=sys.stderr)
        return 0
    except UnreliableEstimate as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, IntegrityError, ManifestMismatch, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except MdlabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
