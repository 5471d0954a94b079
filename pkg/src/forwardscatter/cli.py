"""Command line entry point: validate, run, plot and inspect scenarios."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, check_config, config_hash, load_config, scenarios
from .couplings import DetuningWarning, DomainError
from .kernels import AccuracyError, kernel_time_domain
from .moments import CSV_COLUMNS, VarianceCurve, assemble_curve, check_betaJ, evaluate_point

EXIT_OK, EXIT_VALIDATION, EXIT_ACCURACY, EXIT_IO = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "FORWARDSCATTER_OUTPUT_ROOT"


def _emit(payload: dict, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(path: str):
    """Config plus physics diagnostics; raises ConfigError or OSError."""
    cfg = load_config(path)
    errors, warns = check_config(cfg, Path(path).resolve().parent)
    if errors:
        raise ConfigError(errors)
    return cfg, warns


def _fmt(items):
    return [{"field": f, "message": m} for f, m in items]


# --------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        _emit({"status": "error", "errors": [{"field": "<file>", "message": str(exc)}], "warnings": []})
        return EXIT_IO
    except ConfigError as exc:
        _emit({"status": "error", "errors": _fmt(exc.errors), "warnings": []})
        return EXIT_VALIDATION
    errors, warns = check_config(cfg, Path(args.config).resolve().parent)
    _emit({"status": "error" if errors else "ok", "errors": _fmt(errors), "warnings": _fmt(warns), "config_hash": config_hash(cfg)})
    return EXIT_VALIDATION if errors else EXIT_OK


# --------------------------------------------------------------------------
# run


def _output_dir(cfg, override: str | None) -> Path:
    out = Path(override or cfg.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _evaluate(task):
    scn, value, base = task
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DetuningWarning)
        try:
            return evaluate_point(scn, value, base), None
        except AccuracyError as exc:
            return None, f"accuracy: {exc}"


def cmd_run(args) -> int:
    try:
        cfg, warns = _load(args.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        _emit({"status": "error", "errors": _fmt(exc.errors)}, sys.stderr)
        return EXIT_VALIDATION
    started = datetime.now(timezone.utc).isoformat()
    out = _output_dir(cfg, args.output)
    values = check_betaJ(cfg.sweep.betaJ_values())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DetuningWarning)
        scns = scenarios(cfg, Path(args.config).resolve().parent)
        bases = [s.base_quantities() for s in scns]
    tasks = [(s, v, b) for s, b in zip(scns, bases) for v in values]
    workers = args.workers or os.cpu_count() or 1
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_evaluate, tasks))
    else:
        results = [_evaluate(t) for t in tasks]

    files, point_warnings, failures = [], [], []
    try:
        out.mkdir(parents=True, exist_ok=True)
        canon = json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
        files.append(_write(out, "config.json", canon.encode()))
        for i, (scn, base) in enumerate(zip(scns, bases)):
            chunk = results[i * len(values) : (i + 1) * len(values)]
            ok = [r for r, err in chunk if err is None]
            bad = [(v, err) for v, (r, err) in zip(values, chunk) if err is not None]
            curve = assemble_curve(scn, base, values, ok, bad)
            files.append(_write(out, f"{scn.label}.csv", curve.to_csv().encode()))
            files.append(_write(out, f"{scn.label}.json", curve.to_json().encode()))
            point_warnings += [f"{scn.label}: {w}" for w in curve.metadata["warnings"]]
            failures += [{"curve": scn.label, **f} for f in curve.metadata["failures"]]
            if cfg.kernel_dump is not None:
                files.append(_write(out, f"kernels_{scn.label}.json", _kernel_dump(cfg, scn, base).encode()))
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    except AccuracyError as exc:
        failures.append({"curve": "kernel_dump", "error": str(exc)})

    manifest = {
        "config_hash": config_hash(cfg),
        "tool_version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "config_warnings": _fmt(warns),
        "point_warnings": point_warnings,
        "failures": failures,
        "files": files,
    }
    try:
        _atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    _emit({"status": "failed" if failures else "ok", "output_dir": str(out), "files": [f["path"] for f in files], "failures": failures})
    return EXIT_ACCURACY if failures else EXIT_OK


def _write(out: Path, name: str, data: bytes) -> dict:
    _atomic_write(out / name, data)
    return {"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}


def _kernel_dump(cfg, scn, base) -> str:
    cs, _ = scn.couplings(cfg.kernel_dump.betaJ, base)
    rows = []
    for zq in cfg.kernel_dump.z:
        for tq in cfg.kernel_dump.t:
            k = kernel_time_domain(zq.to("length"), tq.to("time"), cs, scn.quadrature)
            rows.append(_kernel_record(k))
    return json.dumps({"betaJ": cfg.kernel_dump.betaJ, "kernels": rows}, indent=2, sort_keys=True, default=_default) + "\n"


def _kernel_record(k) -> dict:
    return {
        "z_m": k.z,
        "t_s": k.t,
        "M": k.M,
        "N": k.N,
        "F": k.F,
        "G": k.G,
        "M_delta_t": k.M_impulse,
        "N_delta_z": k.N_impulse,
        "diagnostics": k.diagnostics,
    }


# --------------------------------------------------------------------------
# plot


def _read_curve(path: Path) -> VarianceCurve:
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    try:
        curve = VarianceCurve.from_csv(text)
    except (ValueError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt curve file ({exc})") from exc
    if not curve.points:
        raise ValueError(f"{path}: curve has no points")
    return curve


def render_svg(curve: VarianceCurve, title: str) -> bytes:
    import io

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    b = curve.column("betaJ")
    series = [
        ("shot-noise", np.zeros_like(b), dict(ls=":", color="0.4"), "shot-noise level"),
        ("atomic-term", curve.column("xi1_atomic_term"), dict(ls="--", color="C1"), "atomic term"),
        ("faraday", curve.column("xi1_faraday"), dict(ls="-.", color="C2"), "Faraday line"),
        ("full", curve.column("xi1"), dict(ls="-", color="C0"), "full variance"),
    ]
    with plt.rc_context({"svg.hashsalt": "forwardscatter", "svg.fonttype": "none"}):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 7), sharex=True)
        for gid, y, style, label in series:
            ax1.plot(b, y, marker="o", ms=3, label=label, gid=f"xi1-{gid}", **style)
        ax1.set_ylabel(r"$\xi_1$")
        ax1.legend(loc="upper left", fontsize=8)
        ax1.set_title(title)
        ax2.plot(b, np.zeros_like(b), marker="o", ms=3, ls=":", color="0.4", label="shot-noise level", gid="xi2-shot-noise")
        ax2.plot(b, curve.column("xi2"), marker="o", ms=3, ls="-", color="C0", label="full variance", gid="xi2-full")
        ax2.set_xlabel(r"$\beta J$")
        ax2.set_ylabel(r"$\xi_2$")
        ax2.legend(loc="upper left", fontsize=8)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def cmd_plot(args) -> int:
    run = Path(args.run_dir)
    if not run.is_dir():
        print(f"error: {run}: not a directory", file=sys.stderr)
        return EXIT_IO
    manifest = run / "manifest.json"
    if manifest.exists():
        try:
            listed = [f["path"] for f in json.loads(manifest.read_text())["files"]]
        except (ValueError, KeyError, TypeError) as exc:
            print(f"error: {manifest}: corrupt manifest ({exc})", file=sys.stderr)
            return EXIT_IO
        csvs = [run / p for p in listed if p.endswith(".csv")]
    else:
        csvs = sorted(run.glob("*.csv"))
    if not csvs:
        print(f"error: {run}: no curve CSV files", file=sys.stderr)
        return EXIT_IO
    curves = []
    for path in csvs:
        try:
            curves.append((path, _read_curve(path)))
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    written = []
    for path, curve in curves:
        svg = path.with_suffix(".svg")
        _atomic_write(svg, render_svg(curve, path.stem))
        written.append(str(svg))
    _emit({"status": "ok", "files": written})
    return EXIT_OK


# --------------------------------------------------------------------------
# kernels eval / couplings show

_QTY = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z^0-9*]*)\s*$")


def _parse_quantity(text: str, kind: str) -> float:
    from .config import _UNITS

    m = _QTY.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    if not unit:
        return value
    if unit not in _UNITS[kind]:
        raise argparse.ArgumentTypeError(f"unit {unit!r} is not a {kind} unit")
    return value * _UNITS[kind][unit]


def _pick(cfg, args):
    scns = scenarios(cfg, Path(args.config).resolve().parent)
    if not 0 <= args.detuning_index < len(scns):
        raise DomainError(f"detuning index {args.detuning_index} out of range (0..{len(scns) - 1})")
    return scns[args.detuning_index]


def cmd_kernels_eval(args) -> int:
    try:
        cfg, _ = _load(args.config)
        scn = _pick(cfg, args)
        z = _parse_quantity(args.z, "length")
        t = _parse_quantity(args.t, "time")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DetuningWarning)
            base = scn.base_quantities()
            cs, _ = scn.couplings(args.betaJ, base)
            k = kernel_time_domain(z, t, cs, scn.quadrature)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        _emit({"status": "error", "errors": _fmt(exc.errors)}, sys.stderr)
        return EXIT_VALIDATION
    except (DomainError, ValueError, argparse.ArgumentTypeError) as exc:
        _emit({"status": "error", "errors": [{"field": "arguments", "message": str(exc)}]}, sys.stderr)
        return EXIT_VALIDATION
    except AccuracyError as exc:
        _emit({"status": "error", "errors": [{"field": "quadrature", "message": str(exc)}], "diagnostics": exc.diagnostics}, sys.stderr)
        return EXIT_ACCURACY
    rec = _kernel_record(k)
    rec.update(status="ok", scenario=scn.label, betaJ=args.betaJ)
    if args.dispersion:
        from .kernels import dispersion_roots_p, dispersion_roots_s

        s_probe = 1.0 / t if t > 0 else 1.0
        p_probe = 1.0 / z if z > 0 else 1.0
        rec["dispersion"] = {
            "s": s_probe,
            "p_roots": [complex(r) for r in dispersion_roots_p(s_probe, cs)],
            "p": p_probe,
            "s_roots": [complex(r) for r in dispersion_roots_s(p_probe, cs)],
        }
    _emit(rec)
    return EXIT_OK


def cmd_couplings_show(args) -> int:
    try:
        cfg, warns = _load(args.config)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DetuningWarning)
            rows = []
            for scn in scenarios(cfg, Path(args.config).resolve().parent):
                base = scn.base_quantities()
                cs, info = scn.couplings(args.betaJ, base)
                rows.append(
                    {
                        "scenario": scn.label,
                        "betaJ": args.betaJ,
                        **{k: v for k, v in base.items()},
                        "coupling_set": {
                            k: getattr(cs, k)
                            for k in ("beta", "epsilon", "kappa2", "omega2", "omega", "theta_y", "theta_z", "Jx_bar", "Xi3_bar", "Txy_bar", "Tx_bar", "length")
                        },
                        **info,
                    }
                )
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        _emit({"status": "error", "errors": _fmt(exc.errors)}, sys.stderr)
        return EXIT_VALIDATION
    except (DomainError, ValueError) as exc:
        _emit({"status": "error", "errors": [{"field": "atomic", "message": str(exc)}]}, sys.stderr)
        return EXIT_VALIDATION
    _emit({"status": "ok", "warnings": _fmt(warns), "scenarios": rows})
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="forwardscatter", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a scenario sweep")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render SVG figures from a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("kernels", help="time-domain kernel diagnostics")
    ks = p.add_subparsers(dest="kernels_command", required=True)
    e = ks.add_parser("eval", help="evaluate M, N, F, G at one (z, t)")
    e.add_argument("config")
    e.add_argument("--z", required=True, help="position, e.g. 0.5cm (plain numbers are metres)")
    e.add_argument("--t", required=True, help="time, e.g. 0.3us (plain numbers are seconds)")
    e.add_argument("--betaJ", type=float, default=1.0)
    e.add_argument("--detuning-index", type=int, default=0)
    e.add_argument("--dispersion", action="store_true", help="also report roots of the determinant")
    e.set_defaults(func=cmd_kernels_eval)

    p = sub.add_parser("couplings", help="coupling constants of a scenario")
    cs = p.add_subparsers(dest="couplings_command", required=True)
    s = cs.add_parser("show")
    s.add_argument("config")
    s.add_argument("--betaJ", type=float, default=1.0)
    s.set_defaults(func=cmd_couplings_show)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
