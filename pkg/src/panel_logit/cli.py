"""Command-line front end: simulate, estimate, mc, verify, wald.

Configuration is a flat ``key = value`` text file with ``#`` comments;
repeated keys accumulate into lists (used for ``estimator`` lines in Monte
Carlo configs).  Flags override file values.

Every data output is paired with a ``<output>.manifest.json`` sidecar
holding the command, the fully resolved configuration and the tool version,
plus wall-clock timing.  Timing is the only non-reproducible entry and
lives exclusively in the sidecar: the data files themselves are bitwise
reproducible, and ``--from-manifest`` re-runs a command from a sidecar
alone.  JSON data outputs additionally embed the deterministic part of
their manifest.

Exit codes: 0 success, 1 verification or estimation failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__
from .estimators import EstimationError, TransformedEstimate, parse_variant
from .inference import wald_test
from .mc import EstimatorRun, McConfig, run_mc
from .model import DgpConfig, ModelSpec, TimeDummiesSpec, TimeTrendSpec, simulate_panel
from .oracle import CHECK_LEVELS, format_report, run_checks
from .panel import read_panel_csv, write_panel_csv
from .workflow import estimate_panel


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# flat key=value configuration


def parse_config_file(path: str) -> dict[str, object]:
    """Parse ``key = value`` lines; repeated keys collect into lists."""
    out: dict[str, object] = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            key, value = key.strip(), value.strip()
            if key in out:
                prev = out[key]
                if isinstance(prev, list):
                    prev.append(value)
                else:
                    out[key] = [prev, value]
            else:
                out[key] = value
    return out


def _get(cfg: dict, key: str, cast, default=None, required: bool = False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing config key {key!r}")
        return default
    value = cfg[key]
    if isinstance(value, list):
        raise ConfigError(f"config key {key!r} given more than once")
    try:
        return cast(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def _model_from_config(cfg: dict) -> ModelSpec:
    model = _get(cfg, "model", str, required=True)
    gamma = _get(cfg, "gamma", float, required=True)
    if model == "dummies":
        raw = _get(cfg, "td", str, required=True)
        td = tuple(float(v) for v in raw.replace(",", " ").split())
        return TimeDummiesSpec(gamma=gamma, td=td)
    if model == "trend":
        return TimeTrendSpec(gamma=gamma,
                             phi_coef=_get(cfg, "phi_coef", float, required=True),
                             tau=_get(cfg, "tau", float, default=1.0))
    raise ConfigError(f"model must be 'dummies' or 'trend', got {model!r}")


def _dgp_from_config(cfg: dict, seed_override: int | None) -> DgpConfig:
    seed = seed_override if seed_override is not None else _get(cfg, "seed", int, default=0)
    return DgpConfig(
        n_individuals=_get(cfg, "n_individuals", int, required=True),
        n_periods=_get(cfg, "n_periods", int, required=True),
        sigma_eta_sq=_get(cfg, "sigma_eta_sq", float, default=0.0),
        seed=seed,
        stream=_get(cfg, "stream", int, default=0),
    )


def _estimators_from_config(cfg: dict) -> tuple[EstimatorRun, ...]:
    raw = cfg.get("estimator")
    if raw is None:
        raise ConfigError("missing 'estimator' lines "
                          "(format: estimator = FAMILY VARIANT WINDOW [two-step] [wald=SET])")
    lines = raw if isinstance(raw, list) else [raw]
    runs = []
    for line in lines:
        parts = str(line).split()
        if len(parts) < 3:
            raise ConfigError(f"estimator line needs FAMILY VARIANT WINDOW: {line!r}")
        family, variant = parts[0], parts[1]
        try:
            window = int(parts[2])
        except ValueError:
            raise ConfigError(f"estimator window must be an integer: {line!r}") from None
        two_step = False
        wald = None
        for extra in parts[3:]:
            if extra == "two-step":
                two_step = True
            elif extra.startswith("wald="):
                wald = extra.split("=", 1)[1]
            else:
                raise ConfigError(f"unknown estimator option {extra!r}")
        runs.append(EstimatorRun(family=family, variant=variant, window_t=window,
                                 two_step=two_step, wald=wald))
    return tuple(runs)


# ---------------------------------------------------------------------------
# manifests


def _manifest_core(command: str, config: dict) -> dict:
    return {"command": command, "version": __version__, "config": config}


def _write_sidecar(out_path: str, core: dict, elapsed: float) -> None:
    sidecar = dict(core)
    sidecar["timing"] = {"elapsed_seconds": elapsed}
    with open(out_path + ".manifest.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_manifest(path: str) -> dict:
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load manifest {path}: {exc}") from exc
    for key in ("command", "config"):
        if key not in manifest:
            raise ConfigError(f"manifest {path} lacks {key!r}")
    return manifest


def _spec_config(spec: ModelSpec) -> dict:
    if isinstance(spec, TimeDummiesSpec):
        return {"model": "dummies", "gamma": spec.gamma,
                "td": " ".join(repr(v) for v in spec.td)}
    return {"model": "trend", "gamma": spec.gamma,
            "phi_coef": spec.phi_coef, "tau": spec.tau}


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    if args.from_manifest:
        manifest = _load_manifest(args.from_manifest)
        cfg = {k: str(v) for k, v in manifest["config"].items()}
    else:
        if not args.config:
            raise ConfigError("simulate needs --config or --from-manifest")
        cfg = parse_config_file(args.config)
    spec = _model_from_config(cfg)
    dgp = _dgp_from_config(cfg, args.seed)

    resolved = _spec_config(spec)
    resolved.update({"n_individuals": dgp.n_individuals, "n_periods": dgp.n_periods,
                     "sigma_eta_sq": dgp.sigma_eta_sq, "seed": dgp.seed,
                     "stream": dgp.stream})
    start = time.perf_counter()
    panel = simulate_panel(spec, dgp)
    write_panel_csv(panel, args.out)
    _write_sidecar(args.out, _manifest_core("simulate", resolved),
                   time.perf_counter() - start)
    print(f"wrote {panel.n * panel.n_periods} rows to {args.out}")
    return 0


def _cmd_estimate(args) -> int:
    if args.from_manifest:
        manifest = _load_manifest(args.from_manifest)
        cfg = manifest["config"]
        panel_path = cfg["panel"]
        family, variant, window = cfg["family"], cfg["variant"], int(cfg["window"])
        two_step, wald = bool(cfg.get("two_step")), cfg.get("wald")
    else:
        if not (args.panel and args.family and args.variant and args.window is not None):
            raise ConfigError("estimate needs PANEL --family --variant --window")
        panel_path, family, variant, window = (args.panel, args.family,
                                               args.variant, args.window)
        two_step, wald = args.two_step, args.wald

    try:
        panel = read_panel_csv(panel_path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    resolved = {"panel": panel_path, "family": family, "variant": variant,
                "window": window, "two_step": two_step, "wald": wald}
    core = _manifest_core("estimate", resolved)
    start = time.perf_counter()
    result = estimate_panel(panel, family, variant, window,
                            two_step=two_step, wald=wald)
    payload = {"manifest": core}
    payload.update(result.to_dict())
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        _write_sidecar(args.out, core, time.perf_counter() - start)
    else:
        sys.stdout.write(text)
    return 0


def _mc_summary_csv(summary, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "parameter", "true", "mean", "sd", "se",
                         "bias", "rmse"])
        for row in summary.table_rows():
            writer.writerow([row["estimator"], row["parameter"],
                             repr(row["true"]), repr(row["mean"]), repr(row["sd"]),
                             repr(row["se"]), repr(row["bias"]), repr(row["rmse"])])


def _mc_raw_csv(summary, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "estimator", "status", "parameter",
                         "estimate", "se", "wald_stat", "wald_df", "wald_p"])
        for rec in summary.raw:
            if rec["status"] != "ok":
                writer.writerow([rec["replication"], rec["estimator"],
                                 rec["status"], "", "", "", "", "", ""])
                continue
            wald = rec.get("wald")
            for name, (value, se) in rec["params"].items():
                writer.writerow([rec["replication"], rec["estimator"], "ok", name,
                                 repr(value), repr(se),
                                 repr(wald[0]) if wald else "",
                                 wald[1] if wald else "",
                                 repr(wald[2]) if wald else ""])
                wald = None  # only on the first row of the record


def _cmd_mc(args) -> int:
    if args.from_manifest:
        manifest = _load_manifest(args.from_manifest)
        cfg = {k: (v if isinstance(v, list) else str(v))
               for k, v in manifest["config"].items()}
    else:
        if not args.config:
            raise ConfigError("mc needs --config or --from-manifest")
        cfg = parse_config_file(args.config)
    spec = _model_from_config(cfg)
    dgp = _dgp_from_config(cfg, args.seed)
    runs = _estimators_from_config(cfg)
    config = McConfig(spec=spec, dgp=dgp,
                      replications=_get(cfg, "replications", int, required=True),
                      estimators=runs,
                      discard_prefix=_get(cfg, "discard_prefix", int, default=0))

    resolved = _spec_config(spec)
    resolved.update({"n_individuals": dgp.n_individuals, "n_periods": dgp.n_periods,
                     "sigma_eta_sq": dgp.sigma_eta_sq, "seed": dgp.seed,
                     "replications": config.replications,
                     "discard_prefix": config.discard_prefix,
                     "estimator": [f"{r.family} {r.variant} {r.window_t}"
                                   + (" two-step" if r.two_step else "")
                                   + (f" wald={r.wald}" if r.wald else "")
                                   for r in runs]})
    core = _manifest_core("mc", resolved)
    start = time.perf_counter()
    summary = run_mc(config, threads=args.threads, keep_raw=bool(args.raw))
    elapsed = time.perf_counter() - start
    _mc_summary_csv(summary, args.out)
    _write_sidecar(args.out, core, elapsed)
    if args.raw:
        _mc_raw_csv(summary, args.raw)
        _write_sidecar(args.raw, core, elapsed)
    print(summary.format_table())
    print(f"wrote summary to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    levels = args.level or list(CHECK_LEVELS)
    try:
        results = run_checks(levels)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def _cmd_wald(args) -> int:
    try:
        with open(args.result) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read estimate result {args.result}: {exc}") from exc
    try:
        block = payload["transformed"]
        labels = tuple(block["vcov"]["labels"])
        alpha = [block["alpha"][c] for c in labels]
        vcov = block["vcov"]["rows"]
        family, variant_name = block["family"], block["variant"]
        window_t, n = block["window_t"], block["n"]
    except KeyError as exc:
        raise ConfigError(f"result file lacks field {exc}") from exc

    est = TransformedEstimate(family=family, variant=parse_variant(variant_name),
                              window_t=window_t, n=n, col_labels=labels,
                              alpha=np.array(alpha, dtype=float),
                              vcov=np.array(vcov, dtype=float))
    result = wald_test(est, args.set)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panel-logit",
        description="Linear estimation of dynamic binary panels with time effects")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a panel and write it as CSV")
    p_sim.add_argument("--config", help="flat key=value model/size config")
    p_sim.add_argument("--seed", type=int, help="override the config seed")
    p_sim.add_argument("--from-manifest", help="re-run from a manifest sidecar")
    p_sim.add_argument("--out", required=True, help="output panel CSV path")
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate one panel CSV")
    p_est.add_argument("panel", nargs="?", help="panel CSV path")
    p_est.add_argument("--family", choices=("A", "B", "C"))
    p_est.add_argument("--variant",
                       help="full | minus-3-7 | minus-1-5 | minus-r:<k>")
    p_est.add_argument("--window", type=int, help="estimation window index t")
    p_est.add_argument("--two-step", action="store_true",
                       help="also estimate the effect step at t-1")
    p_est.add_argument("--wald", choices=("ab-dummies", "c-trend", "ab-trend"),
                       help="run a Wald restriction test")
    p_est.add_argument("--from-manifest", help="re-run from a manifest sidecar")
    p_est.add_argument("--out", help="write result JSON here (default stdout)")
    p_est.set_defaults(func=_cmd_estimate)

    p_mc = sub.add_parser("mc", help="run a Monte Carlo experiment")
    p_mc.add_argument("--config", help="flat key=value experiment config")
    p_mc.add_argument("--seed", type=int, help="override the config seed")
    p_mc.add_argument("--threads", type=int,
                      help="worker processes (default: PANEL_LOGIT_THREADS or all cores)")
    p_mc.add_argument("--from-manifest", help="re-run from a manifest sidecar")
    p_mc.add_argument("--out", required=True, help="summary CSV path")
    p_mc.add_argument("--raw", help="also write per-replication estimates CSV")
    p_mc.set_defaults(func=_cmd_mc)

    p_ver = sub.add_parser("verify", help="run the exact verification suite")
    p_ver.add_argument("--level", action="append", choices=CHECK_LEVELS,
                       help="check level (repeatable; default: all)")
    p_ver.set_defaults(func=_cmd_verify)

    p_wald = sub.add_parser("wald", help="Wald test on a stored estimate result")
    p_wald.add_argument("result", help="estimate result JSON")
    p_wald.add_argument("--set", required=True,
                        choices=("ab-dummies", "c-trend", "ab-trend"))
    p_wald.set_defaults(func=_cmd_wald)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
