"""Command-line front end.

Subcommands ``simulate``, ``fit``, ``sample``, ``explore`` and ``report``.
Settings are resolved as built-in defaults, then a JSON ``--config`` file,
then explicit flags.  Every run writes ``manifest.json`` holding the resolved
settings; feeding it back through ``--config`` repeats the run.

Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import re
import sys
import zlib
from pathlib import Path

import numpy as np

from .diagnostics import (aic_bic, chain_global_quantities, diagnostics_report, global_quantities,
                          n_free_params, summarize, write_summary_csv)
from .errors import SingularHessian, StuckChain, TwinMixError
from .explorer import (Strategy, best_fit, detect_collapse, failure_counts, moment_start,
                       random_starts, restart_all, run_strategy)
from .model import ModelSpec, TwinDataset, read_csv, simulate, write_csv
from .nuts import Chain, SamplerConfig, read_chain_csv
from .optimizer import OptimConfig, OptimResult, minimize, standard_errors
from .params import (GROUPS, SIMULATION_TRUTH, BoxBounds, FixedMask, NaturalParams,
                     UnconstrainedParams, from_natural, natural_names, optimizer_box, sampler_box)

log = logging.getLogger("twinmix")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

_COMMON = {"seed": 0, "threads": 1}
_OPTIM = {"max_iterations": 500, "gradient_tolerance": 1e-8, "step_tolerance": 1e-10}
_SAMPLE = {"data": None, "components": 3, "start": "auto", "strategy": "base", "iters": 1000,
           "warmup": 500, "seeds": 15, "fix": None, "bounds": "default", "target_accept": 0.95,
           "max_tree_depth": 10}
DEFAULTS = {
    "simulate": {**_COMMON, "n": 1200, "frac_mz": 1 / 3, "frac_male": 0.5, "params": None},
    "fit": {**_COMMON, **_OPTIM, "data": None, "components": 3, "start": "auto", "restarts": 0},
    "sample": {**_COMMON, **_SAMPLE},
    "explore": {**_COMMON, **_SAMPLE, **_OPTIM, "chain": None},
    "report": {**_COMMON, "run_dir": None},
}
_PATH_KEYS = ("data", "chain", "run_dir")


class UsageError(Exception):
    """Bad flags, config or input files; maps to exit code 2."""


class NumericalFailure(Exception):
    """The computation ran but failed numerically; maps to exit code 1."""


# ---------------------------------------------------------------------------
# Seeds and output helpers
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def child_seed(seed: int, name: str, index: int = 0) -> int:
    """Independent stream seed for (global seed, component name, index)."""
    h = splitmix64(seed & _MASK64)
    h = splitmix64(h ^ zlib.crc32(name.encode()))
    h = splitmix64(h ^ index)
    return h >> 33  # 31 bits: fits every seed consumer


def _clean(obj):
    """Make a structure JSON-safe: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, obj) -> None:
    # json emits floats via repr, the shortest string that round-trips
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def _g6(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{x:.6g}"


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _g6(v) for v in r])


# ---------------------------------------------------------------------------
# Argument parsing and config resolution
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twinmix", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config or a previous manifest.json")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=None, help="output directory (default: current)")
        sp.add_argument("--threads", type=int, help="worker processes for restarts and seed loops")

    def model(sp):
        sp.add_argument("--data", help="twin CSV with header x1,x2,zygosity,sex")
        sp.add_argument("--components", type=int, choices=(1, 2, 3))
        sp.add_argument("--start", help="auto | truth | moments | path to fit.json or params JSON")

    def optim(sp):
        sp.add_argument("--max-iterations", type=int)
        sp.add_argument("--gradient-tolerance", type=float)
        sp.add_argument("--step-tolerance", type=float)

    def sampling(sp):
        sp.add_argument("--strategy", choices=("base", "seedloop", "fixed", "bounded"))
        sp.add_argument("--iters", type=int, help="total iterations including warmup")
        sp.add_argument("--warmup", type=int)
        sp.add_argument("--seeds", type=int, help="number of chains in the seed loop")
        sp.add_argument("--fix", help="groups to hold fixed, e.g. alpha or alpha[0],beta")
        sp.add_argument("--bounds", help="'default' or path to a bounds JSON {lower, upper}")
        sp.add_argument("--target-accept", type=float)
        sp.add_argument("--max-tree-depth", type=int)

    sp = sub.add_parser("simulate", help="draw a twin dataset")
    common(sp)
    sp.add_argument("--n", type=int, help="number of twin pairs")
    sp.add_argument("--frac-mz", type=float)
    sp.add_argument("--frac-male", type=float)
    sp.add_argument("--params", help="natural parameters JSON (default: simulation truth)")

    sp = sub.add_parser("fit", help="maximum-likelihood fit")
    common(sp)
    model(sp)
    optim(sp)
    sp.add_argument("--restarts", type=int, help="extra random starts; the best fit is kept")

    sp = sub.add_parser("sample", help="draw a NUTS chain")
    common(sp)
    model(sp)
    sampling(sp)

    sp = sub.add_parser("explore", help="sample, then restart the optimizer from every draw")
    common(sp)
    model(sp)
    sampling(sp)
    optim(sp)
    sp.add_argument("--chain", help="reuse an existing chain CSV instead of sampling")

    sp = sub.add_parser("report", help="collect tables from a run directory")
    common(sp)
    sp.add_argument("--run-dir", help="directory searched recursively for run outputs")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    defaults = DEFAULTS[args.command]
    cfg = dict(defaults)
    if args.config:
        loaded = _read_json(args.config)
        if isinstance(loaded, dict) and "config" in loaded and "command" in loaded:
            loaded = loaded["config"]
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in _PATH_KEYS:
        if isinstance(cfg.get(key), str):
            cfg[key] = str(Path(cfg[key]).resolve())
    for key in ("start", "bounds", "params"):
        v = cfg.get(key)
        if isinstance(v, str) and v not in ("auto", "truth", "moments", "default"):
            cfg[key] = str(Path(v).resolve())
    return cfg


def _require(cfg: dict, key: str):
    if cfg.get(key) in (None, ""):
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return cfg[key]


def _positive(cfg: dict, key: str, minimum: int = 1):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise UsageError(f"--{key.replace('_', '-')} must be an integer >= {minimum}")
    return v


# ---------------------------------------------------------------------------
# Input resolution
# ---------------------------------------------------------------------------


def _load_data(cfg: dict) -> TwinDataset:
    path = _require(cfg, "data")
    try:
        return read_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read data file {path}: {exc.strerror}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad data file {path}: {exc}") from exc


def _natural_from_json(d: dict) -> NaturalParams:
    if "params_natural" in d:  # fit.json
        d = d["params_natural"]
    elif "best" in d and isinstance(d["best"], dict):  # exploration.json
        d = d["best"]["params_natural"]
    try:
        return NaturalParams.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"cannot read natural parameters: missing {exc}") from exc


def resolve_start(cfg: dict, data: TwinDataset, m: int) -> UnconstrainedParams:
    start = cfg["start"]
    if start == "auto":
        start = "truth" if m == SIMULATION_TRUTH.n_components else "moments"
    if start == "truth":
        if m != SIMULATION_TRUTH.n_components:
            raise UsageError(f"the simulation truth has {SIMULATION_TRUTH.n_components} components")
        return from_natural(SIMULATION_TRUTH)
    if start == "moments":
        return moment_start(data, m)
    nat = _natural_from_json(start if isinstance(start, dict) else _read_json(start))
    if nat.n_components != m:
        raise UsageError(f"start has {nat.n_components} components, model has {m}")
    return from_natural(nat)


_FIX_TOKEN = re.compile(r"^([a-z_]+)(?:\[(\d+(?:\|\d+)*)\])?$")


def parse_fix(spec) -> list:
    """``"alpha,rho_mz[0|2]"`` -> ``["alpha", ("rho_mz", [0, 2])]``."""
    if isinstance(spec, list):
        return [g if isinstance(g, str) else (g[0], list(g[1])) for g in spec]
    out = []
    for tok in str(spec).split(","):
        mt = _FIX_TOKEN.match(tok.strip())
        if not mt or mt.group(1) not in GROUPS:
            raise UsageError(f"bad --fix entry {tok!r}; groups are {', '.join(GROUPS)}")
        out.append(mt.group(1) if mt.group(2) is None
                   else (mt.group(1), [int(i) for i in mt.group(2).split("|")]))
    return out


def resolve_bounds(spec, m: int) -> BoxBounds:
    if spec in (None, "default"):
        return sampler_box(m)
    d = spec if isinstance(spec, dict) else _read_json(spec)
    try:
        b = BoxBounds.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"bounds need 'lower' and 'upper': {exc}") from exc
    if b.size != 5 * m:
        raise UsageError(f"bounds have {b.size} entries, model needs {5 * m}")
    return b


def _strategy(cfg: dict, start: UnconstrainedParams, m: int) -> Strategy:
    kind = cfg["strategy"]
    if kind == "base":
        return Strategy.base()
    if kind == "seedloop":
        return Strategy.seed_loop(_positive(cfg, "seeds"))
    if kind == "fixed":
        if not cfg.get("fix"):
            raise UsageError("--strategy fixed needs --fix")
        return Strategy.fixed_subset(FixedMask.from_groups(start, parse_fix(cfg["fix"])))
    if kind == "bounded":
        return Strategy.bounded(resolve_bounds(cfg.get("bounds"), m))
    raise UsageError(f"unknown strategy {kind!r}")


def _sampler_config(cfg: dict) -> SamplerConfig:
    iters, warmup = _positive(cfg, "iters"), _positive(cfg, "warmup", 0)
    if warmup >= iters:
        raise UsageError("--warmup must be smaller than --iters")
    return SamplerConfig(n_iterations=iters, n_warmup=warmup,
                         target_accept=float(cfg["target_accept"]),
                         max_tree_depth=_positive(cfg, "max_tree_depth"),
                         seed=child_seed(cfg["seed"], "sample"))


def _optim_config(cfg: dict, m: int) -> OptimConfig:
    return OptimConfig(max_iterations=_positive(cfg, "max_iterations"),
                       gradient_tolerance=float(cfg["gradient_tolerance"]),
                       step_tolerance=float(cfg["step_tolerance"]), bounds=optimizer_box(m))


def _sample_chain(cfg, data, spec, start, threads) -> Chain:
    strategy = _strategy(cfg, start, spec.n_components)
    try:
        return run_strategy(strategy, start, data, spec, _sampler_config(cfg), threads)
    except StuckChain as exc:
        raise NumericalFailure(str(exc)) from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _fit_summary(res: OptimResult, data: TwinDataset, spec: ModelSpec) -> dict:
    k = n_free_params(spec.n_components)
    aic, bic = aic_bic(res.nll, k, len(data))
    out = {**res.to_dict(), "n_components": spec.n_components, "n_obs": len(data), "k": k,
           "aic": aic, "bic": bic,
           "global": global_quantities(res.natural).to_dict()}
    try:
        se = standard_errors(res.argmin, data, spec)
        out["standard_errors"] = dict(zip(natural_names(spec.n_components), se))
    except SingularHessian as exc:
        log.warning("no standard errors: %s", exc)
        out["standard_errors"] = None
        out["standard_errors_error"] = str(exc)
    return out


def cmd_simulate(cfg: dict, out: Path) -> dict:
    n = cfg["n"]
    if not isinstance(n, int) or n < 1:
        raise UsageError("--n must be a positive integer")
    if cfg["params"] is None:
        params = SIMULATION_TRUTH
    else:
        params = _natural_from_json(cfg["params"] if isinstance(cfg["params"], dict)
                                    else _read_json(cfg["params"]))
    data = simulate(params, n, float(cfg["frac_mz"]), float(cfg["frac_male"]),
                    seed=child_seed(cfg["seed"], "simulate"))
    write_csv(data, out / "data.csv")
    return {"params": params.to_dict(), "n_mz": data.n_mz, "n_dz": data.n_dz,
            "n_male": int(data.male.sum())}


def cmd_fit(cfg: dict, out: Path) -> dict:
    data = _load_data(cfg)
    spec = ModelSpec(cfg["components"])
    m = spec.n_components
    ocfg = _optim_config(cfg, m)
    starts = [resolve_start(cfg, data, m)]
    n_extra = _positive(cfg, "restarts", 0)
    if n_extra:
        starts += random_starts(m, n_extra, seed=child_seed(cfg["seed"], "fit"))
    results = [minimize(s, data, spec, ocfg) for s in starts]
    res = best_fit(results)
    summary = _fit_summary(res, data, spec)
    summary["start_nlls"] = [r.nll for r in results]
    write_json(out / "fit.json", summary)
    print(f"nll {res.nll:.6f}  converged {res.converged}  ({res.termination.value}, "
          f"{res.iterations} iterations)  AIC {summary['aic']:.6g}  BIC {summary['bic']:.6g}")
    if not res.converged:
        raise NumericalFailure(f"optimizer stopped with {res.termination.value}")
    return {"start": starts[0].to_dict(), "n_starts": len(starts)}


def cmd_sample(cfg: dict, out: Path, threads: int) -> dict:
    data = _load_data(cfg)
    spec = ModelSpec(cfg["components"])
    start = resolve_start(cfg, data, spec.n_components)
    chain = _sample_chain(cfg, data, spec, start, threads)
    _write_chain_outputs(chain, data, out)
    return {"start": start.to_dict(), "sampler_seed": child_seed(cfg["seed"], "sample"),
            "per_seed": chain.meta.get("per_seed")}


def _write_chain_outputs(chain: Chain, data: TwinDataset, out: Path) -> None:
    chain.to_csv(out / "chain.csv")
    diag = diagnostics_report(chain, len(data))
    diag["collapse"] = {"n_effective_components":
                        int(detect_collapse(chain).n_effective_components)}
    write_json(out / "diagnostics.json", diag)
    write_summary_csv(chain, out / "summary.csv")
    print(f"{len(chain)} draws  min nll {chain.min_nll():.6f}  "
          f"divergent {int(chain.divergences.sum())}  "
          f"accept {float(np.mean(chain.accept_stat)):.3g}")


def cmd_explore(cfg: dict, out: Path, threads: int) -> dict:
    data = _load_data(cfg)
    spec = ModelSpec(cfg["components"])
    m = spec.n_components
    ocfg = _optim_config(cfg, m)
    start = resolve_start(cfg, data, m)
    direct = minimize(start, data, spec, ocfg)
    if cfg.get("chain"):
        try:
            chain = read_chain_csv(cfg["chain"])
        except OSError as exc:
            raise UsageError(f"cannot read chain {cfg['chain']}: {exc.strerror}") from exc
        if chain.n_components != m:
            raise UsageError(f"chain has {chain.n_components} components, model has {m}")
    else:
        # like the direct workflow, the sampler starts at the optimizer's estimate
        chain = _sample_chain(cfg, data, spec, direct.argmin, threads)
        _write_chain_outputs(chain, data, out)
    report = restart_all(chain, data, spec, ocfg, threads)
    report.write_restarts_csv(out / "restarts.csv")
    body = report.to_dict()
    body.pop("per_restart")  # the CSV carries these
    k = n_free_params(m)
    body.update({
        "n_components": m, "n_obs": len(data), "k": k,
        "direct_fit": direct.to_dict(),
        "failure_counts": failure_counts(report),
        "n_clusters": len(report.optima_clusters),
    })
    if report.best is not None:
        body["aic"], body["bic"] = aic_bic(report.best.nll, k, len(data))
        diff = np.abs(report.best.natural.flat - direct.natural.flat)
        body["best_minus_direct_nll"] = report.best.nll - direct.nll
        body["max_param_diff_to_direct"] = float(diff.max())
    write_json(out / "exploration.json", body)
    print(f"{report.n_converged} converged, {report.n_failed} failed, "
          f"{len(report.optima_clusters)} optimum cluster(s); direct fit nll {direct.nll:.6f}"
          + ("" if report.best is None else f", best restart nll {report.best.nll:.6f}"))
    if report.n_converged == 0:
        raise NumericalFailure("no restart converged")
    return {"start": start.to_dict()}


def _load_runs(run_dir: Path) -> list:
    runs = []
    for mpath in sorted(run_dir.rglob("manifest.json")):
        man = _read_json(mpath)
        if not isinstance(man, dict) or man.get("command") not in DEFAULTS:
            continue
        if man.get("resolved") is None:  # the run failed before finishing
            continue
        label = str(mpath.parent.relative_to(run_dir)) or "."
        runs.append((label, man, mpath.parent))
    return runs


def cmd_report(cfg: dict, out: Path) -> dict:
    run_dir = Path(_require(cfg, "run_dir"))
    if not run_dir.is_dir():
        raise UsageError(f"{run_dir} is not a directory")
    runs = [r for r in _load_runs(run_dir) if r[1]["command"] != "report"]
    if not runs:
        raise UsageError(f"no run outputs found under {run_dir}")

    estimates = {}   # column label -> {param: value}
    globals_rows, nll_rows, ic_rows = [], [], []
    for label, man, d in runs:
        cmd = man["command"]
        if cmd == "simulate":
            nat = NaturalParams.from_dict(man["resolved"]["params"])
            estimates[f"{label}:truth"] = dict(zip(natural_names(nat.n_components), nat.flat))
            globals_rows.append([label, "truth", *global_quantities(nat).as_tuple()])
        elif cmd == "fit" and (d / "fit.json").exists():
            fit = _read_json(d / "fit.json")
            nat = NaturalParams.from_dict(fit["params_natural"])
            names = natural_names(nat.n_components)
            estimates[f"{label}:estimate"] = dict(zip(names, nat.flat))
            if fit.get("standard_errors"):
                estimates[f"{label}:se"] = fit["standard_errors"]
            globals_rows.append([label, "fit", *global_quantities(nat).as_tuple()])
            nll_rows.append([label, "fit", str(fit["n_components"]), fit["nll"],
                             str(fit["converged"]), fit["termination"]])
            ic_rows.append((fit["n_components"], fit["aic"], fit["bic"], label))
        elif cmd in ("sample", "explore") and (d / "chain.csv").exists():
            chain = read_chain_csv(d / "chain.csv")
            names = natural_names(chain.n_components)
            summ = summarize(chain)
            estimates[f"{label}:mean"] = {s.name: s.mean for s in summ}
            estimates[f"{label}:sd"] = {s.name: s.sd for s in summ}
            for method in ("per_draw", "mean_params"):
                gq = chain_global_quantities(chain, method)
                globals_rows.append([label, f"chain {method}", *gq.as_tuple()])
            nll_rows.append([label, "chain min", str(chain.n_components), chain.min_nll(), "", ""])
        if cmd == "explore" and (d / "exploration.json").exists():
            ex = _read_json(d / "exploration.json")
            if ex.get("best"):
                nll_rows.append([label, "restart best", str(ex["n_components"]),
                                 ex["best"]["nll"], str(ex["n_converged"]),
                                 f"{ex['n_failed']} failed, {ex['n_clusters']} cluster(s)"])
                ic_rows.append((ex["n_components"], ex["aic"], ex["bic"], label))

    columns = list(estimates)
    all_names = natural_names(max((len(v) - 1) // 5 for v in estimates.values())) if columns else []
    _write_table(out / "table1_estimates.csv", ["parameter", *columns],
                 [[n, *(estimates[c].get(n) for c in columns)] for n in all_names])
    _write_table(out / "table2_global.csv", ["source", "kind", "mu", "sigma", "rho_mz", "rho_dz"],
                 globals_rows)
    _write_table(out / "table3_nll.csv", ["source", "kind", "components", "nll", "converged", "note"],
                 nll_rows)
    best_ic = {}
    for m, aic, bic, label in ic_rows:
        cur = best_ic.get(m)
        best_ic[m] = (min(aic, cur[0]) if cur else aic, min(bic, cur[1]) if cur else bic)
    table5 = [[str(m), *best_ic[m]] for m in sorted(best_ic)]
    _write_table(out / "table5_aic_bic.csv", ["components", "min_aic", "min_bic"], table5)

    for row in globals_rows:
        print(f"{row[0]:<24} {row[1]:<20} " + "  ".join(_g6(v) for v in row[2:]))
    for row in table5:
        print(f"m={row[0]}  AIC {_g6(row[1])}  BIC {_g6(row[2])}")
    return {"n_runs": len(runs)}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        threads = _positive(cfg, "threads")
        _positive(cfg, "seed", 0)
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        cmd = args.command
        # written up front so failed runs leave a record; refreshed on success
        write_json(out / "manifest.json", {"command": cmd, "config": cfg, "resolved": None})
        if cmd == "simulate":
            resolved = cmd_simulate(cfg, out)
        elif cmd == "fit":
            resolved = cmd_fit(cfg, out)
        elif cmd == "sample":
            resolved = cmd_sample(cfg, out, threads)
        elif cmd == "explore":
            resolved = cmd_explore(cfg, out, threads)
        else:
            resolved = cmd_report(cfg, out)
        write_json(out / "manifest.json", {"command": cmd, "config": cfg, "resolved": resolved})
        return EXIT_OK
    except UsageError as exc:
        print(f"twinmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"twinmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"twinmix: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TwinMixError as exc:
        code = EXIT_USAGE if isinstance(exc, ValueError) else EXIT_NUMERIC
        print(f"twinmix: error: {exc}", file=sys.stderr)
        return code


def main(argv=None) -> None:
    sys.exit(run(argv))
