"""Command-line front end: ``tailmle {fit,asymptotics,simulate,sweep}``.

Exit codes: 0 success, 1 every requested estimator failed, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import asymptotics, estimation, simulation
from .errors import InvalidInput, TailMLEError

ESTIMATOR_CHOICES = {
    "mle": ("mle",),
    "explicit-zero": ("explicit_zero",),
    "moment": ("moment",),
    "all": estimation.METHODS,
}
SEED_ENV = "TAILMLE_SEED"


class UsageError(Exception):
    pass


def read_sample(path) -> np.ndarray:
    """One number per line; blank lines and ``#`` comments are skipped."""
    values = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                s = line.strip()
                if not s or s.startswith("#"):
                    continue
                try:
                    v = float(s)
                except ValueError:
                    raise UsageError(f"{path}:{lineno}: not a number: {s!r}") from None
                if not math.isfinite(v):
                    raise UsageError(f"{path}:{lineno}: non-finite value {s!r}")
                values.append(v)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return np.array(values, dtype=float)


def _clean(obj):
    """Make a document JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(row.get(h)) for h in header])
    return buf.getvalue()


def _json(doc) -> str:
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return _uint64(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"{SEED_ENV}: {exc}") from None
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def _uint64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _fit_entry(fit, level):
    entry = {"estimator": fit.method, **fit.to_dict()}
    entry.pop("method")
    warnings = []
    g, k = fit.gamma_hat, fit.k
    if fit.method == "moment":
        warnings.append("sigma_hat is the log-scale moment estimate; intervals use the MLE limit law")
    elif fit.method == "explicit_zero":
        warnings.append("explicit estimator is equivalent to the MLE only when gamma0 = 0")
    if not fit.converged:
        warnings.append("likelihood equations not solved to tolerance")
    stderr_g = stderr_s = ci_g = ci_s = None
    if g > -0.5 and fit.converged:
        stderr_g = (1.0 + g) / math.sqrt(k)
        stderr_s = fit.sigma_hat * math.sqrt(2.0 + 2.0 * g + g * g) / math.sqrt(k)
        ci_g, ci_s = asymptotics.confidence_interval(fit, level)
    else:
        warnings.append("gamma_hat <= -1/2: no asymptotic standard errors")
    entry.update(stderr_gamma=stderr_g, stderr_sigma=stderr_s,
                 ci_gamma=ci_g, ci_sigma=ci_s, warnings=warnings)
    return entry


FIT_CSV = ["estimator", "gamma_hat", "sigma_hat", "k", "n", "threshold",
           "residual_1", "residual_2", "stderr_gamma", "stderr_sigma",
           "ci_gamma_lo", "ci_gamma_hi", "ci_sigma_lo", "ci_sigma_hi", "warnings", "error"]


def cmd_fit(args):
    x = read_sample(args.input)
    if args.k is None:
        raise UsageError("fit needs --k")
    if not 2 <= args.k < x.size:
        raise UsageError(f"InvalidK: need 2 <= k < n = {x.size}, got k={args.k}")
    asymptotics.normal_quantile_for_level(args.level)
    results, ok = [], 0
    for name in ESTIMATOR_CHOICES[args.estimator]:
        try:
            results.append(_fit_entry(estimation.fit(x, args.k, name), args.level))
            ok += 1
        except TailMLEError as exc:
            results.append({"estimator": name, "error": f"{type(exc).__name__}: {exc}"})
    if args.format == "csv":
        rows = []
        for r in results:
            row = dict(r)
            if "residuals" in r:
                row["residual_1"], row["residual_2"] = r["residuals"]
            for key in ("ci_gamma", "ci_sigma"):
                if r.get(key) is not None:
                    row[key + "_lo"], row[key + "_hi"] = r[key]
            row["warnings"] = "; ".join(r.get("warnings", []))
            rows.append(row)
        text = _csv(FIT_CSV, rows)
    else:
        text = _json({"command": "fit", "input": str(args.input), "n": int(x.size),
                      "k": args.k, "level": args.level, "results": results})
    return text, 0 if ok else 1


def cmd_asymptotics(args):
    if args.gamma0 is None or args.rho is None:
        raise UsageError("asymptotics needs --gamma0 and --rho")
    lam = 0.0 if args.lam is None else args.lam
    try:
        law = asymptotics.asymptotic_law(asymptotics.SecondOrderSpec(args.gamma0, args.rho, lam))
    except InvalidInput as exc:
        raise UsageError(str(exc)) from None
    doc = {"command": "asymptotics", "rho": args.rho, **law.to_dict()}
    if args.format == "csv":
        mu, lm, s = law.mu, law.mean, law.Sigma
        row = {"gamma0": args.gamma0, "rho": args.rho, "lambda": lam,
               "mu_1": mu[0], "mu_2": mu[1], "lambda_mu_1": lm[0], "lambda_mu_2": lm[1],
               "sigma_11": s[0, 0], "sigma_12": s[0, 1], "sigma_22": s[1, 1], "det_sigma": law.det}
        return _csv(list(row), [row]), 0
    return _json(doc), 0


SIM_CSV = ["estimator", "successes", "failures", "flagged", "mean_gamma", "mean_scale",
           "var_gamma", "cov_gamma_scale", "var_scale", "z_gamma", "z_scale",
           "target_mean_gamma", "target_mean_scale", "target_var_gamma",
           "target_cov", "target_var_scale"]


def cmd_simulate(args):
    if args.gamma0 is None or args.n is None:
        raise UsageError("simulate needs --gamma0 and --n")
    if (args.k is None) == (args.lam is None):
        raise UsageError("simulate needs exactly one of --k and --lambda")
    if args.reps is None or args.reps < 2:
        raise UsageError("--reps must be >= 2")
    seed = _resolve_seed(args.seed)
    try:
        model = simulation.SecondOrderModel(args.gamma0, args.rho, args.c)
        cfg = simulation.MonteCarloConfig(
            model, n=args.n, k=args.k, lam=args.lam, replications=args.reps,
            estimators=ESTIMATOR_CHOICES[args.estimator], seed=seed, workers=args.workers)
    except (InvalidInput, TailMLEError) as exc:
        raise UsageError(f"{type(exc).__name__}: {exc}") from None
    report = simulation.run_monte_carlo(cfg)
    doc = {"command": "simulate", **report.to_dict()}
    if args.format == "csv":
        t = report.target
        rows = []
        for name, e in doc["estimators"].items():
            row = {"estimator": name, "successes": e["successes"], "failures": e["failures"],
                   "flagged": e["flagged"],
                   "target_mean_gamma": t.mean[0], "target_mean_scale": t.mean[1],
                   "target_var_gamma": t.Sigma[0, 0], "target_cov": t.Sigma[0, 1],
                   "target_var_scale": t.Sigma[1, 1]}
            if "mean" in e:
                row.update(mean_gamma=e["mean"][0], mean_scale=e["mean"][1],
                           var_gamma=e["cov"][0][0], cov_gamma_scale=e["cov"][0][1],
                           var_scale=e["cov"][1][1], z_gamma=e["z_scores"][0],
                           z_scale=e["z_scores"][1])
            rows.append(row)
        return _csv(SIM_CSV, rows), 0
    return _json(doc), 0


SWEEP_CSV = ["k", "estimator", "gamma_hat", "sigma_hat", "stderr_gamma", "residual_max", "error"]


def sweep_rows(x, k_values, methods):
    xs = np.sort(x)
    n = xs.size
    rows = []
    for k in k_values:
        threshold = xs[n - k - 1]
        e = estimation.ExcessSet(float(threshold), xs[:n - k - 1:-1] - threshold, int(k), n)
        for name in methods:
            row = {"k": int(k), "estimator": name}
            try:
                f = estimation.fit_excess_set(e, name, xs)
                row.update(gamma_hat=f.gamma_hat, sigma_hat=f.sigma_hat,
                           stderr_gamma=(1.0 + f.gamma_hat) / math.sqrt(k) if f.gamma_hat > -0.5 else None,
                           residual_max=max(abs(r) for r in f.residuals)
                           if all(math.isfinite(r) for r in f.residuals) else None)
                if name == "mle" and not f.converged:
                    row["error"] = "ConvergenceFailure: residuals above tolerance"
            except TailMLEError as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def cmd_sweep(args):
    x = read_sample(args.input)
    if args.k_min is None or args.k_max is None:
        raise UsageError("sweep needs --k-min and --k-max")
    if args.k_step < 1:
        raise UsageError("--k-step must be positive")
    if not 2 <= args.k_min < args.k_max < x.size:
        raise UsageError(f"need 2 <= k_min < k_max < n = {x.size}")
    rows = sweep_rows(x, range(args.k_min, args.k_max + 1, args.k_step),
                      ESTIMATOR_CHOICES[args.estimator])
    if args.format == "json":
        return _json({"command": "sweep", "input": str(args.input), "n": int(x.size), "rows": rows}), 0
    return _csv(SWEEP_CSV, rows), 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailmle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_format="json"):
        sp.add_argument("--format", choices=("json", "csv"), default=default_format)
        sp.add_argument("--output", help="write here instead of stdout")

    sp = sub.add_parser("fit", help="fit estimators to the top k values of a data file")
    sp.add_argument("--input", required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default="mle")
    sp.add_argument("--level", type=float, default=0.95)
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("asymptotics", help="print the limit law N(lambda mu, Sigma)")
    sp.add_argument("--gamma0", type=float)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--lambda", dest="lam", type=float)
    common(sp)
    sp.set_defaults(func=cmd_asymptotics)

    sp = sub.add_parser("simulate", help="Monte Carlo study on an exact second-order model")
    sp.add_argument("--gamma0", type=float)
    sp.add_argument("--rho", type=float, default=-1.0)
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--n", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default="mle")
    sp.add_argument("--seed", type=_uint64)
    sp.add_argument("--workers", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="estimates over a range of k (CSV by default)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--k-min", type=int)
    sp.add_argument("--k-max", type=int)
    sp.add_argument("--k-step", type=int, default=1)
    sp.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default="mle")
    common(sp, default_format="csv")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text, code = args.func(args)
    except (UsageError, InvalidInput) as exc:
        print(f"tailmle {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
