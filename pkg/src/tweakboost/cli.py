"""Command-line surface for the tweakboost pipeline.

Subcommands: train, explain, report-alphas, report-trajectories, verify.
Config precedence is flags > TWEAKBOOST_* environment variables > defaults,
and every output artifact embeds the fully resolved config plus the model
version string so runs are self-describing. Exit codes are stable:

    0  success (NotFound is a result, not a failure)
    1  usage error
    2  data or model error
    3  training failure
    4  flip-soundness violation reported by verify
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys

import numpy as np

from .boost import (
    MODEL_VERSION,
    Ensemble,
    ensemble_margins,
    load_model,
    predict_ensemble,
    save_model,
    train_adaboost,
)
from .data import (
    DataError,
    Dataset,
    load_csv,
    make_demo_dataset,
    parse_label_map,
)
from .prune import (
    DEFAULT_MASS_FRACTION,
    DEFAULT_REL_TOL,
    DEFAULT_WINDOW,
    alpha_report_rows,
    combine_reports,
    margin_certificate,
    select_kprime_alpha_mass,
    select_kprime_trajectory,
    trajectory_report_rows,
)
from .tweak import (
    NORMS,
    Counterfactual,
    EpsilonPolicy,
    GridGuardError,
    NotFound,
    brute_force_oracle,
    explain,
    oracle_grid,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAIN = 3
EXIT_SOUNDNESS = 4

_ENV_PREFIX = "TWEAKBOOST_"


class TrainError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad usage; 2 means data error here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env(name: str, cast, default):
    raw = os.environ.get(_ENV_PREFIX + name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {_ENV_PREFIX}{name}: {raw!r} ({exc})")


class UsageError(ValueError):
    pass


def _resolve(flag_value, env_name: str, cast, default):
    """flags > environment > defaults."""
    if flag_value is not None:
        return flag_value
    return _env(env_name, cast, default)


def _write_text_atomic(path: str, text: str):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_model_or_die(path: str) -> Ensemble:
    try:
        return load_model(path)
    except FileNotFoundError:
        raise DataError(f"no such model file: {path}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot read model {path}: {exc}")


def _load_dataset(args) -> Dataset:
    if getattr(args, "demo", False):
        return make_demo_dataset()
    label_map = parse_label_map(args.label_map) if args.label_map else None
    return load_csv(args.data, label_column=args.label_column, label_map=label_map)


def parse_prune_spec(spec: str) -> tuple[str, dict]:
    """none | alpha-mass:<frac> | trajectory:<window>,<tol> | both:<frac>,<window>,<tol>.
    Parameters are optional; module defaults fill the gaps."""
    spec = spec.strip()
    if spec == "none":
        return "none", {}
    name, _, rest = spec.partition(":")
    try:
        if name == "alpha-mass":
            frac = float(rest) if rest else DEFAULT_MASS_FRACTION
            return name, {"mass_fraction": frac}
        if name == "trajectory":
            if rest:
                w, tol = rest.split(",")
                return name, {"window": int(w), "rel_tol": float(tol)}
            return name, {"window": DEFAULT_WINDOW, "rel_tol": DEFAULT_REL_TOL}
        if name == "both":
            if rest:
                frac, w, tol = rest.split(",")
                return name, {"mass_fraction": float(frac), "window": int(w),
                              "rel_tol": float(tol)}
            return name, {"mass_fraction": DEFAULT_MASS_FRACTION,
                          "window": DEFAULT_WINDOW, "rel_tol": DEFAULT_REL_TOL}
    except ValueError as exc:
        raise UsageError(f"bad --prune parameters in {spec!r}: {exc}")
    raise UsageError(f"unknown prune strategy {spec!r}; "
                     "expected none|alpha-mass:F|trajectory:W,TOL|both:F,W,TOL")


def _config_comment_lines(config: dict) -> list[str]:
    blob = json.dumps(config, sort_keys=True)
    return [f"# model_version: {MODEL_VERSION}", f"# config: {blob}"]


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    k = _resolve(args.k, "K", int, 100)
    depth = _resolve(args.depth, "DEPTH", int, 4)
    seed = _resolve(args.seed, "SEED", int, 0)
    if k < 1:
        raise UsageError(f"--k must be >= 1, got {k}")
    if depth < 1:
        raise UsageError(f"--depth must be >= 1, got {depth}")
    ds = _load_dataset(args)
    try:
        e = train_adaboost(ds, K=k, max_depth=depth, seed=seed)
    except ValueError as exc:
        raise TrainError(str(exc))
    if e.k == 0:
        raise TrainError("no usable round: the first weak learner was no better than chance")
    save_model(e, args.out)
    margins = ensemble_margins(e, ds.rows)
    preds = np.where(margins > 0, 1, -1)
    acc = float((preds == ds.labels).mean())
    a = np.asarray(e.alphas)
    print(f"trained {e.k}/{k} rounds (depth {depth}, seed {seed}) on {ds.n_rows} rows")
    print(f"final train accuracy: {acc:.4f}")
    print(f"alpha: min {a.min():.4f}  mean {a.mean():.4f}  max {a.max():.4f}")
    print(f"model written: {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- explain


def _resolve_instance(args, e: Ensemble) -> tuple[np.ndarray, int | None]:
    """Returns (values, training_row_or_None). Inline instances have no
    training row, so trajectory-based pruning cannot apply to them."""
    if args.instance is not None:
        try:
            values = np.array([float(v) for v in args.instance.split(",")],
                              dtype=np.float64)
        except ValueError:
            raise DataError(f"cannot parse --instance {args.instance!r}")
        if values.shape[0] != e.n_features:
            raise DataError(
                f"--instance has {values.shape[0]} values, model expects {e.n_features}"
            )
        return values, None
    if args.data is None and not args.demo:
        raise UsageError("--row requires --data or --demo")
    ds = _load_dataset(args)
    if not 0 <= args.row < ds.n_rows:
        raise DataError(f"--row {args.row} out of range [0, {ds.n_rows - 1}]")
    if ds.n_features != e.n_features:
        raise DataError(
            f"dataset has {ds.n_features} features, model expects {e.n_features}"
        )
    return ds.rows[args.row].copy(), args.row


def _select_kprime(e: Ensemble, strategy: str, params: dict,
                   row: int | None) -> tuple[int | None, list[str]]:
    notes: list[str] = []
    if strategy == "none":
        return None, notes
    if strategy == "alpha-mass":
        return select_kprime_alpha_mass(e, params["mass_fraction"]).k_prime, notes
    traj_possible = row is not None and row < e.n_train
    if row is not None and not traj_possible:
        raise DataError(
            f"row {row} has no stored weight trajectory (model trained on {e.n_train} rows)"
        )
    if strategy == "trajectory":
        if not traj_possible:
            notes.append("trajectory pruning skipped: inline instance has no trajectory")
            return None, notes
        return select_kprime_trajectory(e, row, params["window"], params["rel_tol"]).k_prime, notes
    # both
    mass = select_kprime_alpha_mass(e, params["mass_fraction"])
    if not traj_possible:
        notes.append("trajectory pruning skipped: inline instance has no trajectory; "
                     "alpha-mass selection used alone")
        return mass.k_prime, notes
    traj = select_kprime_trajectory(e, row, params["window"], params["rel_tol"])
    return combine_reports(mass, traj).k_prime, notes


def cmd_explain(args) -> int:
    eps_mode = _resolve(args.epsilon_mode, "EPSILON_MODE", str, "range_scaled")
    eps_value = _resolve(args.epsilon, "EPSILON", float, 0.01)
    norm = _resolve(args.norm, "NORM", str, "L2_std")
    prune_spec = _resolve(args.prune, "PRUNE", str, "none")
    threads = _resolve(args.threads, "THREADS", int, 1)
    if norm not in NORMS:
        raise UsageError(f"--norm must be one of {NORMS}, got {norm!r}")
    if threads < 1:
        raise UsageError(f"--threads must be >= 1, got {threads}")
    try:
        eps = EpsilonPolicy(mode=eps_mode, value=eps_value)
    except ValueError as exc:
        raise UsageError(str(exc))
    strategy, params = parse_prune_spec(prune_spec)

    e = _load_model_or_die(args.model)
    values, row = _resolve_instance(args, e)
    k_prime, notes = _select_kprime(e, strategy, params, row)
    pred, _ = predict_ensemble(e, values)
    try:
        result = explain(e, values, eps, norm=norm, k_prime=k_prime,
                         target=args.target, label=args.label, threads=threads)
    except ValueError as exc:
        raise DataError(str(exc))

    config = {
        "command": "explain",
        "model": args.model,
        "row": row,
        "epsilon_mode": eps_mode,
        "epsilon": eps_value,
        "norm": norm,
        "prune": prune_spec,
        "threads": threads,
        "target": args.target,
        "label": args.label,
    }
    payload = {
        "model_version": MODEL_VERSION,
        "config": config,
        "original": [float(v) for v in values],
        "prediction": int(pred),
        "found": isinstance(result, Counterfactual),
        "counterfactual": None,
        "delta": [],
        "distance": None,
        "norm": norm,
        "epsilon_policy": {"mode": eps.mode, "value": eps.value},
        "k_prime_used": k_prime,
        "n_candidates_evaluated": result.n_candidates_evaluated,
        "truncation_certificate": (
            True if k_prime is None else margin_certificate(e, values, k_prime)
        ),
        "notes": notes,
    }
    if isinstance(result, Counterfactual):
        payload["counterfactual"] = [float(v) for v in result.transformed]
        payload["delta"] = [
            {"feature": e.schema[f].name, "index": f, "old": old, "new": new}
            for f, (old, new) in sorted(result.delta.items())
        ]
        payload["distance"] = result.distance
    else:
        payload["message"] = result.message
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        _write_text_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- reports


def cmd_report_alphas(args) -> int:
    e = _load_model_or_die(args.model)
    config = {"command": "report-alphas", "model": args.model}
    lines = _config_comment_lines(config)
    lines.append("k,alpha,cumulative_mass")
    for k, a, cum in alpha_report_rows(e):
        lines.append(f"{k},{a!r},{cum!r}")
    _write_text_atomic(args.out, "\n".join(lines) + "\n")
    print(f"alpha report written: {args.out} ({e.k} rows)")
    return EXIT_OK


def cmd_report_trajectories(args) -> int:
    e = _load_model_or_die(args.model)
    try:
        indices = [int(tok) for tok in args.instances.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse --instances {args.instances!r}")
    for i in indices:
        if not 0 <= i < e.n_train:
            raise DataError(
                f"instance {i} was not in the training split "
                f"(trajectories stored for rows 0..{e.n_train - 1}); "
                "weight trajectories exist only for training instances"
            )
    os.makedirs(args.out_dir, exist_ok=True)
    for i in indices:
        config = {"command": "report-trajectories", "model": args.model, "instance": i}
        lines = _config_comment_lines(config)
        lines.append("k,w")
        for k, w in trajectory_report_rows(e, i):
            lines.append(f"{k},{w!r}")
        path = os.path.join(args.out_dir, f"trajectory_{i}.csv")
        _write_text_atomic(path, "\n".join(lines) + "\n")
        print(f"trajectory written: {path} ({e.k + 1} rows)")
    return EXIT_OK


# ---------------------------------------------------------------- verify


def cmd_verify(args) -> int:
    eps_mode = _resolve(args.epsilon_mode, "EPSILON_MODE", str, "range_scaled")
    eps_value = _resolve(args.epsilon, "EPSILON", float, 0.01)
    norm = _resolve(args.norm, "NORM", str, "L2_std")
    try:
        eps = EpsilonPolicy(mode=eps_mode, value=eps_value)
    except ValueError as exc:
        raise UsageError(str(exc))
    e = _load_model_or_die(args.model)
    ds = _load_dataset(args)
    if ds.n_features != e.n_features:
        raise DataError(
            f"dataset has {ds.n_features} features, model expects {e.n_features}"
        )
    n = min(args.n_instances, ds.n_rows)
    slack = args.slack

    rows = []
    violations = 0
    solvable = 0
    agreements = 0
    for i in range(n):
        x = ds.rows[i]
        res = explain(e, x, eps, norm=norm)
        if isinstance(res, Counterfactual):
            pred_orig, _ = predict_ensemble(e, x)
            pred_new, _ = predict_ensemble(e, res.transformed)
            if pred_new == pred_orig:
                violations += 1
                log.error("flip-soundness violation on instance %d", i)
        grid = oracle_grid(e, x, eps, resolution=args.resolution)
        oracle = brute_force_oracle(e, x, grid, norm=norm)
        d_e = res.distance if isinstance(res, Counterfactual) else None
        d_o = oracle.distance if isinstance(oracle, Counterfactual) else None
        if d_o is not None:
            solvable += 1
            agree = d_e is not None and abs(d_e - d_o) <= slack
        else:
            agree = d_e is None
        if agree and d_o is not None:
            agreements += 1
        if d_o is not None and d_e is not None and d_o < d_e - slack:
            log.info(
                "instance %d: oracle found a closer flip (%.6g < %.6g), "
                "a multi-tree combination outside the per-path search", i, d_o, d_e,
            )
        rows.append((i, d_e, d_o, agree))

    out = io.StringIO()
    config = {
        "command": "verify", "model": args.model, "n_instances": n,
        "resolution": args.resolution, "epsilon_mode": eps_mode,
        "epsilon": eps_value, "norm": norm, "slack": slack,
    }
    for line in _config_comment_lines(config):
        out.write(line + "\n")
    out.write("instance,explain_distance,oracle_distance,agree\n")
    for i, d_e, d_o, agree in rows:
        fe = "" if d_e is None else repr(d_e)
        fo = "" if d_o is None else repr(d_o)
        out.write(f"{i},{fe},{fo},{str(agree).lower()}\n")
    text = out.getvalue()
    if args.out:
        _write_text_atomic(args.out, text)
    sys.stdout.write(text)
    rate = agreements / solvable if solvable else 1.0
    print(f"# summary: {n} instances, {solvable} solvable, "
          f"agreement {rate:.3f}, soundness violations {violations}")
    if violations:
        return EXIT_SOUNDNESS
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_data_args(p, require_data: bool):
    g = p.add_mutually_exclusive_group(required=require_data)
    g.add_argument("--data", help="CSV file with a header row and a label column")
    g.add_argument("--demo", action="store_true",
                   help="use the bundled synthetic demo dataset")
    p.add_argument("--label-column", default="label",
                   help="name of the label column (default: label)")
    p.add_argument("--label-map",
                   help="raw-to-sign label mapping, e.g. yes=+1,no=-1")


def _add_epsilon_args(p):
    p.add_argument("--epsilon-mode", choices=["absolute", "range_scaled"],
                   help="epsilon policy mode (default: range_scaled)")
    p.add_argument("--epsilon", type=float,
                   help="epsilon value (default: 0.01)")
    p.add_argument("--norm", choices=list(NORMS),
                   help="distance norm (default: L2_std)")


def build_parser() -> _Parser:
    parser = _Parser(prog="tweakboost",
                     description="boosted-ensemble training and counterfactual explanations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an AdaBoost ensemble on a CSV or the demo data")
    _add_data_args(p, require_data=True)
    p.add_argument("--k", type=int, help="boosting rounds (default: 100)")
    p.add_argument("--depth", type=int, help="max tree depth (default: 4)")
    p.add_argument("--seed", type=int, help="config seed recorded in the model (default: 0)")
    p.add_argument("--out", default="model.json", help="model output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="counterfactual explanation for one instance")
    p.add_argument("--model", required=True, help="trained model JSON")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--row", type=int, help="row index into --data (0-based)")
    g.add_argument("--instance", help="inline comma-separated feature vector")
    p.add_argument("--data", help="CSV the --row index refers to")
    p.add_argument("--label-column", default="label")
    p.add_argument("--label-map")
    p.add_argument("--demo", action="store_true",
                   help="use the demo dataset as --data")
    _add_epsilon_args(p)
    p.add_argument("--prune",
                   help="none | alpha-mass:F | trajectory:W,TOL | both:F,W,TOL (default: none)")
    p.add_argument("--threads", type=int, help="candidate evaluation threads (default: 1)")
    p.add_argument("--target", type=int, choices=[-1, 1],
                   help="required flipped class; must oppose the current prediction")
    p.add_argument("--label", type=int, choices=[-1, 1],
                   help="assert the instance's true label equals the prediction")
    p.add_argument("--out", help="write the explanation JSON here instead of stdout")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report-alphas", help="CSV of per-round alpha and cumulative mass")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report_alphas)

    p = sub.add_parser("report-trajectories",
                       help="per-instance CSVs of the stored weight trajectories")
    p.add_argument("--model", required=True)
    p.add_argument("--instances", required=True,
                   help="comma-separated training row indices, e.g. 0,5,17")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report_trajectories)

    p = sub.add_parser("verify", help="compare explain against the brute-force grid oracle")
    p.add_argument("--model", required=True)
    _add_data_args(p, require_data=True)
    p.add_argument("--n-instances", type=int, default=20)
    p.add_argument("--resolution", type=int, default=50,
                   help="grid points per feature for the oracle")
    p.add_argument("--slack", type=float, default=1e-9,
                   help="distance tolerance for counting agreement")
    _add_epsilon_args(p)
    p.add_argument("--out", help="also write the comparison CSV here")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TWEAKBOOST_LOGLEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tweakboost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"tweakboost: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GridGuardError as exc:
        print(f"tweakboost: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainError as exc:
        print(f"tweakboost: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
