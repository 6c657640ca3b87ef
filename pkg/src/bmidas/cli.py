"""Batch command surface: simulate, fit, predict, evaluate, importance.

Every run writes its artifacts plus a JSON manifest (config hash, seed,
package version) into the output directory; repeated invocations with the
same seed produce byte-identical files.  Exit codes: 0 ok, 2 configuration
or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .dgp import parse_dgp_id, run_replication_study, write_study_outputs
from .draws_io import config_hash, load_draws, save_draws
from .evaluation import (
    TAU_GRID,
    build_loss_table,
    dm_test,
    dummy_regression,
    load_recession_calendar,
    model_confidence_set,
    significance_tier,
)
from .pipeline import assemble_design, combine_panel, ingest_csv, prediction_input
from .sampler import (
    ModelConfig,
    NumericalFailure,
    draw_predictive,
    parse_model_id,
    run_chain,
)
from .varimp import lasso_importance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_STUDY_MODELS = "GP-hom-xalm,GP-hom-br,BLR-hom-br,BART-hom-br"


class ConfigError(ValueError):
    pass


def _write_manifest(out_dir: Path, name: str, payload: dict) -> None:
    body = {"artifact": name, "version": __version__}
    body.update(payload)
    with open(out_dir / f"{name}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_config_file(path: str) -> dict:
    """Flat key=value model configuration; unknown keys are rejected."""
    fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    out: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "theta1":
                out.setdefault("theta_init", [0.0, 0.0])
                out["theta_init"][0] = float(value)
                continue
            if key == "theta2":
                out.setdefault("theta_init", [0.0, 0.0])
                out["theta_init"][1] = float(value)
                continue
            if key == "theta_init":
                raise ConfigError(f"{path}:{lineno}: set theta1/theta2 instead of theta_init")
            if key not in fields:
                raise ConfigError(f"{path}:{lineno}: unknown configuration key {key!r}")
            if key in ("horizon", "sigma_prior_shape", "sigma_prior_scale"):
                out[key] = float(value)
            elif key in ("mean", "variance", "scheme", "info_set"):
                out[key] = value
            else:
                out[key] = int(value)
    if "theta_init" in out:
        out["theta_init"] = tuple(out["theta_init"])
    return out


def build_model_config(args) -> ModelConfig:
    kwargs = read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    try:
        return ModelConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_panel(args):
    target = ingest_csv(args.target_csv, args.target_schema)
    predictors = None
    if args.predictors_csv:
        if not args.predictors_schema:
            raise ConfigError("--predictors-schema is required with --predictors-csv")
        predictors = ingest_csv(args.predictors_csv, args.predictors_schema)
    return combine_panel(target, predictors, m=args.m)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    specs = [parse_dgp_id(d, n_low=args.tl) for d in args.dgp.split(",")]
    mcmc = {"iters": args.iters, "burn": args.burn, "thin": args.thin}
    models = [parse_model_id(mid, **mcmc) for mid in args.models.split(",")]
    result = run_replication_study(
        specs, models, n_reps=args.R, seed=seed, n_workers=args.threads
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_study_outputs(result, out, benchmark=args.benchmark)
    _write_manifest(
        out,
        "simulate",
        {
            "seed": seed,
            "dgps": [s.dgp_id() for s in specs],
            "models": [m.model_id() for m in models],
            "replications": args.R,
            "mcmc": mcmc,
        },
    )
    print(f"wrote study outputs to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = build_model_config(args)
    panel = _load_panel(args)
    if config.m != panel.m:
        config = dataclasses.replace(config, m=panel.m)
    t_end = args.t_end if args.t_end is not None else panel.n_low
    W = config.weight_matrix()
    design = assemble_design(panel, W, config.n_target_lags, config.horizon, t_end=t_end)
    pred = prediction_input(
        panel, config.n_target_lags, config.n_hf_lags, config.horizon, t_end + 1
    )
    rng = np.random.default_rng(config.seed)
    draws = run_chain(config, design, rng, pred=pred)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / args.out_name
    save_draws(path, draws)
    _write_manifest(
        out,
        path.stem,
        {
            "seed": config.seed,
            "config_hash": config_hash(config),
            "model": config.model_id(),
            "n_retained": draws.n_draws,
            "origin_t": t_end + 1,
            "horizon": config.horizon,
        },
    )
    print(f"wrote {draws.n_draws} retained draws to {path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    draws = load_draws(args.draws)
    seed = args.seed if args.seed is not None else draws.config.seed + 1
    dist = draw_predictive(draws, draws.config, np.random.default_rng(seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"draw": np.arange(len(dist.values)), "value": dist.values}).to_csv(
        out / "predictive_draws.csv", index=False
    )
    pd.DataFrame({"tau": TAU_GRID, "value": dist.quantile(TAU_GRID)}).to_csv(
        out / "predictive_quantiles.csv", index=False
    )
    _write_manifest(
        out,
        "predict",
        {
            "seed": seed,
            "config_hash": config_hash(draws.config),
            "model": draws.config.model_id(),
            "origin": list(draws.origin) if draws.origin else None,
            "n_draws": int(len(dist.values)),
        },
    )
    print(f"wrote predictive draws and quantiles to {out}")
    return EXIT_OK


def _model_features(model_ids) -> pd.DataFrame:
    rows = []
    for mid in model_ids:
        parts = str(mid).split("-")
        if len(parts) < 3:
            raise ConfigError(f"model id {mid!r} is not mean-variance-midas[-size]")
        rows.append(
            {
                "mean": parts[0],
                "variance": parts[1],
                "midas": parts[2],
                "size": parts[3] if len(parts) > 3 else "s",
            }
        )
    return pd.DataFrame(rows)


def cmd_evaluate(args) -> int:
    preds = pd.read_csv(args.predictions)
    required = ["model", "origin", "h", "draw", "value", "realized"]
    missing = [c for c in required if c not in preds.columns]
    if missing:
        raise ConfigError(
            f"predictions file {args.predictions} is missing column(s): {', '.join(missing)}"
        )
    recessions = load_recession_calendar(args.recessions) if args.recessions else None
    losses = build_loss_table(preds, recessions=recessions)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    losses.to_csv(out / "losses.csv", index=False)

    # pairwise DM tests on the full-sample CRPS series, per horizon
    crps = losses[(losses["metric"] == "crps") & (losses["subsample"] == "Full")]
    dm_rows = []
    mcs_rows = []
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    for h, g in crps.groupby("h"):
        wide = g.pivot_table(index="origin", columns="model", values="value").dropna()
        models = list(wide.columns)
        if len(wide) >= 10:
            for i, mi in enumerate(models):
                for mj in models[i + 1 :]:
                    stat, pval = dm_test(wide[mi].to_numpy(), wide[mj].to_numpy(), h)
                    dm_rows.append(
                        {
                            "h": h,
                            "model_a": mi,
                            "model_b": mj,
                            "stat": stat,
                            "pvalue": pval,
                            "tier": significance_tier(pval),
                        }
                    )
        if len(models) >= 2 and len(wide) >= 20:
            res = model_confidence_set(
                wide.to_numpy(), models, alpha=args.alpha, rng=rng
            )
            for model in models:
                mcs_rows.append(
                    {
                        "h": h,
                        "model": model,
                        "included": model in res.included,
                        "pvalue": res.pvalues.get(model, np.nan),
                    }
                )
    pd.DataFrame(dm_rows).to_csv(out / "dm.csv", index=False)
    pd.DataFrame(mcs_rows).to_csv(out / "mcs.csv", index=False)

    # dummy regression of log mean CRPS on model features
    agg = (
        losses[losses["metric"] == "crps"]
        .groupby(["model", "h", "subsample"])["value"]
        .mean()
        .reset_index()
    )
    agg = agg[agg["value"] > 0]
    if len(agg) and agg["model"].nunique() > 1:
        feats = _model_features(agg["model"])
        keep = [c for c in feats.columns if feats[c].nunique() > 1]
        if keep:
            try:
                table = dummy_regression(
                    np.log(agg["value"].to_numpy()),
                    feats[keep],
                    baselines={"mean": "BLR", "variance": "hom", "midas": "br", "size": "s"},
                )
                table.to_csv(out / "dummy_regression.csv", index=False)
            except ValueError as exc:
                # too few models can leave the feature dummies collinear
                print(f"dummy regression skipped: {exc}", file=sys.stderr)
    _write_manifest(
        out,
        "evaluate",
        {"seed": args.seed if args.seed is not None else 0, "alpha": args.alpha},
    )
    print(f"wrote evaluation tables to {out}")
    return EXIT_OK


def cmd_importance(args) -> int:
    med = pd.read_csv(args.medians)
    if "value" not in med.columns:
        raise ConfigError(f"{args.medians} needs a 'value' column of predictive medians")
    X = pd.read_csv(args.design)
    drop = [c for c in ("origin",) if c in X.columns]
    X = X.drop(columns=drop)
    if len(X) != len(med):
        raise ConfigError("medians and design files have different numbers of rows")
    result = lasso_importance(
        med["value"].to_numpy(), X.to_numpy(dtype=float), column_names=list(X.columns)
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"column": result.column_names, "coef": result.coef}).to_csv(
        out / "importance_columns.csv", index=False
    )
    table = result.by_variable.rename("coef").rename_axis("variable").reset_index()
    table.insert(0, "model", args.model)
    table.insert(1, "h", args.horizon)
    table.to_csv(out / "importance_variables.csv", index=False)
    _write_manifest(
        out,
        "importance",
        {"rho": result.rho, "all_zero": result.all_zero, "seed": args.seed or 0},
    )
    print(f"wrote importance tables to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmidas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="key=value model configuration file")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out-dir", default="out")

    p = sub.add_parser("simulate", help="synthetic replication study")
    common(p)
    p.add_argument("--dgp", required=True, help="comma list, e.g. NL-fast-K10")
    p.add_argument("--R", type=int, default=50)
    p.add_argument("--tl", type=int, default=250, help="in-sample low-frequency length")
    p.add_argument("--models", default=DEFAULT_STUDY_MODELS)
    p.add_argument("--benchmark", default="BLR-hom-br")
    p.add_argument("--iters", type=int, default=12000)
    p.add_argument("--burn", type=int, default=3000)
    p.add_argument("--thin", type=int, default=3)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model on a panel")
    common(p)
    p.add_argument("--target-csv", required=True)
    p.add_argument("--target-schema", required=True)
    p.add_argument("--predictors-csv", default=None)
    p.add_argument("--predictors-schema", default=None)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--t-end", type=int, default=None, help="last training target (1-based)")
    p.add_argument("--out-name", default="draws.bin")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive distribution from saved draws")
    common(p)
    p.add_argument("--draws", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="loss tables, DM tests, MCS, dummy regression")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--recessions", default=None)
    p.add_argument("--alpha", type=float, default=0.10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="Lasso importance from predictive medians")
    common(p)
    p.add_argument("--medians", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--model", default="", help="model id label for the output table")
    p.add_argument("--horizon", type=float, default=0.0, help="horizon label for the output table")
    p.set_defaults(func=cmd_importance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
