"""Command-line interface.

Commands
--------
simulate   write locations/observations CSVs for a synthetic scenario
expand     learn the dimension expansion and its thin-plate maps
predict    krige new sites through a learned expansion
cv         leave-k-out cross-validation over a lambda1 x lambda2 grid
baseline   image-warping sweep with folding reports

Every flag may also be given in a ``key=value`` file passed with
``--config`` (keys are flag names without dashes, ``-`` or ``_``); flags on
the command line win. ``DIMEXP_OUT`` sets the default output directory.

Seeds: ``--seed`` is the only source of randomness. ``simulate`` spawns two
child streams from it (site layout, field draws); ``expand`` uses it for
the latent perturbation; ``cv`` uses it for the fold partition and for the
per-fold perturbation.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .expansion import ExpansionConfig, ExpansionSolution, config_dict, learn_expansion
from .geo import Locations, pairwise_distances
from .prediction import NumericalError, cross_validate, predict_new_sites
from .simulate import (
    cities_scenario,
    ellipsoid_scenario,
    latent_scenario,
    stationary_locations,
)
from .tps import LatentMap, map_latent
from .variogram import bin_dispersions, empirical_dispersion, evaluate_variogram, fit_variogram
from .warp import detect_folding, expansion_mapping, folding_sweep, hull_grid

logger = logging.getLogger("dimexp")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SCENARIOS = ("ellipsoid", "stationary", "cities")


@dataclass
class RunConfig:
    command: str
    out: Path
    params: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {"command": self.command, "format_version": io.FORMAT_VERSION,
                "params": {k: v for k, v in sorted(self.params.items())
                           if k not in ("func", "config", "out", "jobs", "verbose")}}


def _floats(text: str):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _check_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")


def _standardize(X: Locations, Y: np.ndarray, on: bool):
    """Scale coordinates to unit mean inter-site distance and values to unit sd."""
    if not on:
        return X, Y, 1.0, 1.0
    D = pairwise_distances(X)
    cs = float(D.sum() / (D.shape[0] * (D.shape[0] - 1)))
    vs = float(np.nanstd(Y)) or 1.0
    return Locations(X.coords / cs, X.site_ids), Y / vs, cs, vs


def _expansion_cfg(a) -> ExpansionConfig:
    return ExpansionConfig(p_max=a.pmax, lambda1=a.lambda1, seed=a.seed,
                           max_iters=a.max_iters, norm=a.norm)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(a, run: RunConfig):
    if a.scenario == "ellipsoid":
        X, hidden, Y = ellipsoid_scenario(a.s, a.n, a.seed)
    elif a.scenario == "stationary":
        ss = np.random.SeedSequence(a.seed).spawn(2)
        X = stationary_locations(a.s, int(ss[0].generate_state(1)[0]))
        hidden = np.zeros((a.s, 0))
        Y = latent_scenario(X, hidden, a.n, int(ss[1].generate_state(1)[0]), range_=0.7)
    else:
        ss = np.random.SeedSequence(a.seed).spawn(2)
        X, hidden = cities_scenario(a.s, int(ss[0].generate_state(1)[0]))
        Y = latent_scenario(X, hidden, a.n, int(ss[1].generate_state(1)[0]), range_=0.7)
    io.write_locations(run.out / "locations.csv", X)
    io.write_observations(run.out / "observations.csv", X.site_ids, Y)
    if hidden.shape[1]:
        io.write_rows(run.out / "hidden.csv", ["site_id"] + [f"h{k + 1}" for k in range(hidden.shape[1])],
                      [[sid, *map(float, row)] for sid, row in zip(X.site_ids, hidden)])
    io.write_json(run.out / "simulate.json", run.echo())
    logger.info("wrote %d sites x %d replicates to %s", X.n_sites, Y.shape[1], run.out)


def _load(a):
    _check_file(a.locations)
    _check_file(a.observations)
    X = io.read_locations(a.locations)
    Y = io.read_observations(a.observations, X.site_ids)
    return X, Y


def cmd_expand(a, run: RunConfig):
    X, Y = _load(a)
    Xs, Ys, cs, vs = _standardize(X, Y, a.standardize)
    disp = empirical_dispersion(Ys)
    cfg = _expansion_cfg(a)
    sol = learn_expansion(Xs, disp, cfg)
    lm = map_latent(Xs, sol, a.lambda2, a.lambda2_units)

    doc = {**run.echo(), "solution": sol.to_dict(), "expansion_config": config_dict(cfg),
           "coord_scale": cs, "value_scale": vs, "site_ids": list(X.site_ids)}
    io.write_json(run.out / "solution.json", doc)
    io.write_json(run.out / "tps.json", {**run.echo(), "map": lm.to_dict()})

    D0 = pairwise_distances(Xs)
    fit0 = fit_variogram(disp, D0)
    b0 = bin_dispersions(disp, D0, a.bins)
    io.write_binned(run.out / "variogram_before.csv", b0, evaluate_variogram(fit0.params, b0.bin_centers))
    D1 = pairwise_distances(np.hstack([Xs.coords, lm.Z_smoothed]))
    b1 = bin_dispersions(disp, D1, a.bins)
    io.write_binned(run.out / "variogram_after.csv", b1, evaluate_variogram(sol.phi, b1.bin_centers))
    if lm.models and Xs.dim == 2:
        G = hull_grid(Xs.coords, a.grid)
        Zg = lm(G)
        ks = sorted(lm.models)
        io.write_rows(run.out / "latent_grid.csv", ["x1", "x2"] + [f"z_{k}" for k in ks],
                      [[float(g[0]), float(g[1]), *(float(z[k]) for k in ks)] for g, z in zip(G, Zg)])
    logger.info("active latent dims: %s (lambda1=%g)", list(sol.active_dims), a.lambda1)


def cmd_predict(a, run: RunConfig):
    X, Y = _load(a)
    for p in (a.solution, a.tps, a.targets):
        _check_file(p)
    sdoc = io.read_json(a.solution)
    sol = ExpansionSolution.from_dict(sdoc["solution"])
    lm = LatentMap.from_dict(io.read_json(a.tps)["map"])
    cs, vs = float(sdoc.get("coord_scale", 1.0)), float(sdoc.get("value_scale", 1.0))
    T = io.read_locations(a.targets)
    rep = Y.shape[1] - 1 if a.replicate is None else a.replicate
    if not 0 <= rep < Y.shape[1]:
        raise ValueError(f"replicate column {rep} out of range (0..{Y.shape[1] - 1})")
    res = predict_new_sites(X.coords / cs, Y[:, rep] / vs, sol, lm, T.coords / cs, a.ordinary)
    rows = [[sid, *map(float, xy[:2]), float(p) * vs, float(v) * vs * vs]
            for sid, xy, p, v in zip(T.site_ids, T.coords, res.predictions, res.variances)]
    io.write_rows(run.out / "predictions.csv", ["site_id", "x1", "x2", "pred", "var"], rows)
    io.write_json(run.out / "predict.json", {**run.echo(), "replicate": rep})


def cmd_cv(a, run: RunConfig):
    X, Y = _load(a)
    Xs, Ys, cs, vs = _standardize(X, Y, a.standardize)
    l1 = _floats(a.lambda1_grid)
    l2 = _floats(a.lambda2_grid)
    grid = cross_validate(Xs, Ys, l1, l2, k=a.k, seed=a.seed, cfg=_expansion_cfg(a),
                          lambda2_units=a.lambda2_units, jobs=a.jobs)
    rows = []
    for f in range(len(grid.folds)):
        for i, x1 in enumerate(l1):
            for j, x2 in enumerate(l2):
                rows.append([float(x1), float(x2), f, float(grid.fold_rmse[f, i, j] * vs),
                             int(grid.n_failures[f, i, j])])
    io.write_rows(run.out / "cv.csv", ["lambda1", "lambda2", "fold", "rmse", "n_failures"], rows)
    b1, b2, r = grid.argmin
    io.write_json(run.out / "cv_summary.json", {
        **run.echo(), "argmin": {"lambda1": b1, "lambda2": b2, "rmse": r * vs},
        "rmse": (grid.rmse * vs).tolist(), "lambda1_values": l1, "lambda2_values": l2,
        "n_failures": grid.n_failures.sum(axis=0).tolist(), "k": a.k,
        "folds": [f.tolist() for f in grid.folds]})


def cmd_baseline(a, run: RunConfig):
    X, Y = _load(a)
    Xs, Ys, cs, vs = _standardize(X, Y, a.standardize)
    disp = empirical_dispersion(Ys)
    lams = _floats(a.lambda_iw_grid)
    sweep = folding_sweep(Xs, disp, lams, a.grid)
    reports = []
    for i, (wm, fr) in enumerate(sweep):
        io.write_rows(run.out / f"warp_{i}.csv", ["site_id", "wx1", "wx2"],
                      [[sid, float(w[0]) * cs, float(w[1]) * cs]
                       for sid, w in zip(X.site_ids, wm.mapped(Xs.coords))])
        reports.append({"lambda_iw": wm.lambda_iw, "misfit": wm.misfit, "file": f"warp_{i}.csv",
                        **fr.to_dict()})
    doc = {**run.echo(), "baseline": reports}
    if a.compare_expansion:
        sol = learn_expansion(Xs, disp, _expansion_cfg(a))
        lm = map_latent(Xs, sol, a.lambda2, a.lambda2_units)
        doc["expansion"] = {"misfit": sol.misfit, "active_dims": list(sol.active_dims),
                            **detect_folding(expansion_mapping(lm), Xs.coords, a.grid).to_dict()}
    io.write_json(run.out / "folding.json", doc)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_data(p):
    p.add_argument("--locations", required=True, help="locations CSV (site_id,x1,...,xd)")
    p.add_argument("--observations", required=True, help="observations CSV (site_id,replicate,value)")
    p.add_argument("--standardize", action="store_true",
                   help="scale coordinates to unit mean distance and values to unit sd")


def _add_expansion(p):
    p.add_argument("--lambda1", type=_nonneg_float, default=0.5)
    p.add_argument("--pmax", type=_positive_int, default=3)
    p.add_argument("--max-iters", type=_positive_int, default=300)
    p.add_argument("--norm", choices=("group", "l1"), default="group")


def _add_lambda2(p):
    p.add_argument("--lambda2", type=_nonneg_float, default=1e-4)
    p.add_argument("--lambda2-units", choices=("raw", "normalized"), default="normalized")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file mirroring the flags")
    common.add_argument("--out", default=os.environ.get("DIMEXP_OUT", "out"))
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=_positive_int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dimexp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic scenario")
    p.add_argument("--scenario", choices=SCENARIOS, default="ellipsoid")
    p.add_argument("--s", type=int, default=100)
    p.add_argument("--n", type=_positive_int, default=1000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("expand", parents=[common], help="learn the dimension expansion")
    _add_data(p)
    _add_expansion(p)
    _add_lambda2(p)
    p.add_argument("--bins", type=_positive_int, default=20)
    p.add_argument("--grid", type=_positive_int, default=50)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("predict", parents=[common], help="predict at new sites")
    _add_data(p)
    p.add_argument("--solution", required=True)
    p.add_argument("--tps", required=True)
    p.add_argument("--targets", required=True, help="locations CSV of sites to predict")
    p.add_argument("--replicate", type=int, default=None,
                   help="observation column to krige (default: the last replicate)")
    p.add_argument("--ordinary", action="store_true", help="ordinary instead of simple kriging")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", parents=[common], help="cross-validate lambda1 x lambda2")
    _add_data(p)
    _add_expansion(p)
    p.add_argument("--lambda1-grid", default=",".join(str(10.0 ** e) for e in (-1, 0, 1, 4.5)))
    p.add_argument("--lambda2-grid", default="1e-4,1e-2,1")
    p.add_argument("--lambda2-units", choices=("raw", "normalized"), default="normalized")
    p.add_argument("--k", type=_positive_int, default=10)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("baseline", parents=[common], help="image-warping folding sweep")
    _add_data(p)
    _add_expansion(p)
    _add_lambda2(p)
    p.add_argument("--lambda-iw-grid", default="10,1,0.1,0.01,0.001,0.0001")
    p.add_argument("--grid", type=_positive_int, default=50)
    p.add_argument("--compare-expansion", action="store_true")
    p.set_defaults(func=cmd_baseline)
    return parser


def _config_defaults(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value")
            k, v = (t.strip() for t in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _apply_config(parser, argv):
    """Re-parse with values from ``--config`` as defaults so explicit flags win."""
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    if not known.config or known.command not in subs:
        return parser.parse_args(argv)
    _check_file(known.config)
    conf = _config_defaults(known.config)
    sub = subs[known.command]
    known_conf = known.config
    known = {act.dest: act for act in sub._actions}
    defaults = {}
    for k, v in conf.items():
        if k not in known:
            raise ValueError(f"{known_conf}: unknown key {k!r}")
        act = known[k]
        if act.nargs == 0:  # store_true
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = act.type(v) if act.type else v
    for act in sub._actions:
        if act.dest in defaults:
            act.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        if args.command == "simulate" and args.s < 4:
            raise ValueError("--s must be >= 4")
        out = io.ensure_dir(args.out)
        run = RunConfig(args.command, out, dict(vars(args)))
        args.func(args, run)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
