"""Command-line entry point ``homogamy``.

Every subcommand writes ``<subcommand>-<timestamp>.csv`` (plus, for some,
companion CSVs) and a ``.manifest`` file into the output directory.
Exit status: 0 success, 1 validation error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import logging
import sys
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from .branching import (branching_rates, extinction_probabilities, growth_spectrum,
                        ResidentContext)
from .config import ConfigError, manifest_text, resolve
from .meanfield import chi_AP, convergence_condition, integrate
from .rates import ModelParams, PopState, birth_rates, pair_rate_aggregate
from .ssa import run_replica, write_trajectory_csv

log = logging.getLogger("homogamy")

SUBCOMMANDS = ("check-rates", "extinction-prob", "meanfield", "simulate", "ensemble", "figure1")

# flag name -> config key
_FLAG_KEYS = {
    "b": "b", "d": "d", "c": "c", "beta1": "beta1", "beta2": "beta2", "rho_a": "rho_a",
    "K": "K", "mutant": "mutant", "eps": "eps", "mu": "mu", "seed": "seed",
    "max_events": "max_events", "replicas": "replicas", "out": "out",
    "samples": "samples", "preset": "preset", "t_end": "t_end", "points": "points",
    "allow_subcritical": "allow_subcritical", "record_stride": "record_stride",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--replicas", type=int, metavar="N")
    common.add_argument("--K", type=float, action="append", metavar="N")
    for name in ("b", "d", "c", "beta1", "beta2"):
        common.add_argument(f"--{name}", type=float, metavar="FLOAT")
    common.add_argument("--rho-a", dest="rho_a", type=float, metavar="FLOAT")
    common.add_argument("--mutant", choices=("A", "a"))
    common.add_argument("--eps", type=float, metavar="FLOAT")
    common.add_argument("--mu", type=float, metavar="FLOAT")
    common.add_argument("--max-events", dest="max_events", type=int, metavar="N")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="homogamy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check-rates", parents=[common],
                       help="compare closed-form birth rates with the mating-pair sum")
    p.add_argument("--samples", type=int, metavar="N")
    sub.add_parser("extinction-prob", parents=[common],
                   help="extinction probabilities of the branching approximation")
    p = sub.add_parser("meanfield", parents=[common], help="integrate the mean-field system")
    p.add_argument("--preset", choices=("none", "prop35"))
    p.add_argument("--t-end", dest="t_end", type=float, metavar="T")
    p = sub.add_parser("simulate", parents=[common], help="run one stochastic replica")
    p.add_argument("--record-stride", dest="record_stride", type=int, metavar="N")
    p = sub.add_parser("ensemble", parents=[common], help="run replica ensembles over K")
    p.add_argument("--allow-subcritical", dest="allow_subcritical", action="store_const",
                   const=True)
    p = sub.add_parser("figure1", parents=[common], help="extinction probability curves")
    p.add_argument("--points", type=int, metavar="N")
    return parser


def _flags(args) -> dict:
    return {key: getattr(args, name) for name, key in _FLAG_KEYS.items()
            if getattr(args, name, None) is not None}


def _derived(cfg) -> dict:
    sim = cfg.sim_config()
    model = branching_rates(ResidentContext(cfg["rho_a"]), sim.params)
    spec = growth_spectrum(model.J)
    q = extinction_probabilities(model)
    return {"lambda": spec.lam, "q_A": q.q_A, "q_a": q.q_a, "pi_A": float(spec.pi[0]),
            "mu (resolved)": sim.mu, "max_events (resolved)": sim.max_events}


def _timestamp() -> str:
    return _dt.datetime.now().strftime("%Y%m%dT%H%M%S%f")


class _Outputs:
    def __init__(self, cfg, command):
        self.dir = Path(cfg["out"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stem = f"{command}-{_timestamp()}"
        self.files = []

    def path(self, suffix=""):
        p = self.dir / f"{self.stem}{suffix}.csv"
        self.files.append(p)
        return p

    def manifest(self, cfg, command):
        p = self.dir / f"{self.stem}.manifest"
        header = f"homogamy {command}\noutputs: " + " ".join(f.name for f in self.files)
        p.write_text(manifest_text(cfg, _derived(cfg), header), encoding="utf-8")
        return p


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _single_K(cfg):
    if len(cfg["K"]) != 1:
        raise ConfigError("K: this subcommand takes a single value")
    return cfg["K"][0]


def cmd_check_rates(cfg, out) -> int:
    rng = np.random.default_rng(cfg["seed"])
    worst = 0.0
    with open(out.path(), "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["sample", "n_AP", "n_Ap", "n_aP", "n_ap", "b", "beta1", "beta2",
                    "max_relative_discrepancy"])
        for i in range(cfg["samples"]):
            counts = rng.integers(0, 1000, size=4)
            if counts.sum() == 0:
                counts[0] = 1
            params = ModelParams(b=float(rng.uniform(0.1, 5)), d=0.0, c=1.0, K=1000.0,
                                 beta1=float(rng.uniform(0, 2)), beta2=float(rng.uniform(0, 1)))
            state = PopState.from_counts(counts)
            a = birth_rates(state, params)
            ref = pair_rate_aggregate(state, params)
            err = float(np.max(np.abs(a - ref) / np.maximum(np.abs(ref), 1e-300)))
            err = 0.0 if np.all(a == ref) else err
            worst = max(worst, err)
            w.writerow([i, *map(int, counts), repr(params.b), repr(params.beta1),
                        repr(params.beta2), repr(err)])
    print(f"samples={cfg['samples']} max-discrepancy={worst:.3e}")
    return 0 if worst < 1e-12 else 2


def cmd_extinction_prob(cfg, out) -> int:
    params = cfg.model_params(_single_K(cfg))
    model = branching_rates(ResidentContext(cfg["rho_a"]), params)
    spec = growth_spectrum(model.J)
    q = extinction_probabilities(model)
    with open(out.path(), "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["b", "beta1", "beta2", "rho_A", "lambda", "pi_A", "q_A", "q_a"])
        w.writerow([repr(v) for v in (params.b, params.beta1, params.beta2, cfg["rho_a"],
                                      spec.lam, float(spec.pi[0]), q.q_A, q.q_a)])
    print(f"q_A={q.q_A:.12g} q_a={q.q_a:.12g} lambda={spec.lam:.12g} pi_A={spec.pi[0]:.12g}")
    return 0


def cmd_meanfield(cfg, out) -> int:
    params = cfg.model_params(_single_K(cfg))
    z0 = np.array(cfg["z0"])
    if cfg["preset"] == "prop35":
        cond = convergence_condition(z0, params)
        if not cond["holds"]:
            raise ConfigError(f"z0 = {tuple(z0)} does not satisfy the convergence "
                              f"hypotheses for these parameters: {cond}")
    traj = integrate(z0, params, cfg["t_end"], rtol=cfg["rtol"], atol=cfg["atol"],
                     stop_at_equilibrium=True)
    traj.to_csv(out.path())
    dist = float(np.abs(traj.final - chi_AP(params)).max())
    print(f"t_stop={traj.t_stop:.6g} final={np.array2string(traj.final, precision=10)} "
          f"distance_to_chi_AP={dist:.3e}")
    if cfg["preset"] == "prop35" and not dist < 1e-6:
        print("final state not within 1e-6 of chi_AP", file=sys.stderr)
        return 2
    return 0


def cmd_simulate(cfg, out) -> int:
    sim = cfg.sim_config(_single_K(cfg))
    o = run_replica(sim)
    s = o.final_state
    with open(out.path(), "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(mc.REPLICA_COLUMNS)
        w.writerow([mc._fmt(v) for v in (o.seed, sim.params.K, o.outcome, o.t_eps, o.t_sqrt_eps,
                                          o.t_absorb, s.n_AP, s.n_Ap, s.n_aP, s.n_ap, o.events)])
    if o.trajectory is not None:
        write_trajectory_csv(o, out.path("-trajectory"))
    print(f"outcome={o.outcome} t_absorb={o.t_absorb:.6g} events={o.events}")
    return 0


def cmd_ensemble(cfg, out) -> int:
    spec = mc.EnsembleSpec(config=cfg.sim_config(), replicas=cfg["replicas"],
                           K_values=tuple(cfg["K"]), master_seed=cfg["seed"],
                           allow_subcritical=cfg["allow_subcritical"])
    summary = mc.run_ensemble(spec)
    mc.write_replicas_csv(summary, out.path())
    mc.write_summary_csv(summary, out.path("-summary"))
    for s in summary.per_K:
        lo, hi = s.invasion_interval
        print(f"K={s.K:g} fixations={s.fixations} extinctions={s.extinctions} "
              f"undecided={s.undecided} invasion={s.invasion_frequency:.4f} "
              f"[{lo:.4f}, {hi:.4f}] predicted={s.predicted_invasion:.4f}")
    return 0


def cmd_figure1(cfg, out) -> int:
    panels = mc.figure1_panels(cfg["b"])
    rows = mc.figure1_sweep(panels["left"] + panels["right"], b=cfg["b"], points=cfg["points"])
    path = out.path()
    mc.write_figure1_csv(rows, path)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


COMMANDS = {
    "check-rates": cmd_check_rates,
    "extinction-prob": cmd_extinction_prob,
    "meanfield": cmd_meanfield,
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "figure1": cmd_figure1,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(_flags(args), args.config)
        out = _Outputs(cfg, args.command)
        status = COMMANDS[args.command](cfg, out)
        out.manifest(cfg, args.command)
        return status
    except ValueError as exc:          # ConfigError, ParameterError and other input problems
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:           # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
