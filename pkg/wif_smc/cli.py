"""Command line interface.

Every subcommand writes a JSON envelope with the schema version, the echoed configuration and
the result, or CSV where noted. Exit code 2 signals a configuration error, 1 a runtime error
reported as JSON on stderr.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Type

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from wif_smc.connection import DatabaseConnection
from wif_smc.core import Permutation
from wif_smc.exceptions import WifSmcError
from wif_smc.experiments.cox import cox_simulate
from wif_smc.experiments.ou import ou_sweep
from wif_smc.experiments.pmmh import pmmh_replicates, pmmh_run, replicate_seeds
from wif_smc.fkengine import grid_reference, pf_run
from wif_smc.intensity import intensity_table, numeric_intensity
from wif_smc.limitproc import (
    fk_marginal_discrete,
    fk_marginal_lhs,
    fk_marginal_rhs,
    simulate_ensemble,
)
from wif_smc.pydantic_models import (
    CoxParams,
    FkCheckConfig,
    LimitSimConfig,
    PfRunConfig,
    PmmhConfig,
    ReferenceConfig,
    RunEnvelope,
    SweepConfig,
)
from wif_smc.resampling import Ordering, SchemeId, exact_distribution, resample
from wif_smc.write import insert_pmmh_run, insert_sweep_rows

logger = logging.getLogger(__name__)

THREADS_ENV = "WIF_SMC_THREADS"

TEST_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda x: np.ones(x.shape[0]),
    "x": lambda x: x[:, 0],
    "x2": lambda x: x[:, 0] ** 2,
}


class ConfigError(Exception):
    """Invalid command line input, reported with exit code 2."""


def _parse_vector(text: str, name: str) -> np.ndarray:
    try:
        values = np.array([float(item) for item in text.split(",") if item.strip()])
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ConfigError(f"--{name}: expected finite numbers, got {text!r}")
    return values


def _read_weights(path: str) -> np.ndarray:
    try:
        lines = Path(path).read_text().split()
        return np.array([float(line) for line in lines])
    except (OSError, ValueError) as error:
        raise ConfigError(f"--weights: cannot read {path}: {error}") from None


def _load_config(args, model: Type[BaseModel]) -> BaseModel:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as error:
            raise ConfigError(f"--config: cannot read {args.config}: {error}") from None
    try:
        return model.model_validate(data)
    except ValidationError as error:
        first = error.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(f"config key {key!r}: {first['msg']}") from None


def _require_seed(args) -> int:
    if args.seed is None:
        raise ConfigError(f"--seed is required for {args.command}")
    return args.seed


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None


def _scheme(name: str) -> SchemeId:
    try:
        return SchemeId.parse(name)
    except ValueError as error:
        raise ConfigError(f"--scheme: {error}") from None


def _cmd_resample(args):
    weights = _read_weights(args.weights)
    a = resample(_scheme(args.scheme), weights, np.random.default_rng(_require_seed(args)))
    config = {"scheme": args.scheme, "weights": weights.tolist()}
    if args.format == "csv":
        return config, ",".join(str(i) for i in a.a) + "\n"
    return config, {"ancestors": a.a.tolist()}


def _cmd_exact_dist(args):
    weights = _read_weights(args.weights)
    dist = exact_distribution(_scheme(args.scheme), weights)
    outcomes = [{"ancestors": list(a), "probability": p} for a, p in dist.items()]
    return {"scheme": args.scheme, "weights": weights.tolist()}, {"outcomes": outcomes}


def _intensity_scheme(args) -> SchemeId:
    scheme = _scheme(args.scheme)
    if getattr(args, "order", None) is not None and scheme.ordering is Ordering.natural:
        if scheme.kind.value in ("stratified", "systematic", "ssp"):
            scheme = SchemeId(scheme.kind, Ordering.mean_partition)
    return scheme


def _cmd_intensity(args):
    v = _parse_vector(args.v, "v")
    order = None
    if args.order is not None:
        try:
            order = Permutation(_parse_vector(args.order, "order").astype(int))
        except ValueError as error:
            raise ConfigError(f"--order: {error}") from None
    scheme = _intensity_scheme(args)
    table = intensity_table(scheme, v, order)
    config = {"scheme": scheme.name, "v": v.tolist(), "order": args.order}
    result = {
        "scheme": scheme.name,
        "v": v.tolist(),
        "order": None if order is None else order.perm.tolist(),
        "events": table.to_records(),
        "total": table.total,
    }
    return config, result


def _cmd_intensity_numeric(args):
    v = _parse_vector(args.v, "v")
    if not 0.0 < args.delta < 1.0:
        raise ConfigError(f"--delta must lie in (0, 1), got {args.delta}")
    scheme = _scheme(args.scheme)
    table = numeric_intensity(scheme, v, args.delta)
    config = {"scheme": scheme.name, "v": v.tolist(), "delta": args.delta}
    return config, {"events": table.to_records(), "total": table.total, "delta": args.delta}


def _cmd_pf_run(args):
    config = _load_config(args, PfRunConfig)
    out = pf_run(
        config.model.build(), SchemeId.parse(config.scheme), config.n_particles, _require_seed(args)
    )
    return config, out.to_dict()


def _cmd_reference_logz(args):
    config = _load_config(args, ReferenceConfig)
    ref = grid_reference(config.model.build(), config.mesh.build(config.model))
    return config, {
        "logZ": ref.log_z,
        "filter_mean": ref.filter_mean,
        "smooth_mean": ref.smooth_mean,
    }


def _cmd_limit_sim(args):
    config = _load_config(args, LimitSimConfig)
    paths = simulate_ensemble(
        config.model.build(),
        SchemeId.parse(config.scheme),
        config.n_particles,
        _require_seed(args),
        config.replicates,
        threads=_threads(args),
        fine_step=config.fine_step,
        majorant=config.majorant,
        record_skeleton=config.skeleton_csv is not None,
    )
    if config.skeleton_csv is not None:
        first = paths[0]
        steps, n, dim = first.states.shape
        frame = pd.DataFrame(
            first.states.reshape(steps * n, dim), columns=[f"x{j}" for j in range(dim)]
        )
        frame.insert(0, "particle", np.tile(np.arange(n), steps))
        frame.insert(0, "time", np.repeat(first.times, n))
        frame.to_csv(config.skeleton_csv, index=False)
    summaries = [
        {
            "n_jumps": path.n_jumps,
            "integral": path.integral,
            "terminal_mean": path.terminal.mean(axis=0).tolist(),
        }
        for path in paths
    ]
    result = {
        "fine_step": paths[0].fine_step,
        "mean_jumps": float(np.mean([p.n_jumps for p in paths])),
        "paths": summaries,
    }
    return config, result


def _cmd_fk_check(args):
    config = _load_config(args, FkCheckConfig)
    seed = _require_seed(args)
    model = config.model.build()
    f = TEST_FUNCTIONS[config.test_function]
    seeds = np.random.SeedSequence(seed).spawn(len(config.schemes) * 2 + 1)
    rhs = fk_marginal_rhs(model, f, config.rhs_replicates, seeds[0], config.fine_step)
    checks = []
    for i, name in enumerate(config.schemes):
        scheme = SchemeId.parse(name)
        discrete = fk_marginal_discrete(
            model,
            scheme,
            config.n_particles,
            f,
            config.replicates,
            seeds[2 * i + 1],
            threads=_threads(args),
        )
        paths = simulate_ensemble(
            model,
            scheme,
            config.n_particles,
            seeds[2 * i + 2],
            config.replicates,
            threads=_threads(args),
            fine_step=config.fine_step,
        )
        lhs = fk_marginal_lhs(paths, f)
        checks.append(
            {
                "scheme": name,
                "discrete": discrete.to_dict(),
                "limit": lhs.to_dict(),
                "discrete_agrees_with_limit": discrete.agrees_with(lhs),
                "limit_agrees_with_diffusion": lhs.agrees_with(rhs),
            }
        )
    return config, {"diffusion": rhs.to_dict(), "checks": checks}


def _open_db(args) -> Optional[DatabaseConnection]:
    return None if args.db is None else DatabaseConnection(args.db)


def _cmd_ou_sweep(args):
    config = _load_config(args, SweepConfig)
    if args.seed is not None:
        config = config.model_copy(update={"base_seed": args.seed})
    rows = ou_sweep(config, threads=_threads(args))
    if config.output is not None:
        rows.to_csv(config.output, index=False)
    connection = _open_db(args)
    if connection is not None:
        with connection.get_session() as session:
            insert_sweep_rows(session, rows, config.run_label)
            session.commit()
    if args.format == "csv":
        return config, rows.to_csv(index=False)
    failed = int((rows["error"] != "").sum())
    return config, {"rows": len(rows), "failed": failed, "output": config.output}


def _cmd_cox_sim(args):
    config = _load_config(args, CoxParams)
    data = cox_simulate(config, _require_seed(args))
    if args.format == "csv":
        return config, "".join(f"{t!r}\n" for t in data.events.tolist())
    result = {
        "n_events": int(data.events.size),
        "events": data.events.tolist(),
        "latent_mean": float(data.latent.mean()),
    }
    return config, result


def _cmd_pmmh(args):
    config = _load_config(args, PmmhConfig)
    seed = _require_seed(args)
    if args.replicates < 1:
        raise ConfigError(f"--replicates must be positive, got {args.replicates}")
    if args.replicates == 1:
        seeds, results = [seed], [pmmh_run(config, seed)]
    else:
        seeds = replicate_seeds(seed, args.replicates)
        results = pmmh_replicates(config, seed, args.replicates, threads=_threads(args))
    connection = _open_db(args)
    if connection is not None:
        with connection.get_session() as session:
            for run_seed, result in zip(seeds, results):
                insert_pmmh_run(session, result, config, run_seed)
    if args.format == "csv":
        columns = ["log_sigma", "log_alpha", "log_beta"]
        frames = [pd.DataFrame(result.chain, columns=columns) for result in results]
        if len(frames) == 1:
            return config, frames[0].to_csv(index=False)
        chains = pd.concat(frames, keys=range(len(frames)), names=["replicate", "iteration"])
        return config, chains.reset_index(level="replicate").to_csv(index=False)
    if len(results) == 1:
        return config, results[0].to_dict()
    replicates = [dict(result.to_dict(), seed=s) for s, result in zip(seeds, results)]
    return config, {"replicates": replicates}


COMMANDS = {
    "resample": (_cmd_resample, "Draw one ancestor vector"),
    "exact-dist": (_cmd_exact_dist, "Exact law of a resampling scheme"),
    "intensity": (_cmd_intensity, "Closed-form resampling intensity"),
    "intensity-numeric": (_cmd_intensity_numeric, "Finite-step intensity estimate"),
    "pf-run": (_cmd_pf_run, "One particle filter run"),
    "reference-logz": (_cmd_reference_logz, "Quadrature reference of a model"),
    "limit-sim": (_cmd_limit_sim, "Simulate the continuous-time particle system"),
    "fk-check": (_cmd_fk_check, "Compare Feynman-Kac functionals"),
    "ou-sweep": (_cmd_ou_sweep, "Ornstein-Uhlenbeck sweep"),
    "cox-sim": (_cmd_cox_sim, "Simulate Cox process data"),
    "pmmh": (_cmd_pmmh, "Particle marginal Metropolis-Hastings"),
}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="seed of the random generator")
    common.add_argument("--out", help="write the artifact here instead of stdout")
    common.add_argument("--threads", type=int, help=f"worker threads (env {THREADS_ENV})")
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--log-level", default="WARNING", help="logging level")
    common.add_argument("--db", help="SQLAlchemy url of a results database")

    parser = argparse.ArgumentParser(prog="wif-smc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        cmd = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("resample", "exact-dist"):
            cmd.add_argument("--scheme", required=True)
            cmd.add_argument("--weights", required=True, help="text file, one weight per line")
        if name in ("intensity", "intensity-numeric"):
            cmd.add_argument("--scheme", required=True)
            cmd.add_argument("--v", required=True, help="comma-separated potential values")
        if name == "intensity":
            cmd.add_argument("--order", help="comma-separated 0-based permutation")
        if name == "intensity-numeric":
            cmd.add_argument("--delta", type=float, required=True)
        if name == "pmmh":
            cmd.add_argument("--replicates", type=int, default=1, help="independent chains")
    return parser


def _emit(args, payload: str) -> None:
    if args.out is not None:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``wif-smc`` command."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    handler, _ = COMMANDS[args.command]
    try:
        config, result = handler(args)
    except ConfigError as error:
        sys.stderr.write(f"wif-smc {args.command}: {error}\n")
        return 2
    except WifSmcError as error:
        sys.stderr.write(json.dumps({"error": error.code, "message": str(error)}) + "\n")
        return 1

    if isinstance(result, str):
        _emit(args, result)
        return 0
    echo = config.model_dump(mode="json") if isinstance(config, BaseModel) else config
    envelope = RunEnvelope(command=args.command, seed=args.seed, config=echo, result=result)
    _emit(args, json.dumps(envelope.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
