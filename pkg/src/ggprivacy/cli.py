"""Command-line interface.

Every run is reproducible: the effective seed comes from ``--seed``, else the
``GG_PRIVACY_SEED`` environment variable, else the documented default
(61803398), and every file-producing run writes a ``<output>.manifest.json``
next to its artifact recording the subcommand, the fully resolved arguments,
and that seed.  ``replay <manifest>`` re-executes a manifest and reproduces
the outputs byte for byte.

Grids are written either as comma lists (``1,1.5,2``) or as
``start:stop:count`` (``1:4:13``).  A ``--config FILE`` of ``key = value``
lines (keys matching the long flag names) supplies defaults; explicit flags
win.  Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, ggdist
from .accountant import (DEFAULT_BINS, DEFAULT_SAMPLES, DEFAULT_SEED,
                         AccountantConfig, account, derive_rng)
from .calibrate import (PrivacyTarget, equivalent_family, family_from_csv,
                        family_to_csv, solve_sigma, tail_weight,
                        tail_weights_to_csv)
from .errors import GGPrivacyError, ParameterError
from .ggdist import GGParams
from .mechanisms import (LogisticModel, MLPModel, TrainConfig, load_dataset_csv,
                         make_blobs, train_noisy_sgd)
from .prv import MechanismSpec
from .simulate import (ResultRow, SimConfig, hardmax_utility, histograms_from_csv,
                       make_histograms, normalized_auc, pate_label_accuracy,
                       results_to_csv)

_SUBCOMMANDS: dict[str, tuple[argparse.ArgumentParser, object]] = {}


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    """'1,1.5,2' -> that list; '1:4:13' -> 13 evenly spaced points."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"grid {text!r} must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ParameterError("grid count must be >= 1")
        return [float(v) for v in np.linspace(start, stop, count)]
    values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ParameterError(f"grid {text!r} is empty")
    return values


def _resolve_seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("GG_PRIVACY_SEED", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise ParameterError(
                f"GG_PRIVACY_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _apply_threads(args: argparse.Namespace) -> None:
    threads = getattr(args, "threads", None)
    if threads is None:
        return
    if threads < 1:
        raise ParameterError(f"--threads must be >= 1, got {threads}")
    try:  # only meaningful on the JIT path; harmless otherwise
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def _require(args: argparse.Namespace, parser: argparse.ArgumentParser,
             *names: str) -> None:
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            parser.error(f"--{name} is required (flag or config file)")


def _write_manifest(out_path: str, command: str, args: argparse.Namespace,
                    seed: int, outputs: list[str]) -> str:
    arguments = {k: v for k, v in sorted(vars(args).items())
                 if not k.startswith("_") and k not in ("config", "command")}
    arguments["seed"] = seed
    manifest = {
        "command": command,
        "arguments": arguments,
        "seed": seed,
        "version": __version__,
        "outputs": outputs,
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _emit(text: str, out: str | None, command: str, args: argparse.Namespace,
          seed: int) -> None:
    """Print, or write plus manifest when --out was given."""
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(out, "w") as fh:
        fh.write(text)
    manifest = _write_manifest(out, command, args, seed, [os.path.basename(out)])
    print(f"wrote {out} (manifest: {manifest})")


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line_num, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, _, value = line.partition(sep)
                    break
            else:
                raise ParameterError(
                    f"{path}:{line_num}: expected 'key = value', got {line!r}")
            values[key.strip()] = value.strip()
    return values


def _apply_config_defaults(sub: argparse.ArgumentParser,
                           values: dict[str, str]) -> None:
    by_dest = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = by_dest.get(dest)
        if action is None:
            raise ParameterError(f"config key {key!r} matches no flag of this "
                                 "subcommand")
        if isinstance(action, (argparse._StoreTrueAction,)):
            defaults[dest] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            one = action.type(raw) if action.type else raw
            defaults[dest] = [one]
        elif action.type is not None:
            defaults[dest] = action.type(raw)
        else:
            defaults[dest] = raw
    sub.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# Parser construction
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser, with_out: bool = True) -> None:
    sub.add_argument("--seed", type=int, default=None,
                     help="integer seed (default: GG_PRIVACY_SEED env var, "
                          f"else {DEFAULT_SEED})")
    sub.add_argument("--config", default=None, metavar="FILE",
                     help="key = value file of flag defaults")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads for the JIT kernels")
    if with_out:
        sub.add_argument("--out", default=None, metavar="PATH",
                         help="write the result here (plus a .manifest.json)")


def _add_accountant_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                     help="loss samples per discretization (default %(default)s)")
    sub.add_argument("--bins", type=int, default=DEFAULT_BINS,
                     help="grid cells (default %(default)s)")
    sub.add_argument("--trunc-l", type=float, default=None,
                     help="window half-width (default: auto from a pilot run)")


def _add_target_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--epsilon", type=float, default=None)
    sub.add_argument("--delta", type=float, default=None)
    sub.add_argument("--compositions", type=int, default=1)
    sub.add_argument("--sample-rate", type=float, default=None,
                     help="Poisson inclusion probability (omit: no subsampling)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ggprivacy",
        description="Generalized Gaussian mechanisms and their sampled "
                    "privacy-loss accountant")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def register(name: str, help_text: str, handler) -> argparse.ArgumentParser:
        sub = subs.add_parser(name, help=help_text)
        sub.set_defaults(_handler=handler, _name=name)
        _SUBCOMMANDS[name] = (sub, handler)
        return sub

    sub = register("sample", "draw noise variates", _cmd_sample)
    sub.add_argument("--beta", type=float, default=None)
    sub.add_argument("--sigma", type=float, default=None)
    sub.add_argument("-n", "--count", type=int, default=None)
    sub.add_argument("--center", type=float, default=0.0)
    _add_common(sub)

    sub = register("epsilon", "account one mechanism pattern", _cmd_epsilon)
    sub.add_argument("--beta", type=float, default=None)
    sub.add_argument("--sigma", type=float, default=None)
    sub.add_argument("--sensitivity", type=float, default=1.0)
    _add_target_args(sub)
    _add_accountant_args(sub)
    sub.add_argument("--curve-points", type=int, default=129)
    _add_common(sub)

    sub = register("solve-sigma", "invert the accountant in sigma", _cmd_solve_sigma)
    sub.add_argument("--beta", type=float, default=None)
    sub.add_argument("--sensitivity", type=float, default=1.0)
    sub.add_argument("--tolerance", type=float, default=0.05)
    _add_target_args(sub)
    _add_accountant_args(sub)
    _add_common(sub)

    sub = register("family", "equal-privacy noise family over shapes", _cmd_family)
    sub.add_argument("--betas", default=None,
                     help="shape grid, '1,1.5,2' or start:stop:count")
    sub.add_argument("--tolerance", type=float, default=0.05)
    _add_target_args(sub)
    _add_accountant_args(sub)
    _add_common(sub)

    sub = register("tail-weight", "tail mass of equal-privacy noises",
                   _cmd_tail_weight)
    sub.add_argument("--betas", default=None)
    sub.add_argument("--cutoff", type=float, action="append", default=None,
                     help="tail cutoff (repeatable)")
    sub.add_argument("--smooth", action="store_true",
                     help="attach a Savitzky-Golay smoothed column")
    sub.add_argument("--tolerance", type=float, default=0.05)
    _add_target_args(sub)
    _add_accountant_args(sub)
    _add_common(sub)

    sub = register("simulate-argmax", "hardmax utility sweep over gap ratios",
                   _cmd_simulate_argmax)
    sub.add_argument("--classes", type=int, default=2)
    sub.add_argument("--betas", default=None)
    sub.add_argument("--total-votes", type=int, default=1000)
    sub.add_argument("--histograms-per-r", type=int, default=500)
    sub.add_argument("--trials", type=int, default=50)
    sub.add_argument("--r-grid", default="0.001:0.2:20")
    sub.add_argument("--tolerance", type=float, default=0.05)
    _add_target_args(sub)
    _add_accountant_args(sub)
    _add_common(sub)

    sub = register("pate-label", "label accuracy over teacher-vote histograms",
                   _cmd_pate_label)
    sub.add_argument("--histograms", default=None, metavar="CSV")
    sub.add_argument("--family", default=None, metavar="CSV",
                     help="beta,sigma pairs from the family subcommand")
    sub.add_argument("--betas", default=None)
    sub.add_argument("--sigmas", default=None)
    sub.add_argument("--trials", type=int, default=25)
    sub.add_argument("--epsilon", type=float, default=None,
                     help="annotate rows with this epsilon")
    sub.add_argument("--delta", type=float, default=None)
    _add_common(sub)

    sub = register("train", "clipped noisy SGD with a privacy halt", _cmd_train)
    sub.add_argument("--dataset", default="synthetic",
                     help="'synthetic' or a CSV (features..., integer label)")
    sub.add_argument("--model", choices=["logistic", "mlp"], default="logistic")
    sub.add_argument("--beta", type=float, default=2.0)
    sub.add_argument("--sigma", type=float, default=math.sqrt(2.0))
    sub.add_argument("--clip-norm", type=float, default=1.0)
    sub.add_argument("--batch-size", type=int, default=64)
    sub.add_argument("--epochs", type=int, default=5)
    sub.add_argument("--learning-rate", type=float, default=0.5)
    sub.add_argument("--target-epsilon", type=float, default=None)
    sub.add_argument("--delta", type=float, default=1e-5)
    sub.add_argument("--train-size", type=int, default=800)
    sub.add_argument("--test-size", type=int, default=200)
    sub.add_argument("--dim", type=int, default=10)
    sub.add_argument("--separation", type=float, default=3.0)
    _add_common(sub)

    sub = register("replay", "re-run a recorded manifest", _cmd_replay)
    sub.add_argument("manifest", help="path to a .manifest.json file")

    return parser


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------


def _cmd_sample(args, sub) -> int:
    _require(args, sub, "beta", "sigma", "count")
    seed = _resolve_seed(args)
    params = GGParams(args.beta, args.sigma)
    rng = derive_rng(seed, "cli-sample", params.beta, params.sigma,
                     args.center, args.count)
    values = args.center + ggdist.sample(params, rng, args.count)
    text = "\n".join(repr(float(v)) for v in values) + "\n"
    _emit(text, args.out, "sample", args, seed)
    return 0


def _mechanism_from(args) -> MechanismSpec:
    return MechanismSpec(GGParams(args.beta, args.sigma), args.sensitivity,
                         args.sample_rate, args.compositions)


def _config_from(args) -> AccountantConfig | None:
    if args.trunc_l is None:
        return None
    return AccountantConfig.from_bins(args.trunc_l, bins=args.bins,
                                      samples_n=args.samples)


def _cmd_epsilon(args, sub) -> int:
    _require(args, sub, "beta", "sigma")
    if (args.epsilon is None) == (args.delta is None):
        sub.error("provide exactly one of --epsilon / --delta")
    seed = _resolve_seed(args)
    spec = _mechanism_from(args)
    result = account(spec, _config_from(args), epsilon=args.epsilon,
                     delta=args.delta, rng=seed, curve_points=args.curve_points,
                     samples_n=args.samples, bins=args.bins)
    if args.delta is not None:
        print(f"epsilon = {result.epsilon:.6f} at delta = {args.delta:g}")
    else:
        print(f"delta = {result.delta:.6e} at epsilon = {args.epsilon:g}")
    print(f"conservative: epsilon <= {result.epsilon_conservative:.6f}, "
          f"delta <= {result.delta_conservative:.6e} "
          f"(eta = {result.eta:.3e}, tau = {result.tau:.3f})")
    if args.out is not None:
        _emit(result.curve.to_json(indent=2) + "\n", args.out, "epsilon",
              args, seed)
    return 0


def _cmd_solve_sigma(args, sub) -> int:
    _require(args, sub, "beta", "epsilon", "delta")
    seed = _resolve_seed(args)
    target = PrivacyTarget(args.epsilon, args.delta, args.compositions,
                           args.sample_rate)
    result = solve_sigma(args.beta, target, _config_from(args), rng=seed,
                         tolerance=args.tolerance, sensitivity=args.sensitivity,
                         samples_n=args.samples, bins=args.bins)
    print(f"sigma = {result.sigma:.9g}")
    print(f"bracket = [{result.bracket[0]:.9g}, {result.bracket[1]:.9g}]")
    print(f"epsilon at sigma = {result.epsilon:.6f} "
          f"(target {target.epsilon:g}, {result.probes} probes)")
    if args.out is not None:
        payload = {"sigma": result.sigma, "bracket": list(result.bracket),
                   "epsilon": result.epsilon, "probes": result.probes}
        _emit(json.dumps(payload, indent=2) + "\n", args.out, "solve-sigma",
              args, seed)
    return 0


def _cmd_family(args, sub) -> int:
    _require(args, sub, "betas", "epsilon", "delta")
    seed = _resolve_seed(args)
    target = PrivacyTarget(args.epsilon, args.delta, args.compositions,
                           args.sample_rate)
    result = equivalent_family(parse_grid(args.betas), target,
                               _config_from(args), rng=seed,
                               tolerance=args.tolerance,
                               samples_n=args.samples, bins=args.bins)
    print(f"sigma monotone in beta: {result.sigma_monotone}")
    _emit(family_to_csv(result), args.out, "family", args, seed)
    return 0


def _cmd_tail_weight(args, sub) -> int:
    _require(args, sub, "betas", "epsilon", "delta", "cutoff")
    seed = _resolve_seed(args)
    target = PrivacyTarget(args.epsilon, args.delta, args.compositions,
                           args.sample_rate)
    result = tail_weight(parse_grid(args.betas), target, args.cutoff,
                         _config_from(args), rng=seed, smooth=args.smooth,
                         tolerance=args.tolerance, samples_n=args.samples,
                         bins=args.bins)
    _emit(tail_weights_to_csv(result), args.out, "tail-weight", args, seed)
    return 0


def _cmd_simulate_argmax(args, sub) -> int:
    _require(args, sub, "betas", "epsilon", "delta")
    seed = _resolve_seed(args)
    target = PrivacyTarget(args.epsilon, args.delta, args.compositions,
                           args.sample_rate)
    family = equivalent_family(parse_grid(args.betas), target,
                               _config_from(args), rng=seed,
                               tolerance=args.tolerance,
                               samples_n=args.samples, bins=args.bins)
    sim_cfg = SimConfig(num_classes=args.classes, total_votes=args.total_votes,
                        runner_up_grid=tuple(parse_grid(args.r_grid)),
                        histograms_per_r=args.histograms_per_r,
                        trials=args.trials)
    hists = make_histograms(sim_cfg, derive_rng(seed, "simulate-hists",
                                                sim_cfg.num_classes,
                                                sim_cfg.total_votes,
                                                sim_cfg.runner_up_grid,
                                                sim_cfg.histograms_per_r))
    rows: list[ResultRow] = []
    curves = {}
    for point in family.points:
        noise = GGParams(point.beta, point.sigma)
        utility = hardmax_utility(hists, noise, sim_cfg.trials,
                                  derive_rng(seed, "simulate-noise",
                                             point.beta, point.sigma))
        curves[point.beta] = utility
        for u in sorted(utility, key=lambda p: p.runner_up):
            rows.append(ResultRow(point.beta, point.sigma, target.epsilon,
                                  target.delta,
                                  f"hardmax_utility[r={u.runner_up:g}]",
                                  u.value, u.stderr))
    for beta, auc in normalized_auc(curves).items():
        sigma = next(p.sigma for p in family.points if p.beta == beta)
        rows.append(ResultRow(beta, sigma, target.epsilon, target.delta,
                              "hardmax_auc_normalized", auc, None))
        print(f"beta {beta:g}: normalized AUC = {auc:.4f}")
    _emit(results_to_csv(rows), args.out, "simulate-argmax", args, seed)
    return 0


def _cmd_pate_label(args, sub) -> int:
    _require(args, sub, "histograms")
    seed = _resolve_seed(args)
    hists = histograms_from_csv(args.histograms)
    if args.family is not None:
        with open(args.family) as fh:
            pairs = [(p.beta, p.sigma) for p in family_from_csv(fh.read())]
    else:
        _require(args, sub, "betas", "sigmas")
        betas, sigmas = parse_grid(args.betas), parse_grid(args.sigmas)
        if len(betas) != len(sigmas):
            sub.error("--betas and --sigmas must have equal length")
        pairs = list(zip(betas, sigmas))
    noises = [GGParams(b, s) for b, s in pairs]
    rows_out = pate_label_accuracy(hists, noises, args.trials,
                                   derive_rng(seed, "pate", tuple(pairs),
                                              args.trials))
    rows = [ResultRow(r.beta, r.sigma, args.epsilon, args.delta,
                      "pate_label_accuracy", r.mean, r.stderr)
            for r in rows_out]
    for r in rows_out:
        print(f"beta {r.beta:g} sigma {r.sigma:g}: accuracy "
              f"{r.mean:.4f} +/- {r.std:.4f}")
    _emit(results_to_csv(rows), args.out, "pate-label", args, seed)
    return 0


def _cmd_train(args, sub) -> int:
    seed = _resolve_seed(args)
    rng = derive_rng(seed, "train", args.dataset, args.model)
    if args.dataset == "synthetic":
        X, y = make_blobs(args.train_size + args.test_size, args.dim,
                          args.separation, rng)
        train_data = (X[:args.train_size], y[:args.train_size])
        test_data = (X[args.train_size:], y[args.train_size:])
    else:
        train_data = load_dataset_csv(args.dataset)
        test_data = None
    dim = train_data[0].shape[1]
    model = LogisticModel(dim) if args.model == "logistic" else MLPModel(dim)
    cfg = TrainConfig(clip_norm=args.clip_norm,
                      noise=GGParams(args.beta, args.sigma),
                      batch_size=args.batch_size, epochs=args.epochs,
                      learning_rate=args.learning_rate,
                      target_epsilon=args.target_epsilon,
                      target_delta=args.delta)
    result = train_noisy_sgd(model, train_data, cfg, rng, test_data=test_data)
    lines = [json.dumps({k: rec[k] for k in
                         ("epoch", "epsilon", "delta", "train_acc", "test_acc")})
             for rec in result.history]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        _emit(text, args.out, "train", args, seed)
    last = result.history[-1]
    print(f"finished after {result.steps} steps"
          + (" (halted by privacy budget)" if result.halted else "")
          + f": train_acc = {last['train_acc']:.4f}"
          + (f", test_acc = {last['test_acc']:.4f}"
             if last["test_acc"] is not None else "")
          + (f", epsilon = {last['epsilon']:.4f}"
             if last["epsilon"] is not None else ""))
    return 0


def _cmd_replay(args, sub) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    command = manifest["command"]
    if command not in _SUBCOMMANDS:
        raise ParameterError(f"manifest names unknown subcommand {command!r}")
    parser, _ = _SUBCOMMANDS[command]
    stored = dict(manifest["arguments"])
    argv = [command]
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "config"):
            continue
        if action.dest not in stored:
            continue
        value = stored[action.dest]
        if value is None:
            continue
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif isinstance(value, list):
            for item in value:
                argv.extend([flag, _argtext(item)])
        else:
            argv.extend([flag, _argtext(value)])
    return main(argv)


def _argtext(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    # Config files act as per-subcommand defaults, so they must be applied
    # before the real parse; find the subcommand and --config by scanning.
    command = next((a for a in argv if not a.startswith("-")), None)
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    try:
        if config_path is not None:
            if command not in _SUBCOMMANDS:
                parser.error("--config requires a subcommand")
            _apply_config_defaults(_SUBCOMMANDS[command][0],
                                   _load_config_file(config_path))
        args = parser.parse_args(argv)
        if not hasattr(args, "_handler"):
            parser.print_help()
            return 2
        _apply_threads(args)
        return args._handler(args, _SUBCOMMANDS[args._name][0])
    except GGPrivacyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
