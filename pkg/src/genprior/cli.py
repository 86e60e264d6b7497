"""Command-line front end.

Subcommands:

    threshold      thresholds for one network spec -> JSON
    phase-diagram  threshold sweep over a rho grid -> CSV
    amp-compare    finite-size AMP vs state evolution over an alpha grid -> CSV
    landscape      constrained free-energy profile over a q_x grid -> CSV
    se-solve       one state-evolution solve (debug) -> JSON

All runs are driven by a JSON config file (schema in the README); flags
--resolution/--jobs/--seed/--quad-order override the config.  Exit codes:
0 success, 2 config error, 3 unrecoverable numeric failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .channels import ChannelKind
from .layers import LatentPrior, LayerKind, PriorKind
from .quadrature import NumericDomainError, gauss_hermite_rule
from .state_evolution import InitKind, NetworkSpec, landscape_profile, se_solve
from .thresholds import (
    UnsupportedOperation,
    alpha_it_counting,
    compute_threshold_report,
)
from .amp import compare_amp_se


class ConfigError(ValueError):
    pass


_CHANNELS = {"linear": ChannelKind.LINEAR, "abs": ChannelKind.ABS}
_LAYER_KINDS = {"linear": LayerKind.LINEAR_PASS, "relu": LayerKind.RELU}
_PRIORS = {"gaussian": PriorKind.GAUSSIAN, "gauss_bernoulli": PriorKind.GAUSS_BERNOULLI}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _get(cfg: dict, key: str, default=None, required: bool = False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required config field: {key}")
        return default
    return cfg[key]


def parse_prior(cfg: dict) -> LatentPrior:
    raw = _get(cfg, "prior", {"kind": "gaussian"})
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("field 'prior' must be an object with a 'kind'")
    kind = raw["kind"]
    if kind not in _PRIORS:
        raise ConfigError(f"field 'prior.kind' must be one of {sorted(_PRIORS)}, got {kind!r}")
    sparsity = raw.get("sparsity", 1.0)
    try:
        return LatentPrior(kind=_PRIORS[kind], sparsity=float(sparsity))
    except ValueError as exc:
        raise ConfigError(f"field 'prior.sparsity': {exc}")


def build_spec(cfg: dict, rho: float | None = None, sparsity: float | None = None) -> NetworkSpec:
    """NetworkSpec from a config dict.

    A single trailing layer may carry ``"beta": null``; it is then derived
    from rho so the stack satisfies prod(1/beta) = rho.  ``rho``/``sparsity``
    override the config values (used by sweep drivers).
    """
    channel = _get(cfg, "channel", required=True)
    if channel not in _CHANNELS:
        raise ConfigError(f"field 'channel' must be one of {sorted(_CHANNELS)}, got {channel!r}")
    prior = parse_prior(cfg)
    if sparsity is not None:
        try:
            prior = LatentPrior(kind=prior.kind, sparsity=float(sparsity))
        except ValueError as exc:
            raise ConfigError(f"sweep sparsity: {exc}")
    raw_layers = _get(cfg, "layers", [])
    if not isinstance(raw_layers, list):
        raise ConfigError("field 'layers' must be a list")
    rho_val = float(rho if rho is not None else _get(cfg, "rho", 1.0))
    kinds, betas = [], []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"field 'layers[{i}]' must be an object with a 'kind'")
        if entry["kind"] not in _LAYER_KINDS:
            raise ConfigError(
                f"field 'layers[{i}].kind' must be one of {sorted(_LAYER_KINDS)}, got {entry['kind']!r}"
            )
        kinds.append(_LAYER_KINDS[entry["kind"]])
        beta = entry.get("beta")
        if beta is None and i != len(raw_layers) - 1:
            raise ConfigError(f"field 'layers[{i}].beta': only the last layer may omit beta")
        betas.append(None if beta is None else float(beta))
    if betas and betas[-1] is None:
        partial = 1.0
        for b in betas[:-1]:
            partial *= b
        betas[-1] = 1.0 / (rho_val * partial)
    try:
        return NetworkSpec(
            channel=_CHANNELS[channel],
            layers=tuple(zip(kinds, betas)),
            prior=prior,
            rho=rho_val,
        )
    except ValueError as exc:
        raise ConfigError(f"field 'layers'/'rho': {exc}")


def spec_to_config(spec: NetworkSpec) -> dict:
    """Config fragment that `build_spec` parses back to an identical spec."""
    prior = {"kind": spec.prior.kind.value}
    if spec.prior.kind is PriorKind.GAUSS_BERNOULLI:
        prior["sparsity"] = spec.prior.sparsity
    return {
        "channel": spec.channel.value,
        "prior": prior,
        "layers": [{"kind": k.value, "beta": b} for k, b in spec.layers],
        "rho": spec.rho,
    }


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _grid(cfg: dict, key: str) -> list[float]:
    raw = _get(cfg, key, required=True)
    if isinstance(raw, dict):
        for field in ("min", "max", "count"):
            if field not in raw:
                raise ConfigError(f"field '{key}.{field}' is required for a range grid")
        return list(np.linspace(float(raw["min"]), float(raw["max"]), int(raw["count"])))
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"field '{key}' must be a nonempty list or a min/max/count object")
    return [float(v) for v in raw]


# ---------------------------------------------------------------------------
# subcommands


def cmd_threshold(cfg: dict, out: str, resolution: float, order: int, jobs: int, seed: int) -> int:
    spec = build_spec(cfg)
    rule = gauss_hermite_rule(order)
    report = compute_threshold_report(spec, resolution=resolution, rule=rule)
    payload = {
        "spec": spec_to_config(spec),
        "alpha_c": report.alpha_c,
        "alpha_it": report.alpha_it,
        "alpha_alg": report.alpha_alg,
        "delta_alg": report.delta_alg,
        "methods": report.methods,
        "resolution": report.resolution,
    }
    try:
        payload["alpha_it_counting"] = alpha_it_counting(spec)
    except UnsupportedOperation:
        payload["alpha_it_counting"] = None
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _phase_cell(args) -> tuple:
    cfg, value, sweep_sparsity, resolution, order = args
    rule = gauss_hermite_rule(order)
    if sweep_sparsity:
        spec = build_spec(cfg, sparsity=value)
    else:
        spec = build_spec(cfg, rho=value)
    try:
        report = compute_threshold_report(spec, resolution=resolution, rule=rule)
        return (value, report.alpha_c, report.alpha_it, report.alpha_alg, report.delta_alg, "ok", "")
    except Exception as exc:  # per-cell failures are recorded, not fatal
        return (value, None, None, None, None, "failed", f"{type(exc).__name__}: {exc}")


def _sweeps_sparsity(cfg: dict) -> bool:
    # an empty stack pins rho = 1; sweeping then means sweeping the
    # Gauss-Bernoulli sparsity (the separable-prior comparison curves)
    prior = parse_prior(cfg)
    return not _get(cfg, "layers", []) and prior.kind is PriorKind.GAUSS_BERNOULLI


def cmd_phase_diagram(cfg: dict, out: str, resolution: float, order: int, jobs: int, seed: int) -> int:
    grid = _grid(cfg, "rho_grid")
    sweep_sparsity = _sweeps_sparsity(cfg)
    for value in grid:  # validate the whole grid before burning compute
        build_spec(cfg, sparsity=value) if sweep_sparsity else build_spec(cfg, rho=value)
    tasks = [(cfg, value, sweep_sparsity, resolution, order) for value in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_phase_cell, tasks))
    else:
        cells = [_phase_cell(task) for task in tasks]
    rows = [cell[:6] for cell in cells]
    _write_csv(out, ["rho", "alpha_c", "alpha_it", "alpha_alg", "delta_alg", "status"], rows)
    errors = [(cell[0], cell[6]) for cell in cells if cell[5] == "failed"]
    if errors:
        with open(out + ".errors.log", "w") as fh:
            for value, msg in errors:
                fh.write(f"rho={value}: {msg}\n")
    return 0


def _amp_cell(args) -> tuple:
    cfg, alpha, d, n_samples, seed, order, damping, max_iter = args
    spec = build_spec(cfg)
    rule = gauss_hermite_rule(order)
    row = compare_amp_se(
        spec, d, n_samples, [alpha], rule=rule, seed=seed, damping=damping, max_iter=max_iter
    )[0]
    return (row.alpha, row.mse_amp_mean, row.mse_amp_stderr, row.mse_se)


def cmd_amp_compare(cfg: dict, out: str, resolution: float, order: int, jobs: int, seed: int) -> int:
    grid = _grid(cfg, "alpha_grid")
    d = int(_get(cfg, "d", 2000))
    n_samples = int(_get(cfg, "n_samples", 10))
    damping = float(_get(cfg, "damping", 0.5))
    max_iter = int(_get(cfg, "max_iter", 1000))
    build_spec(cfg)
    tasks = [(cfg, alpha, d, n_samples, seed, order, damping, max_iter) for alpha in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_amp_cell, tasks))
    else:
        rows = [_amp_cell(task) for task in tasks]
    _write_csv(out, ["alpha", "mse_amp_mean", "mse_amp_stderr", "mse_se"], rows)
    return 0


def cmd_landscape(cfg: dict, out: str, resolution: float, order: int, jobs: int, seed: int) -> int:
    spec = build_spec(cfg)
    alpha = _get(cfg, "alpha", required=True)
    grid = _grid(cfg, "qx_grid")
    rule = gauss_hermite_rule(order)
    points = landscape_profile(spec, float(alpha), grid, rule=rule)
    rows = [(p.q_x, p.phi, int(p.converged)) for p in points]
    _write_csv(out, ["q_x", "phi", "converged"], rows)
    return 0


def cmd_se_solve(cfg: dict, out: str, resolution: float, order: int, jobs: int, seed: int) -> int:
    spec = build_spec(cfg)
    alpha = float(_get(cfg, "alpha", required=True))
    init = _get(cfg, "init", "uninformative")
    if init not in ("informed", "uninformative"):
        raise ConfigError(f"field 'init' must be 'informed' or 'uninformative', got {init!r}")
    rule = gauss_hermite_rule(order)
    result = se_solve(
        spec,
        alpha,
        InitKind(init),
        rule=rule,
        max_iter=int(_get(cfg, "max_iter", 5000)),
        damping=float(_get(cfg, "damping", 0.5)),
    )
    payload = {
        "alpha": alpha,
        "init": init,
        "mmse": result.mmse,
        "free_energy": result.free_energy,
        "converged": result.converged,
        "iterations": result.iterations,
        "q_x": result.state.q_x,
        "qhat_x": result.state.qhat_x,
        "q": list(result.state.q),
        "qhat": list(result.state.qhat),
    }
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


_COMMANDS = {
    "threshold": cmd_threshold,
    "phase-diagram": cmd_phase_diagram,
    "amp-compare": cmd_amp_compare,
    "landscape": cmd_landscape,
    "se-solve": cmd_se_solve,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="genprior",
        description="Asymptotic thresholds, phase diagrams and AMP simulation "
        "for generalized linear estimation with generative priors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON config file")
        p.add_argument("--out", default="", help="output path (CSV/JSON); stdout for JSON commands")
        p.add_argument("--resolution", type=float, default=None, help="bisection resolution in alpha")
        p.add_argument("--jobs", type=int, default=None, help="worker processes for grid sweeps")
        p.add_argument("--seed", type=int, default=None, help="base seed for instance generation")
        p.add_argument("--quad-order", type=int, default=None, help="Gauss-Hermite order")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        resolution = args.resolution if args.resolution is not None else float(cfg.get("resolution", 1e-3))
        order = args.quad_order if args.quad_order is not None else int(cfg.get("quad_order", 100))
        jobs = args.jobs if args.jobs is not None else int(cfg.get("jobs", os.cpu_count() or 1))
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if resolution <= 0:
            raise ConfigError(f"resolution must be positive, got {resolution}")
        needs_out = args.command in ("phase-diagram", "amp-compare", "landscape")
        if needs_out and not args.out:
            raise ConfigError(f"command '{args.command}' requires --out")
        return _COMMANDS[args.command](cfg, args.out, resolution, order, jobs, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericDomainError, RuntimeError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
