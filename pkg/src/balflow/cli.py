"""Command-line experiment runner.

Exit codes: 0 converged / sweep passed, 2 stopped without convergence or
sweep failed, 64 configuration error, 70 numerical abort (partial trace
written).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import experiments as ex
from . import io
from .bergman import bergman_distance, fs, hilb
from .fields import MetricField, PositivityError
from .flows import FlowConfig, parabolic_dt, phi_iterate, run_flow, run_heat_flow
from .manifold import GridResolutionError, ModelConfig, build_grid, build_section_basis, grid_for

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG = 64
EXIT_NUMERIC = 70

log = logging.getLogger("balflow")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    degrees: tuple[int, ...]
    k: int
    grid: tuple[int, int] | None = None
    initial: dict = field(default_factory=lambda: {"kind": "fs"})
    flow: dict = field(default_factory=dict)
    k_sweep: list[int] | None = None
    t: float = 0.5
    mode: str = "modified"
    out: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "bin"])

    def model(self) -> ModelConfig:
        return ModelConfig(self.degrees, self.k)

    def flow_config(self, default_t_max: float) -> FlowConfig:
        opts = dict(self.flow)
        opts.setdefault("dt", 0.1 / self.k**2 if self.k > 0 else 0.1)
        opts.setdefault("t_max", default_t_max)
        return FlowConfig(**opts)


_KNOWN = {"model", "grid", "initial", "flow", "k_sweep", "t", "mode", "output"}


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    model = raw.get("model", {})
    try:
        degrees = tuple(int(a) for a in model.get("degrees", [0]))
        k = int(model.get("k", 4))
        ModelConfig(degrees, k)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model: {exc}") from None
    grid = raw.get("grid")
    if grid is not None:
        grid = (int(grid["n_theta"]), int(grid["n_phi"]))
    initial = raw.get("initial", {"kind": "fs"})
    kind = initial.get("kind")
    if kind not in ("fs", "fs_perturbed", "file"):
        raise ConfigError(f"initial.kind must be fs, fs_perturbed or file, got {kind!r}")
    if kind == "fs_perturbed":
        amp = float(initial.get("amplitude", 0.2))
        if not 0 <= amp <= ex.MAX_AMPLITUDE:
            raise ConfigError(f"initial.amplitude must lie in [0, {ex.MAX_AMPLITUDE}]")
        initial = {"kind": kind, "seed": int(initial.get("seed", 0)), "amplitude": amp}
    if kind == "file" and "path" not in initial:
        raise ConfigError("initial.path is required for kind=file")
    flow = dict(raw.get("flow", {}))
    try:
        FlowConfig(**{"dt": 1.0, "t_max": 1.0, **flow})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad flow section: {exc}") from None
    output = raw.get("output", {})
    mode = raw.get("mode", "modified")
    if mode not in ("modified", "donaldson"):
        raise ConfigError("mode must be modified or donaldson")
    sweep = raw.get("k_sweep")
    return ExperimentConfig(
        degrees=degrees, k=k, grid=grid, initial=initial, flow=flow,
        k_sweep=[int(x) for x in sweep] if sweep is not None else None,
        t=float(raw.get("t", 0.5)), mode=mode,
        out=output.get("dir", "out"), formats=list(output.get("formats", ["csv", "bin"])),
    )


def _grid(cfg: ExperimentConfig, model: ModelConfig):
    if cfg.grid is None:
        return grid_for(model)
    m = max(model.twisted_degrees)
    return build_grid(cfg.grid[0], cfg.grid[1], max_degree=2 * m if m else None)


def initial_metric(cfg: ExperimentConfig, grid) -> MetricField:
    kind = cfg.initial["kind"]
    if kind == "fs":
        return MetricField.reference(cfg.degrees, grid)
    if kind == "fs_perturbed":
        return ex.perturbed_metric(cfg.degrees, grid, cfg.initial["seed"], cfg.initial["amplitude"])
    values = io.read_field(cfg.initial["path"], grid.shape)
    return MetricField(values, cfg.degrees, grid)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=float))


def _write_summary(out: Path, name: str, payload: dict) -> None:
    io.atomic_write(out / f"{name}.json", json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


def cmd_balance(cfg: ExperimentConfig, out: Path, t_default: float = 200.0) -> int:
    model = cfg.model()
    grid = _grid(cfg, model)
    basis = build_section_basis(model, grid)
    fc = cfg.flow_config(t_default)
    if fc.sample_dt is None:
        fc.sample_dt = max(fc.dt, fc.t_max / 200)
    trace = run_flow(initial_metric(cfg, grid), basis, fc, curvature=False)
    io.write_trace(out / "trace.csv", trace, asdict(cfg))
    io.write_inner(out / "final_inner.bin", trace.final)
    final = trace.rows[-1]["mu0_norm"] if trace.rows else float("nan")
    _emit({"converged": trace.converged, "steps": trace.steps, "mu0_norm": final, "events": trace.events})
    if trace.aborted:
        return EXIT_NUMERIC
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _split_reference(cfg: ExperimentConfig, grid):
    if cfg.degrees == (1, -1) and cfg.initial["kind"] == "fs":
        return lambda s: ex.split_solution(grid, s)
    return None


def _run_sweep(name: str, func, cfg: ExperimentConfig, out: Path, threshold: float, **kwargs) -> int:
    ks = cfg.k_sweep or list(ex.DEFAULT_SWEEP)
    if len(ks) < 3:
        raise ConfigError("k_sweep needs at least 3 values to fit a slope")
    result = ex.sweep(name, func, ks, threshold, **kwargs)
    payload = result.summary()
    _write_summary(out, name, payload)
    _emit(payload)
    return EXIT_OK if result.passed else EXIT_NOT_CONVERGED


def _perturbation(cfg: ExperimentConfig) -> dict:
    if cfg.initial["kind"] != "fs_perturbed":
        raise ConfigError("this harness needs initial.kind = fs_perturbed")
    return {"degrees": cfg.degrees, "seed": cfg.initial["seed"], "amplitude": cfg.initial["amplitude"]}


def cmd_bflow(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.k_sweep is not None:
        if cfg.degrees != (1, -1) or cfg.initial["kind"] != "fs":
            raise ConfigError("the bflow sweep uses the closed-form model: degrees [1,-1], initial fs")
        return _run_sweep("bflow", ex.flow_error, cfg, out, -0.8, t=cfg.t)
    model = cfg.model()
    grid = _grid(cfg, model)
    basis = build_section_basis(model, grid)
    fc = cfg.flow_config(cfg.t)
    trace = run_flow(initial_metric(cfg, grid), basis, fc, reference=_split_reference(cfg, grid))
    io.write_trace(out / "trace.csv", trace, asdict(cfg))
    io.write_inner(out / "final_inner.bin", trace.final)
    if "bin" in cfg.formats:
        io.write_field(out / "final_metric.bin", fs(trace.final, basis).values)
    _emit({"steps": trace.steps, "last": trace.rows[-1] if trace.rows else None, "events": trace.events})
    return EXIT_NUMERIC if trace.aborted else EXIT_OK


def cmd_iterate(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.k_sweep is not None:
        if cfg.degrees != (1, -1) or cfg.initial["kind"] != "fs":
            raise ConfigError("the iterate sweep uses the closed-form model: degrees [1,-1], initial fs")
        return _run_sweep("iterate", ex.iterate_error, cfg, out, -0.8, t=cfg.t)
    model = cfg.model()
    grid = _grid(cfg, model)
    basis = build_section_basis(model, grid)
    m = int(np.floor(cfg.t * cfg.k))
    h = phi_iterate(initial_metric(cfg, grid), basis, m)
    for fmt_ in cfg.formats:
        io.write_field(out / f"iterate.{fmt_}", h.values)
    payload = {"m": m, "k": cfg.k}
    ref = _split_reference(cfg, grid)
    if ref is not None:
        payload["sup_err"] = ex.relative_sup_error(h, ref(cfg.t))
    _emit(payload)
    return EXIT_OK


def cmd_heatflow(cfg: ExperimentConfig, out: Path) -> int:
    model = cfg.model()
    grid = _grid(cfg, model) if cfg.grid is not None else build_grid(24, 32)
    h0 = initial_metric(cfg, grid)
    dt = float(cfg.flow.get("dt", parabolic_dt(grid)))
    ref = _split_reference(cfg, grid)
    trace = run_heat_flow(h0, float(cfg.flow.get("t_max", cfg.t)), dt, cfg.mode,
                          sample_dt=cfg.flow.get("sample_dt"), reference=ref)
    io.write_trace(out / "trace.csv", trace, asdict(cfg))
    if trace.final is not None:
        for fmt_ in cfg.formats:
            io.write_field(out / f"final_metric.{fmt_}", trace.final.values)
    _emit({"steps": trace.steps, "last": trace.rows[-1], "events": trace.events})
    return EXIT_NUMERIC if trace.aborted else EXIT_OK


def cmd_ctyz(cfg: ExperimentConfig, out: Path) -> int:
    return _run_sweep("ctyz", ex.ctyz_error, cfg, out, -1.8, **_perturbation(cfg))


def cmd_qk(cfg: ExperimentConfig, out: Path) -> int:
    return _run_sweep("qk", ex.qk_error, cfg, out, -0.9, **_perturbation(cfg))


def cmd_tangent_gap(cfg: ExperimentConfig, out: Path) -> int:
    return _run_sweep("tangent_gap", ex.tangent_gap_value, cfg, out, -1.8, **_perturbation(cfg))


def cmd_distance(paths: list[str]) -> int:
    if len(paths) == 1:
        raise ConfigError("distance needs two inner-product files (or one plus --config for Hilb(initial))")
    H0, H1 = io.read_inner(paths[0]), io.read_inner(paths[1])
    if H0.k != H1.k or H0.degrees != H1.degrees:
        raise ConfigError("inner products belong to different models")
    _emit({"d_k": bergman_distance(H0, H1, H0.k)})
    return EXIT_OK


def _distance_to_initial(cfg: ExperimentConfig, path: str) -> int:
    H1 = io.read_inner(path)
    model = cfg.model()
    grid = _grid(cfg, model)
    basis = build_section_basis(model, grid)
    H0 = hilb(initial_metric(cfg, grid), basis)
    if H0.matrix.shape != H1.matrix.shape:
        raise ConfigError("inner product does not match the configured model")
    _emit({"d_k": bergman_distance(H0, H1, model.k)})
    return EXIT_OK


COMMANDS = {
    "balance": cmd_balance,
    "heatflow": cmd_heatflow,
    "bflow": cmd_bflow,
    "iterate": cmd_iterate,
    "ctyz": cmd_ctyz,
    "qk": cmd_qk,
    "tangent-gap": cmd_tangent_gap,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="balflow", description="Balancing flow and Donaldson heat flow experiments")
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    parser.add_argument("--seed", type=int, default=None, help="override the perturbation seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("command", choices=sorted(COMMANDS) + ["distance"])
    parser.add_argument("files", nargs="*", help="inner-product files for 'distance'")
    return parser


def _load(args) -> ExperimentConfig:
    text = Path(args.config).read_text() if args.config else "{}"
    cfg = parse_config(text)
    if args.seed is not None and cfg.initial["kind"] == "fs_perturbed":
        cfg.initial = {**cfg.initial, "seed": args.seed}
    if args.out:
        cfg.out = args.out
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            if args.command == "distance":
                if args.config and len(args.files) == 1:
                    return _distance_to_initial(_load(args), args.files[0])
                return cmd_distance(args.files)
            cfg = _load(args)
            return COMMANDS[args.command](cfg, Path(cfg.out))
    except (ConfigError, GridResolutionError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PositivityError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
