"""Command-line entry point: ``gcnn-vmc {train,ed,masking-experiment,verify}``.

Configuration files are flat TOML tables, e.g.::

    geometry = "triangular"
    L = 4
    J2 = 0.125
    preset = "desk"
    stage1_steps = 2000   # optimizer steps
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .checks import invariant_suite
from .ed import MAX_SITES, ground_state, variational_energy
from .exceptions import CheckpointError, EDConvergenceError, EDRangeError, NodeError, NonFiniteActivation
from .gcnn import MASKINGS, GcnnConfig, Wavefunction, count_params, param_count_report
from .heisenberg import HeisenbergModel
from .io import TraceWriter, load_into, save_checkpoint
from .lattice import build_lattice, ring
from .symmetry import build_group, character_from_name
from .vmc import NumericalFailure, SamplerConfig, TrainSchedule, evaluate_energy, masking_experiment, train

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("gcnn_vmc")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

# desk-scale budget for L = 4 tori
DESK_PRESET = {
    "support": "full",
    "n_layers": 2,
    "width": 4,
    "phase_preopt_steps": 200,
    "stage1_steps": 2000,
    "stage1_batch": 100,
    "stage2_steps": 50,
    "stage2_batch": 1000,
    "lr_reduction": 3.0,
    "sweeps_between": 5,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    geometry: str = "triangular"
    L: int = 6
    J1: float = 1.0
    J2: float = 0.125
    masking: str = "full"
    support: str = "third-neighbor"
    n_layers: int = 4
    width: int = 16
    character: str = "symmetric"
    # schedule; step counts are optimizer steps, batch sizes are samples per step
    phase_preopt_steps: int = 500
    stage1_steps: int = 10_000
    stage1_batch: int = 100
    stage2_steps: int = 2_000
    stage2_batch: int = 1_000
    learning_rate: float = 3e-3
    lr_reduction: float = 1.0
    reset_adam_after_preopt: bool = False
    # sampler; n_chains = 0 means one chain per sample
    n_chains: int = 0
    sweeps_between: int = 1
    burn_in: int = 50
    seed: int = 0
    output: str = "runs/default"
    eval_samples: int = 2000
    modes: list = field(default_factory=lambda: ["full", "translational", "point-group", "diagonal"])
    timing: bool = True
    dump_vector: bool = False
    preset: str = "full"

    def validate(self) -> "RunConfig":
        if self.geometry not in ("square", "triangular", "ring"):
            raise ConfigError(f"geometry must be 'square', 'triangular' or 'ring', got {self.geometry!r}")
        for name in ("L", "n_layers", "width", "stage1_batch", "stage2_batch", "sweeps_between", "eval_samples"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        n_sites = self.L if self.geometry == "ring" else self.L * self.L
        if self.geometry != "ring" and self.L < 3:
            raise ConfigError(f"L must be at least 3, got {self.L}")
        if n_sites % 2:
            raise ConfigError(f"the zero-magnetization sector needs an even site count, got {n_sites}")
        for name in ("phase_preopt_steps", "stage1_steps", "stage2_steps", "burn_in", "n_chains", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        if self.J1 < 0 or self.J2 < 0:
            raise ConfigError("J1 and J2 must be non-negative")
        if not self.learning_rate > 0 or not self.lr_reduction > 0:
            raise ConfigError("learning_rate and lr_reduction must be positive")
        if self.masking not in MASKINGS:
            raise ConfigError(f"masking must be one of {MASKINGS}")
        bad = [m for m in self.modes if m not in MASKINGS]
        if bad or not self.modes:
            raise ConfigError(f"modes must be a non-empty subset of {MASKINGS}, got {self.modes}")
        if self.support not in ("full", "third-neighbor"):
            raise ConfigError(f"unknown support {self.support!r}")
        if self.character not in ("symmetric", "reflection-odd"):
            raise ConfigError(f"unknown character sector {self.character!r}")
        return self

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        preset = data.get("preset", "full")
        base = {}
        if preset == "desk":
            base = dict(DESK_PRESET)
        elif preset != "full":
            raise ConfigError(f"unknown preset {preset!r}")
        base.update(data)
        try:
            cfg = cls(**base)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            phase_preopt_steps=self.phase_preopt_steps,
            stage1_steps=self.stage1_steps,
            stage1_batch=self.stage1_batch,
            stage2_steps=self.stage2_steps,
            stage2_batch=self.stage2_batch,
            learning_rate=self.learning_rate / self.lr_reduction,
            reset_adam_after_preopt=self.reset_adam_after_preopt,
        )

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.n_chains or None, self.sweeps_between, self.burn_in, self.seed)

    def to_toml(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            lines.append(f"{k} = {json.dumps(v)}")
        return "\n".join(lines) + "\n"


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_mapping(data)


class System:
    """Lattice, group, Hamiltonian and a wavefunction built from a RunConfig."""

    def __init__(self, cfg: RunConfig, masking: str | None = None):
        if cfg.geometry == "ring":
            raise ConfigError("ring geometry is only available to the ed command")
        self.cfg = cfg
        self.lattice = build_lattice(cfg.geometry, cfg.L, cfg.support)
        self.model = HeisenbergModel(self.lattice, cfg.J1, cfg.J2)
        self.group = build_group(self.lattice)
        self.gcnn_config = GcnnConfig(
            n_layers=cfg.n_layers,
            width=cfg.width,
            masking=masking or cfg.masking,
            support=cfg.support,
            character=character_from_name(self.group, cfg.character),
            seed=cfg.seed,
        )

    def wavefunction(self) -> Wavefunction:
        return Wavefunction(self.gcnn_config, self.group, self.lattice)

    def n_params(self) -> int:
        return count_params(self.gcnn_config, self.group, self.lattice)


def _write_json(path: Path, record: dict) -> None:
    path.write_text(json.dumps(record, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _ed_reference(model: HeisenbergModel):
    if model.n_sites > MAX_SITES:
        return None
    return ground_state(model)


def _trace_sink(cfg: RunConfig, writer: TraceWriter):
    if cfg.timing:
        return writer
    return lambda rec: writer(dict(rec, wall_ms=0.0))


def _summarize(cfg: RunConfig, system: System, wf: Wavefunction, trace_name: str, ckpt_name: str, ed=None) -> dict:
    stats = evaluate_energy(wf, system.model, cfg.eval_samples, cfg.sampler()).scaled(system.model.n_sites)
    summary = {
        "masking": wf.config.masking,
        "energy_per_site": stats.mean.real,
        "energy_im_per_site": stats.mean.imag,
        "std_error": stats.std_error,
        "variance": stats.variance,
        "acceptance": stats.acceptance,
        "eval_samples": stats.n_samples,
        "n_params": wf.n_params,
        "param_counts": param_count_report(wf.config, wf.group, wf.lattice),
        "trace": trace_name,
        "checkpoint": ckpt_name,
    }
    if ed is not None:
        n = system.model.n_sites
        exact = variational_energy(system.model, wf.log_psi, ed.basis) / n
        summary.update(
            ed_energy_per_site=ed.e0_per_site,
            relative_error=(stats.mean.real - ed.e0_per_site) / abs(ed.e0_per_site),
            exact_variational_energy_per_site=exact,
            exact_relative_error=(exact - ed.e0_per_site) / abs(ed.e0_per_site),
        )
    return summary


def cmd_train(cfg: RunConfig, out: Path) -> int:
    system = System(cfg)
    (out / "config.toml").write_text(cfg.to_toml())
    ed = _ed_reference(system.model)
    wf = system.wavefunction()
    with TraceWriter(out / "trace.jsonl") as writer:
        train(wf, system.model, cfg.schedule(), cfg.sampler(), _trace_sink(cfg, writer))
    save_checkpoint(wf, out / "checkpoint.gcnn")
    summary = _summarize(cfg, system, wf, "trace.jsonl", "checkpoint.gcnn", ed)
    _write_json(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in summary if k != "param_counts"}, default=_json_default))
    return EXIT_OK


def cmd_ed(cfg: RunConfig, out: Path) -> int:
    lattice = ring(cfg.L) if cfg.geometry == "ring" else build_lattice(cfg.geometry, cfg.L)
    model = HeisenbergModel(lattice, cfg.J1, cfg.J2)
    result = ground_state(model)
    record = result.to_record()
    record.update(geometry=cfg.geometry, L=cfg.L, J1=cfg.J1, J2=cfg.J2)
    _write_json(out / "ed.json", record)
    if cfg.dump_vector:
        result.save_vector(out / "ed_vector.f64")
    print(json.dumps(record))
    return EXIT_OK


def cmd_masking_experiment(cfg: RunConfig, out: Path) -> int:
    (out / "config.toml").write_text(cfg.to_toml())
    system = System(cfg)
    ed = _ed_reference(system.model)
    writers = {m: TraceWriter(out / f"trace_{m}.jsonl") for m in cfg.modes}
    try:
        results = masking_experiment(system.model, cfg.schedule(), cfg.modes, system.gcnn_config, system.group,
                                     cfg.sampler(), lambda m: _trace_sink(cfg, writers[m]))
    finally:
        for w in writers.values():
            w.close()
    per_mode = {}
    for mode, (wf, _) in results.items():
        save_checkpoint(wf, out / f"checkpoint_{mode}.gcnn")
        per_mode[mode] = _summarize(cfg, system, wf, f"trace_{mode}.jsonl", f"checkpoint_{mode}.gcnn", ed)
    feature = {m: s["param_counts"]["feature_layers"][0] if s["param_counts"]["feature_layers"] else 0
               for m, s in per_mode.items()}
    ratios = {}
    if "diagonal" in feature and feature["diagonal"]:
        ratios = {f"{m}/diagonal": feature[m] / feature["diagonal"] for m in feature if m != "diagonal"}
    summary = {
        "modes": per_mode,
        "feature_layer_param_counts": feature,
        "feature_layer_ratios": ratios,
        "param_count_order": sorted(per_mode, key=lambda m: -per_mode[m]["n_params"]),
    }
    _write_json(out / "summary.json", summary)
    print(json.dumps({m: [s["energy_per_site"], s["std_error"], s["n_params"]] for m, s in per_mode.items()}))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, checkpoint: Path) -> int:
    system = System(cfg)
    wf = system.wavefunction()
    load_into(wf, checkpoint)
    n = system.model.n_sites
    stats = evaluate_energy(wf, system.model, cfg.eval_samples, replace(cfg.sampler(), seed=cfg.seed + 1)).scaled(n)
    checks = {}
    suite = invariant_suite(wf, n_pairs=20, seed=cfg.seed, all_elements=True)
    checks["equivariance"] = {"value": suite["equivariance_max_rel_error"], "tol": 1e-10}
    checks["character"] = {"value": suite["character_max_error"], "tol": 1e-10}
    for c in checks.values():
        c["pass"] = bool(c["value"] < c["tol"])
    summary_path = checkpoint.parent / "summary.json"
    if summary_path.exists():
        prior = json.loads(summary_path.read_text())
        if "energy_per_site" in prior:
            margin = 3 * np.hypot(prior["std_error"], stats.std_error)
            diff = abs(stats.mean.real - prior["energy_per_site"])
            checks["energy_consistency"] = {"value": diff, "tol": margin, "pass": bool(diff <= margin)}
    report = {
        "checkpoint": str(checkpoint),
        "energy_per_site": stats.mean.real,
        "std_error": stats.std_error,
        "checks": checks,
        "passed": all(c["pass"] for c in checks.values()),
    }
    _write_json(out / "verify.json", report)
    for name, c in checks.items():
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}: {c['value']:.3e} (tol {c['tol']:.3e})")
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcnn-vmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "ed", "masking-experiment", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--output", type=Path)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--checkpoint", required=True, type=Path)
    return parser


def _fail(out: Path | None, code: int, exc: BaseException) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    if out is not None and out.is_dir():
        try:
            _write_json(out / "error.json", record)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = None
    try:
        cfg = load_config(args.config, {"seed": args.seed, "output": str(args.output) if args.output else None})
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            if args.command == "train":
                return cmd_train(cfg, out)
            if args.command == "ed":
                return cmd_ed(cfg, out)
            if args.command == "masking-experiment":
                return cmd_masking_experiment(cfg, out)
            return cmd_verify(cfg, out, args.checkpoint)
    except CheckpointError as exc:
        code = EXIT_VALIDATION if "mismatch" in str(exc) else EXIT_IO
        return _fail(out, code, exc)
    except (ConfigError, EDRangeError, ValueError) as exc:
        return _fail(out, EXIT_VALIDATION, exc)
    except (NumericalFailure, NonFiniteActivation, NodeError, EDConvergenceError, FloatingPointError) as exc:
        return _fail(out, EXIT_NUMERICAL, exc)
    except OSError as exc:
        return _fail(out, EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
