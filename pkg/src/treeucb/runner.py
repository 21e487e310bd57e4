"""Run configuration, objective wiring, trace writing and the ask/tell loop."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Callable, Optional

import numpy as np

from . import audit as audit_mod
from .bench import (
    NoiseSpec,
    add_noise,
    contextual_wrap,
    draw_noise,
    make_rescaled,
    regret_accumulate,
)
from .engine import ConfigError, Engine, EngineConfig, singleton_partition
from .partition import Domain
from .treefit import FitConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
ENV_PREFIX = "TREEUCB_"
AUDIT_ALPHAS = (0.3, 0.5, 0.9)

EXIT_OK = 0
EXIT_AUDIT = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ProtocolError(RuntimeError):
    """The ask/tell peer broke the protocol."""


@dataclass
class RunConfig:
    algo: str = "tucb"
    objective: str = "himmelblau"
    T: int = 1000
    seed: int = 0
    C: float = 0.05
    M: float = 0.01
    exploration: str = "standard"
    v: float = 1.0
    v1: float = 1.0
    v2: float = 0.0
    v3: float = 1.0
    refinement: Optional[str] = None
    eta: float = 0.001
    max_leaves: Optional[int] = None
    leaf_exponent: Optional[float] = 0.75
    max_depth: int = 64
    min_leaf_diameter: float = 0.0
    feature_policy: str = "all"
    metric: str = "linf"
    noise: str = "uniform:0.05"
    noise_seed: Optional[int] = None
    context_seed: Optional[int] = None
    dims: int = 2
    context_dims: int = 1
    grid_n: int = 1025
    out: Optional[str] = None

    @property
    def resolved_noise_seed(self) -> int:
        return self.seed + 1 if self.noise_seed is None else self.noise_seed

    @property
    def resolved_context_seed(self) -> int:
        return self.seed + 2 if self.context_seed is None else self.context_seed

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["noise_seed"] = self.resolved_noise_seed
        d["context_seed"] = self.resolved_context_seed
        del d["out"]  # where files go does not change the run
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, text):
    if text is None or not isinstance(text, str):
        return text
    kind = _FIELD_TYPES[name]
    if text.lower() in ("none", "null", "") and "Optional" in str(kind):
        return None
    if "int" in str(kind):
        return int(text)
    if "float" in str(kind):
        return float(text)
    return text


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(cli: dict, config_file=None, environ=None) -> RunConfig:
    """Merge defaults < config file < ``TREEUCB_*`` env vars < CLI flags."""
    environ = os.environ if environ is None else environ
    merged: dict = {}
    if config_file:
        merged.update(read_config_file(config_file))
    for name in _FIELD_TYPES:
        key = ENV_PREFIX + name.upper()
        if key in environ:
            merged[name] = environ[key]
    merged.update({k: v for k, v in cli.items() if v is not None})
    try:
        cfg = RunConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.T < 1:
        raise ConfigError("T must be >= 1")
    discrete = cfg.objective.startswith("arms:")
    if cfg.algo == "ucb1" and not discrete:
        raise ConfigError(
            "ucb1 needs a discrete arm set (--objective arms:p1,p2,...) and a horizon (--T)"
        )
    if discrete and cfg.algo not in ("ucb1", "tucb"):
        raise ConfigError(f"{cfg.algo} needs a continuous objective, not an arm list")
    if cfg.objective not in ("himmelblau", "goldstein", "external") and not discrete:
        raise ConfigError(f"unknown objective {cfg.objective!r}")
    NoiseSpec.parse(cfg.noise)
    engine_config(cfg)


def engine_config(cfg: RunConfig) -> EngineConfig:
    fit = FitConfig(
        eta=cfg.eta,
        max_leaves=cfg.max_leaves,
        leaf_exponent=cfg.leaf_exponent,
        max_depth=cfg.max_depth,
        min_leaf_diameter=cfg.min_leaf_diameter,
        feature_policy=cfg.feature_policy,
        metric=cfg.metric,
    )
    refinement = cfg.refinement
    if cfg.objective.startswith("arms:"):
        refinement = "fixed"
    return EngineConfig(
        variant=cfg.algo,
        C=cfg.C,
        M=cfg.M,
        exploration=cfg.exploration,
        v=cfg.v,
        v1=cfg.v1,
        v2=cfg.v2,
        v3=cfg.v3,
        horizon=cfg.T,
        refinement=refinement,
        fit=fit,
        metric=cfg.metric,
        context_dims=cfg.context_dims if cfg.algo == "ctucb" else 0,
        seed=cfg.seed,
    )


@dataclass
class Problem:
    """Everything a run needs besides the engine."""

    engine: Engine
    observe: Optional[Callable]  # point -> reward (noisy); None for external
    value: Optional[Callable]  # point -> noiseless value
    optimum: Optional[Callable]  # context or None -> optimal value
    contexts: Optional[Callable]  # t -> context vector


def build(cfg: RunConfig) -> Problem:
    ecfg = engine_config(cfg)
    noise_rng = np.random.default_rng(cfg.resolved_noise_seed)
    spec = NoiseSpec.parse(cfg.noise)

    if cfg.objective.startswith("arms:"):
        probs = [float(p) for p in cfg.objective[5:].split(",")]
        engine = Engine(Domain((0.0,), (float(len(probs)),)), ecfg, singleton_partition(len(probs)))
        best = max(probs)

        def observe(point):
            return float(noise_rng.uniform() < probs[int(point[0])])

        return Problem(engine, observe, lambda p: probs[int(p[-1])], lambda z: best, None)

    if cfg.objective == "external":
        if cfg.algo == "ctucb":
            c = cfg.context_dims
            domain = Domain.unit(c + cfg.dims, -0.5, 0.5)
            ctx_rng = np.random.default_rng(cfg.resolved_context_seed)
            contexts = lambda t: ctx_rng.uniform(-0.5, 0.5, size=c)
        else:
            domain = Domain.unit(cfg.dims, -0.5, 0.5)
            contexts = None
        return Problem(Engine(domain, ecfg), None, None, None, contexts)

    obj = make_rescaled(cfg.objective, cfg.grid_n)
    if cfg.algo == "ctucb":
        cobj = contextual_wrap(obj)
        engine = Engine(Domain.box(obj.bounds), ecfg)
        ctx_rng = np.random.default_rng(cfg.resolved_context_seed)
        return Problem(
            engine,
            lambda z, a: cobj(z, a) + draw_noise(spec, noise_rng),
            lambda point: obj(np.asarray(point)),
            cobj.best,
            lambda t: np.array([ctx_rng.uniform(-0.5, 0.5)]),
        )
    engine = Engine(Domain.box(obj.bounds), ecfg)
    return Problem(engine, add_noise(obj, spec, noise_rng), obj, lambda z: obj.optimum, None)


class TraceWriter:
    """Line-buffered JSONL trace; every record is flushed as written."""

    def __init__(self, path, cfg: RunConfig, engine: Engine):
        self.fh = open(path, "w")
        header = {
            "type": "header",
            "format_version": FORMAT_VERSION,
            "config": cfg.to_dict(),
            "engine": engine.config.to_dict(),
            "initial_partition": engine.initial_partition.to_dict(),
        }
        self.write(header)

    def write(self, obj: dict) -> None:
        self.fh.write(json.dumps(obj) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


@dataclass
class RunResult:
    decisions: list
    values: list = field(default_factory=list)
    optima: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def audit_passed(self) -> bool:
        return all(r.passed for r in self.reports)


def _out_paths(cfg: RunConfig):
    if not cfg.out:
        return None
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d / "trace.jsonl", d / "regret.csv", d / "audit.json"


def _finish(cfg: RunConfig, prob: Problem, result: RunResult, writer, paths) -> RunResult:
    if writer is not None:
        writer.close()
    if result.decisions:
        recs = audit_mod.records_from_events(
            prob.engine.domain.lo,
            prob.engine.domain.hi,
            {r.id: (r.lo, r.hi) for r in prob.engine.initial_partition},
            ((list(d.context or ()) + list(d.arm), d.splits) for d in result.decisions),
        )
        result.reports = [audit_mod.audit(recs, a) for a in AUDIT_ALPHAS]
    if paths is not None:
        trace, regret_csv, audit_json = paths
        if result.values:
            regret_accumulate(result.values, result.optima).write_csv(regret_csv)
        audit_json.write_text(
            json.dumps({"pass": result.audit_passed, "reports": [r.to_dict() for r in result.reports]}, indent=1)
        )
    return result


def execute(cfg: RunConfig, prob: Optional[Problem] = None) -> RunResult:
    """Run ``cfg.T`` rounds in-process, writing outputs under ``cfg.out``."""
    prob = prob or build(cfg)
    if prob.observe is None:
        raise ConfigError("objective 'external' runs through the serve command")
    paths = _out_paths(cfg)
    writer = TraceWriter(paths[0], cfg, prob.engine) if paths else None
    result = RunResult([])
    try:
        for _ in range(cfg.T):
            z = prob.contexts(prob.engine.t) if prob.contexts else None
            d = prob.engine.step(prob.observe, z)
            _record(prob, d, result, writer)
    except Exception as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        _finish(cfg, prob, result, writer, paths)
        raise
    return _finish(cfg, prob, result, writer, paths)


def _record(prob: Problem, d, result: RunResult, writer) -> None:
    rec = d.to_record()
    if prob.value is not None:
        point = list(d.context or ()) + list(d.arm)
        val = float(prob.value(np.asarray(point)))
        opt = float(prob.optimum(d.context))
        result.values.append(val)
        result.optima.append(opt)
        rec["regret"] = opt - val
    result.decisions.append(d)
    if writer is not None:
        writer.write(rec)


def serve(cfg: RunConfig, stdin: IO[str], stdout: IO[str]) -> RunResult:
    """Ask/tell session: one JSON object per line in each direction.

    Raises :class:`ProtocolError` on a malformed, out-of-order or missing
    tell after emitting an ``error`` line.
    """
    prob = build(cfg)
    engine = prob.engine
    paths = _out_paths(cfg)
    writer = TraceWriter(paths[0], cfg, engine) if paths else None
    result = RunResult([])

    def emit(obj):
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    def fail(reason):
        emit({"type": "error", "reason": reason})
        result.error = reason
        _finish(cfg, prob, result, writer, paths)
        raise ProtocolError(reason)

    for _ in range(cfg.T):
        t = engine.t
        z = prob.contexts(t) if prob.contexts else None
        point = engine.ask(z)
        c = engine.config.context_dims
        msg = {"type": "ask", "t": t, "arm": [float(v) for v in point[c:]]}
        if c:
            msg["context"] = [float(v) for v in point[:c]]
        emit(msg)
        line = stdin.readline()
        if not line:
            engine.cancel()
            fail(f"end of input before tell for t={t}")
        try:
            tell = json.loads(line)
        except json.JSONDecodeError as exc:
            engine.cancel()
            fail(f"malformed JSON at t={t}: {exc.msg}")
        if not isinstance(tell, dict) or tell.get("type") != "tell":
            engine.cancel()
            fail(f"expected a tell message for t={t}")
        if tell.get("t") != t:
            engine.cancel()
            fail(f"tell for t={tell.get('t')!r}, expected t={t}")
        reward = tell.get("reward")
        if isinstance(reward, bool) or not isinstance(reward, (int, float)) or not math.isfinite(reward):
            engine.cancel()
            fail(f"tell for t={t} needs a finite numeric reward")
        d = engine.tell(float(reward))
        _record(prob, d, result, writer)
    emit({"type": "done", "t": engine.t - 1})
    return _finish(cfg, prob, result, writer, paths)
