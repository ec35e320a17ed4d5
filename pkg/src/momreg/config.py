"""Plain-text experiment configuration.

One ``key = value`` per line. Keys are either top-level or dotted with a
section name (``solver.K = 10``); a ``[section]`` line prefixes the keys
that follow it. ``#`` starts a comment. Numbers may be written as small
arithmetic expressions (``1/sqrt(200)``) and lists are comma separated::

    experiment = error-vs-outliers
    repetitions = 10
    outlier_fractions = 0, 0.01, 0.02

    [gen]
    N_good = 200
    d = 500

    [solver]
    algorithm = admm
    lambda = 1/sqrt(200)

    [cv]
    grid_K = 1, 2, 4, 8

Unknown keys are rejected with their line number.
"""
import ast
import math
import operator
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .blocks import BLOCK_MODES, BlockPolicy
from .dataset import COEFFICIENT_STYLES, GenSpec
from .exceptions import ParameterError
from .regularizers import PENALTY_KINDS, Penalty
from .solvers import ALGORITHMS, MODES, STEP_POLICIES, SolverConfig
from .tuning import CvSpec

EXPERIMENTS = ("single-fit", "error-vs-outliers", "adaptive-k", "adaptive-lambda",
               "fixed-vs-random", "detect-outliers", "breakdown")
NEEDS_CV = ("error-vs-outliers", "adaptive-k", "adaptive-lambda")
FRACTIONS_DEFAULT = tuple(i / 100 for i in range(16))


class ConfigError(ParameterError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = ":".join(str(p) for p in (path, line) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)
        self.path, self.line = path, line


@dataclass(frozen=True)
class BreakdownSpec:
    rate: float = None  # None: 10 x the median clean-data error
    m_max: int = 30


@dataclass
class ExperimentConfig:
    experiment: str = "single-fit"
    gen: GenSpec = field(default_factory=GenSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    cv: CvSpec = None
    breakdown: BreakdownSpec = field(default_factory=BreakdownSpec)
    repetitions: int = 10
    outlier_fractions: tuple = FRACTIONS_DEFAULT
    output_dir: str = "results"
    data: str = None  # optional CSV dataset used instead of ``gen``
    source_lines: dict = field(default_factory=dict, repr=False, compare=False)

    def validate(self, path=None):
        def fail(msg, key):
            raise ConfigError(msg, path, self.source_lines.get(key))

        if self.experiment not in EXPERIMENTS:
            fail(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}", "experiment")
        if self.repetitions < 1:
            fail("repetitions must be positive", "repetitions")
        for f in self.outlier_fractions:
            if not 0 <= f < 1:
                fail(f"outlier fraction {f} outside [0, 1)", "outlier_fractions")
        if self.experiment in NEEDS_CV and self.cv is None:
            fail(f"experiment {self.experiment!r} needs a [cv] section", "experiment")
        try:
            self.gen.validate()
        except ParameterError as exc:
            fail(str(exc), _first_key(self.source_lines, "gen."))
        # every generated dataset has at least N_good rows
        try:
            self.solver.validate(self.gen.n_total if self.data is None else None)
        except ParameterError as exc:
            key = "solver.K" if "K=" in str(exc) else _first_key(self.source_lines, "solver.")
            fail(str(exc), key)
        if self.cv is not None:
            cv = self.cv
            if cv.V < 2 or cv.V > self.gen.n_total:
                fail(f"V={cv.V} must lie in [2, N]", "cv.V")
            fold = self.gen.n_total // cv.V
            if not 1 <= cv.resolved_K_prime() <= fold:
                fail(f"K'={cv.resolved_K_prime()} must lie in [1, N/V={fold}]", "cv.K_prime")
            if not cv.grid_K or min(cv.grid_K) < 1 or max(cv.grid_K) > self.gen.n_total - fold:
                fail("grid_K values must lie in [1, training size]", "cv.grid_K")
            if not cv.grid_lambda or min(cv.grid_lambda) < 0:
                fail("grid_lambda must be non-empty and non-negative", "cv.grid_lambda")
        if self.breakdown.rate is not None and not self.breakdown.rate > 0:
            fail("breakdown rate must be positive", "breakdown.rate")
        if self.breakdown.m_max < 0:
            fail("breakdown m_max must be non-negative", "breakdown.m_max")
        return self


def _first_key(lines, prefix):
    keys = [k for k in lines if k.startswith(prefix)]
    return min(keys, key=lines.get) if keys else None


# --------------------------------------------------------------------------
# value parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt, "log": math.log, "exp": math.exp}
_CONSTS = {"e": math.e, "pi": math.pi, "inf": math.inf}


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.Name) and node.id in _CONSTS:
        return _CONSTS[node.id]
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval(node.args[0]))
    raise ValueError("not a number")


def _number(text):
    try:
        return _eval(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ValueError, TypeError, ZeroDivisionError, OverflowError) as exc:
        raise ValueError(f"cannot read {text!r} as a number") from exc


def _int(text):
    v = _number(text)
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError(f"{text!r} is not an integer")
        v = int(v)
    return v


def _float(text):
    return float(_number(text))


def _items(text):
    return [x for x in (s.strip() for s in text.split(",")) if x]


def _int_list(text):
    return tuple(_int(x) for x in _items(text))


def _float_list(text):
    return tuple(_float(x) for x in _items(text))


def _choice(options):
    def parse(text):
        text = text.strip()
        if text not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(options)}")
        return text
    return parse


def _text(text):
    return text.strip()


def _optional_int(text):
    return None if text.strip().lower() == "none" else _int(text)


_SCHEMA = {
    "": {
        "experiment": _choice(EXPERIMENTS),
        "repetitions": _int,
        "outlier_fractions": _float_list,
        "output_dir": _text,
        "data": _text,
    },
    "gen": {
        "N_good": _int, "N_bad2": _int, "N_bad3": _int, "N_bad4": _int, "N_bad5": _int,
        "d": _int, "s": _int, "sigma": _float,
        "coefficient_style": _choice(COEFFICIENT_STYLES),
        "ar_rho": _float, "student_df": _float, "seed": _int,
    },
    "solver": {
        "algorithm": _choice(ALGORITHMS), "K": _int, "lambda": _float,
        "penalty": _choice(PENALTY_KINDS), "slope_weights": _float_list,
        "block_policy": _choice(BLOCK_MODES), "block_seed": _optional_int,
        "max_iters": _int, "eps_stop": _float, "step_policy": _choice(STEP_POLICIES),
        "armijo_rho": _float, "armijo_delta": _float, "armijo_gamma0": _float,
        "admm_rho": _float, "mode": _choice(MODES), "seed": _int,
    },
    "cv": {
        "V": _int, "grid_K": _int_list, "grid_lambda": _float_list,
        "K_prime": _optional_int, "seed": _int,
    },
    "breakdown": {"rate": _float, "m_max": _int},
}


def parse_text(text, path=None):
    """Parse configuration text; see the module docstring for the format."""
    values, lines = {}, {}
    sections_seen = set()
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", path, lineno)
            section = line[1:-1].strip()
            if section not in _SCHEMA or section == "":
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            sections_seen.add(section)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if "." in key:
            sec, name = key.split(".", 1)
        else:
            sec, name = section, key
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section {sec!r} in key {key!r}", path, lineno)
        full = f"{sec}.{name}" if sec else name
        if name not in _SCHEMA[sec]:
            raise ConfigError(f"unknown key {full!r}", path, lineno)
        if full in values:
            raise ConfigError(f"duplicate key {full!r} (first set on line {lines[full]})", path, lineno)
        try:
            values[full] = _SCHEMA[sec][name](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {full!r}: {exc}", path, lineno) from None
        lines[full] = lineno
        if sec:
            sections_seen.add(sec)
    cfg = _build(values, sections_seen, lines, path)
    return cfg.validate(path)


def parse_config(path):
    """Read and validate the configuration file at ``path``."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_text(text, path)


def _section(values, name):
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}


def _build(values, sections, lines, path):
    def guard(fn, key_prefix):
        try:
            return fn()
        except ParameterError as exc:
            raise ConfigError(str(exc), path, lines.get(_first_key(lines, key_prefix))) from None

    gen = guard(lambda: GenSpec(**_section(values, "gen")), "gen.")

    sv = _section(values, "solver")
    penalty = guard(lambda: Penalty(sv.pop("penalty", "l1"),
                                    np.array(sv.pop("slope_weights")) if "slope_weights" in sv else None),
                    "solver.penalty")
    policy = guard(lambda: BlockPolicy(sv.pop("block_policy", "random-each-step"),
                                       sv.pop("block_seed", None)), "solver.block_policy")
    if "lambda" in sv:
        sv["lam"] = sv.pop("lambda")
    solver = SolverConfig(penalty=penalty, block_policy=policy, **sv)

    cv = None
    if "cv" in sections:
        cv = CvSpec(**_section(values, "cv"))

    breakdown = BreakdownSpec(**_section(values, "breakdown"))
    top = {k: v for k, v in values.items() if "." not in k}
    return ExperimentConfig(gen=gen, solver=solver, cv=cv, breakdown=breakdown,
                            source_lines=dict(lines), **top)


def with_seed(config, seed):
    """Copy of ``config`` with every seed replaced by ``seed``."""
    cv = None if config.cv is None else replace(config.cv, seed=seed)
    return replace(config, gen=replace(config.gen, seed=seed),
                   solver=config.solver.with_(seed=seed), cv=cv)


def describe(config):
    """Config rendered back to the text format (all fields, defaults included)."""
    out = [f"experiment = {config.experiment}",
           f"repetitions = {config.repetitions}",
           "outlier_fractions = " + ", ".join(repr(float(f)) for f in config.outlier_fractions),
           f"output_dir = {config.output_dir}"]
    if config.data:
        out.append(f"data = {config.data}")
    out.append("\n[gen]")
    out += [f"{f.name} = {getattr(config.gen, f.name)}" for f in fields(GenSpec)]
    s = config.solver
    out.append("\n[solver]")
    for f in fields(SolverConfig):
        if f.name == "penalty":
            out.append(f"penalty = {s.penalty.kind}")
            if s.penalty.slope_weights is not None:
                out.append("slope_weights = " + ", ".join(repr(float(w)) for w in s.penalty.slope_weights))
        elif f.name == "block_policy":
            out.append(f"block_policy = {s.block_policy.mode}")
            out.append(f"block_seed = {s.block_policy.seed}")
        elif f.name == "lam":
            out.append(f"lambda = {s.lam!r}")
        else:
            out.append(f"{f.name} = {getattr(s, f.name)}")
    if config.cv is not None:
        cv = config.cv
        out.append("\n[cv]")
        out.append(f"V = {cv.V}")
        out.append("grid_K = " + ", ".join(str(k) for k in cv.grid_K))
        out.append("grid_lambda = " + ", ".join(repr(float(x)) for x in cv.grid_lambda))
        out.append(f"K_prime = {cv.K_prime}")
        out.append(f"seed = {cv.seed}")
    out.append("\n[breakdown]")
    if config.breakdown.rate is not None:
        out.append(f"rate = {config.breakdown.rate!r}")
    out.append(f"m_max = {config.breakdown.m_max}")
    return "\n".join(out) + "\n"
