"""Experiment configuration: YAML text, validation with path-like error locations, defaults."""

import copy
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import birth_laws, kernels, spectral
from .errors import ConfigError, SemiwaveError

KINDS = ("spectrum", "profile", "simulate", "comparison", "local", "global", "subsuper",
         "squeeze", "persistence", "speed_selection")

# subcommand -> experiment kinds it accepts ("report" accepts all)
SUBCOMMAND_KINDS = {
    "spectrum": ("spectrum",),
    "profile": ("profile",),
    "simulate": ("simulate",),
    "compare": ("comparison",),
    "stability": ("local", "global", "subsuper", "squeeze", "persistence"),
    "speedsel": ("speed_selection",),
    "report": KINDS,
}

KERNEL_KEYS = {
    "gaussian": {"mu": 0.0, "var": 1.0, "mass": 1.0},
    "uniform": {"a": -1.0, "b": 1.0, "mass": 1.0},
    "laplace": {"mu": 0.0, "scale": 1.0, "mass": 1.0},
    "tabulated": {"path": None, "mass": None},
    "asymmetric_example": {"rho": 5.0, "reading": "heat"},
    "tensor_product": {"factors": None},
}

BIRTH_KEYS = {
    "nicholson": {"p": None, "domain_cap": None},
    "mackey_glass": {"p": None, "n": None, "domain_cap": None},
    "kpp_quadratic": {"r": None, "domain_cap": None},
    "linear": {"r": None, "domain_cap": None},
    "tabulated": {"path": None, "domain_cap": None},
}

FRAME_DEFAULTS = {"d": 1, "c": "critical", "nu": None, "h_delay": 1.0}
GRID_DEFAULTS = {"extent": None, "dz": 0.05, "m_per_delay": None, "dt_factor": 0.9,
                 "left_fill": "auto", "right_fill": "auto", "method": "direct"}
EXPERIMENT_DEFAULTS = {"name": "experiment", "kind": None, "T_horizon": 10.0, "sample_every": None,
                       "window": None, "probes": ["sup", "inf"], "params": {}, "datum": None,
                       "datum_b": None, "snapshots": False}
TOP_KEYS = ("seed", "kernel", "birth", "frame", "grid", "experiment")

LAMBDA_WORDS = ("lambda1", "lambda2", "best", "mid", "half_lambda1")
DATUM_FORMS = {
    "constant": {"value": None},
    "step": {"value": 0.1, "z0": 0.0, "orientation": "left"},
    "exp_tail": {"amplitude": 0.01, "rate": "lambda1", "speed": None},
    "bump": {"amplitude": 1.0, "center": 0.0, "width": 5.0},
    "profile": {"perturbations": []},
}
PERTURBATION_KEYS = {
    "bump": {"amplitude": 0.1, "center": 0.0, "width": 2.0, "relative": False},
    "gaussian": {"amplitude": 0.1, "center": 0.0, "width": 1.0, "relative": False},
    "weighted_gaussian": {"amplitude": 0.01, "center": -20.0, "width": 1.0},
    "leading_edge": {"amplitude": 0.05, "taper": 10.0, "stop": -5.0},
    "noise": {"amplitude": 0.01, "center": 0.0, "width": 10.0, "smooth": 1.0},
}

_SPEED_RE = re.compile(r"^\s*critical(_minus)?\s*(([+-])\s*([0-9.eE+-]+))?\s*$")


@dataclass
class ExperimentConfig:
    seed: int
    kernel: dict
    birth: dict
    frame: dict
    grid: dict
    experiment: dict
    source: str = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def as_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in TOP_KEYS}

    def dump(self):
        return emit_config(self)

    # built objects -------------------------------------------------------

    def build_kernel(self):
        if "kernel" not in self._cache:
            self._cache["kernel"] = build_kernel(self.kernel, self.frame["d"], self.source)
        return self._cache["kernel"]

    def build_law(self):
        if "law" not in self._cache:
            self._cache["law"] = build_law(self.birth, self.source)
        return self._cache["law"]

    def speed(self):
        """Frame speed with "critical+offset" resolved through critical_speeds."""
        if "c" not in self._cache:
            self._cache["c"] = resolve_speed(self.frame["c"], self.base_frame())
        return self._cache["c"]

    def base_frame(self):
        return spectral.FrameSpec(self.frame["d"], 0.0, self.frame["h_delay"], self.build_kernel(),
                                  self.build_law(), self.frame["nu"])

    def build_frame(self):
        return self.base_frame().with_speed(self.speed())


def _err(errs, path, msg):
    errs.append(f"{path}: {msg}")


def _check_keys(block, allowed, path, errs):
    for k in block:
        if k not in allowed:
            _err(errs, f"{path}.{k}", "unknown key")


def _number(v, path, errs, lo=-math.inf, hi=math.inf, strict_lo=False, allow_none=False, integer=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _err(errs, path, f"expected a number, got {v!r}")
        return None
    if integer and int(v) != v:
        _err(errs, path, f"expected an integer, got {v!r}")
        return None
    if not math.isfinite(v):
        _err(errs, path, "must be finite")
        return None
    if v < lo or (strict_lo and v == lo) or v > hi:
        rng = f"({lo}, {hi}]" if strict_lo else f"[{lo}, {hi}]"
        _err(errs, path, f"value {v!r} outside {rng}")
        return None
    return int(v) if integer else float(v)


def _fill_defaults(block, defaults):
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(block))
    return out


def _kernel_block(block, path, errs, d):
    if not isinstance(block, dict):
        _err(errs, path, "must be a mapping")
        return None
    form = block.get("form")
    if form not in KERNEL_KEYS:
        _err(errs, f"{path}.form", f"unknown kernel form {form!r}; one of {sorted(KERNEL_KEYS)}")
        return None
    _check_keys(block, set(KERNEL_KEYS[form]) | {"form"}, path, errs)
    out = _fill_defaults(block, KERNEL_KEYS[form])
    if form == "tensor_product":
        fac = out.get("factors")
        if not isinstance(fac, list) or len(fac) != d:
            _err(errs, f"{path}.factors", f"list of {d} one-dimensional kernel blocks required")
        else:
            out["factors"] = [_kernel_block(f, f"{path}.factors[{i}]", errs, 1) for i, f in enumerate(fac)]
        return out
    if d != 1:
        _err(errs, f"{path}.form", "d=2 frames need a tensor_product kernel")
    if form in ("gaussian", "uniform", "laplace"):
        for k in KERNEL_KEYS[form]:
            lo, strict = (0.0, True) if k in ("var", "scale", "mass") else (-math.inf, False)
            out[k] = _number(out[k], f"{path}.{k}", errs, lo, strict_lo=strict)
        if form == "uniform" and out["a"] is not None and out["b"] is not None and out["a"] >= out["b"]:
            _err(errs, f"{path}.b", "must exceed a")
    elif form == "tabulated":
        if not isinstance(out["path"], str):
            _err(errs, f"{path}.path", "path to a two-column CSV required")
        out["mass"] = _number(out["mass"], f"{path}.mass", errs, 0.0, strict_lo=True, allow_none=True)
    elif form == "asymmetric_example":
        out["rho"] = _number(out["rho"], f"{path}.rho", errs)
        if out["reading"] not in ("heat", "literal"):
            _err(errs, f"{path}.reading", "one of 'heat', 'literal'")
    return out


def _birth_block(block, path, errs):
    if not isinstance(block, dict):
        _err(errs, path, "must be a mapping")
        return None
    form = block.get("form")
    if form not in BIRTH_KEYS:
        _err(errs, f"{path}.form", f"unknown birth law {form!r}; one of {sorted(BIRTH_KEYS)}")
        return None
    _check_keys(block, set(BIRTH_KEYS[form]) | {"form"}, path, errs)
    out = _fill_defaults(block, BIRTH_KEYS[form])
    for k in BIRTH_KEYS[form]:
        if k == "path":
            if not isinstance(out[k], str):
                _err(errs, f"{path}.path", "path to a two-column CSV required")
        elif k == "domain_cap":
            out[k] = _number(out[k], f"{path}.{k}", errs, 0.0, strict_lo=True, allow_none=True)
        elif k == "n":
            out[k] = _number(out[k], f"{path}.{k}", errs, 0.0, strict_lo=True)
        else:
            if out[k] is None:
                _err(errs, f"{path}.{k}", "required")
            else:
                out[k] = _number(out[k], f"{path}.{k}", errs, 0.0, strict_lo=True)
    return out


def parse_speed(v):
    """(kind, offset) for "critical[+x]" / "critical_minus[+x]", or ("value", c)."""
    if isinstance(v, bool):
        raise ValueError("speed must be a number or 'critical+offset'")
    if isinstance(v, (int, float)):
        return "value", float(v)
    m = _SPEED_RE.match(str(v))
    if not m:
        raise ValueError(f"speed must be a number or 'critical+offset', got {v!r}")
    off = 0.0
    if m.group(2):
        off = float(m.group(4)) * (-1.0 if m.group(3) == "-" else 1.0)
    return ("critical_minus" if m.group(1) else "critical"), off


def resolve_speed(spec, frame):
    kind, off = parse_speed(spec)
    if kind == "value":
        return off
    cm, cp = spectral.critical_speeds(frame)
    return (cm if kind == "critical_minus" else cp) + off


def _frame_block(block, path, errs):
    if not isinstance(block, dict):
        _err(errs, path, "must be a mapping")
        return None
    _check_keys(block, set(FRAME_DEFAULTS), path, errs)
    out = _fill_defaults(block, FRAME_DEFAULTS)
    if out["d"] not in (1, 2):
        _err(errs, f"{path}.d", "must be 1 or 2")
        out["d"] = 1
    out["h_delay"] = _number(out["h_delay"], f"{path}.h_delay", errs, 0.0, strict_lo=True)
    try:
        kind, off = parse_speed(out["c"])
        out["c"] = off if kind == "value" else out["c"]
    except ValueError as e:
        _err(errs, f"{path}.c", str(e))
    nu = out["nu"]
    if nu is None:
        nu = [1.0] + [0.0] * (out["d"] - 1)
    if not isinstance(nu, list) or len(nu) != out["d"]:
        _err(errs, f"{path}.nu", f"unit vector with {out['d']} components required")
    else:
        nu = [_number(v, f"{path}.nu[{i}]", errs) for i, v in enumerate(nu)]
        if None not in nu and abs(math.hypot(*nu) - 1.0) > 1e-12:
            _err(errs, f"{path}.nu", "must have unit length")
    out["nu"] = nu
    return out


def _fill_value(v, path, errs):
    if v in ("auto", "edge"):
        return v
    if isinstance(v, list) and len(v) in (2, 3) and v[0] == "exp":
        return ["exp"] + [_number(x, f"{path}[{i + 1}]", errs) for i, x in enumerate(v[1:])]
    num = _number(v, path, errs)
    return num


def _grid_block(block, path, errs, d):
    if not isinstance(block, dict):
        _err(errs, path, "must be a mapping")
        return None
    _check_keys(block, set(GRID_DEFAULTS), path, errs)
    out = _fill_defaults(block, GRID_DEFAULTS)
    out["dz"] = _number(out["dz"], f"{path}.dz", errs, 0.0, strict_lo=True)
    out["m_per_delay"] = _number(out["m_per_delay"], f"{path}.m_per_delay", errs, 1, allow_none=True,
                                 integer=True)
    out["dt_factor"] = _number(out["dt_factor"], f"{path}.dt_factor", errs, 0.0, strict_lo=True)
    ext = out["extent"]
    if ext is not None:
        if not isinstance(ext, list) or len(ext) != d or not all(isinstance(p, list) and len(p) == 2 for p in ext):
            _err(errs, f"{path}.extent", f"list of {d} [lo, hi] pairs required")
        else:
            for i, (lo, hi) in enumerate(ext):
                lo = _number(lo, f"{path}.extent[{i}][0]", errs)
                hi = _number(hi, f"{path}.extent[{i}][1]", errs)
                if lo is not None and hi is not None and lo >= hi:
                    _err(errs, f"{path}.extent[{i}]", "lo must be below hi")
                ext[i] = [lo, hi]
    for side in ("left_fill", "right_fill"):
        out[side] = _fill_value(out[side], f"{path}.{side}", errs)
    if out["method"] not in ("direct", "fft"):
        _err(errs, f"{path}.method", "one of 'direct', 'fft'")
    return out


def _lambda_value(v, path, errs):
    if v is None or v in LAMBDA_WORDS:
        return v
    return _number(v, path, errs)


def _datum_block(block, path, errs):
    if block is None:
        return None
    if not isinstance(block, dict) or block.get("form") not in DATUM_FORMS:
        _err(errs, f"{path}.form", f"one of {sorted(DATUM_FORMS)}")
        return None
    form = block["form"]
    _check_keys(block, set(DATUM_FORMS[form]) | {"form"}, path, errs)
    out = _fill_defaults(block, DATUM_FORMS[form])
    if form == "constant":
        out["value"] = _number(out["value"], f"{path}.value", errs, 0.0)
    elif form == "step":
        out["value"] = _number(out["value"], f"{path}.value", errs, 0.0, strict_lo=True)
        out["z0"] = _number(out["z0"], f"{path}.z0", errs)
        if out["orientation"] not in ("left", "right"):
            _err(errs, f"{path}.orientation", "one of 'left', 'right'")
    elif form == "bump":
        out["amplitude"] = _number(out["amplitude"], f"{path}.amplitude", errs, 0.0)
        out["center"] = _number(out["center"], f"{path}.center", errs)
        out["width"] = _number(out["width"], f"{path}.width", errs, 0.0, strict_lo=True)
    elif form == "exp_tail":
        out["amplitude"] = _number(out["amplitude"], f"{path}.amplitude", errs, 0.0, strict_lo=True)
        out["rate"] = _lambda_value(out["rate"], f"{path}.rate", errs)
        if out["speed"] is not None:
            try:
                parse_speed(out["speed"])
            except ValueError as e:
                _err(errs, f"{path}.speed", str(e))
    else:
        perts = out["perturbations"]
        if not isinstance(perts, list):
            _err(errs, f"{path}.perturbations", "list required")
            perts = []
        clean = []
        for i, p in enumerate(perts):
            pp = f"{path}.perturbations[{i}]"
            if not isinstance(p, dict) or p.get("shape") not in PERTURBATION_KEYS:
                _err(errs, f"{pp}.shape", f"one of {sorted(PERTURBATION_KEYS)}")
                continue
            _check_keys(p, set(PERTURBATION_KEYS[p["shape"]]) | {"shape"}, pp, errs)
            q = _fill_defaults(p, PERTURBATION_KEYS[p["shape"]])
            for k, v in q.items():
                if k in ("shape", "relative"):
                    continue
                lo = 0.0 if k in ("width", "taper", "smooth") else -math.inf
                q[k] = _number(v, f"{pp}.{k}", errs, lo, strict_lo=k in ("width", "smooth"))
            clean.append(q)
        out["perturbations"] = clean
    return out


def _experiment_block(block, path, errs):
    if not isinstance(block, dict):
        _err(errs, path, "must be a mapping")
        return None
    _check_keys(block, set(EXPERIMENT_DEFAULTS), path, errs)
    out = _fill_defaults(block, EXPERIMENT_DEFAULTS)
    if out["kind"] not in KINDS:
        _err(errs, f"{path}.kind", f"one of {list(KINDS)}")
    if not isinstance(out["name"], str) or not re.match(r"^[A-Za-z0-9_.-]+$", out["name"]):
        _err(errs, f"{path}.name", "letters, digits, '_', '-', '.' only")
    out["T_horizon"] = _number(out["T_horizon"], f"{path}.T_horizon", errs, 0.0, strict_lo=True)
    out["sample_every"] = _number(out["sample_every"], f"{path}.sample_every", errs, 1, allow_none=True,
                                  integer=True)
    w = out["window"]
    if w is not None:
        if not isinstance(w, list) or len(w) != 2:
            _err(errs, f"{path}.window", "[t_lo, t_hi] required")
        else:
            out["window"] = [_number(x, f"{path}.window[{i}]", errs, 0.0) for i, x in enumerate(w)]
    if not isinstance(out["probes"], list) or not all(isinstance(p, str) for p in out["probes"]):
        _err(errs, f"{path}.probes", "list of probe names required")
    else:
        for i, p in enumerate(out["probes"]):
            if p not in ("sup", "inf", "mass") and not re.match(r"^(u@|level@)[-+0-9.eE]+$", p):
                _err(errs, f"{path}.probes[{i}]", f"unknown probe {p!r}")
    if not isinstance(out["params"], dict):
        _err(errs, f"{path}.params", "must be a mapping")
        out["params"] = {}
    else:
        for k in ("lambda", "lambda_prime"):
            if k in out["params"]:
                out["params"][k] = _lambda_value(out["params"][k], f"{path}.params.{k}", errs)
    out["datum"] = _datum_block(out["datum"], f"{path}.datum", errs)
    out["datum_b"] = _datum_block(out["datum_b"], f"{path}.datum_b", errs)
    if not isinstance(out["snapshots"], bool):
        _err(errs, f"{path}.snapshots", "true or false")
    return out


def validate(raw, source=None) -> ExperimentConfig:
    """Check every block and collect all errors before raising."""
    errs = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: mapping of blocks required"])
    _check_keys(raw, TOP_KEYS, "<root>", errs)
    for k in ("kernel", "birth", "frame", "experiment"):
        if k not in raw:
            _err(errs, k, "missing block")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        _err(errs, "seed", "non-negative integer required")
    frame = _frame_block(raw.get("frame", {}), "frame", errs) if "frame" in raw else dict(FRAME_DEFAULTS)
    d = frame["d"] if frame else 1
    kernel = _kernel_block(raw["kernel"], "kernel", errs, d) if "kernel" in raw else None
    birth = _birth_block(raw["birth"], "birth", errs) if "birth" in raw else None
    grid = _grid_block(raw.get("grid", {}), "grid", errs, d)
    exp = _experiment_block(raw["experiment"], "experiment", errs) if "experiment" in raw else None
    if errs:
        raise ConfigError(errs)
    if frame["nu"] is None:
        frame["nu"] = [1.0] + [0.0] * (d - 1)
    return ExperimentConfig(seed, kernel, birth, frame, grid, exp, source)


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError([f"<file>: cannot read {path}: {e.strerror}"])
    return parse_text(text, source=str(p.parent))


def parse_text(text, source=None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"<file>: not valid YAML ({e})"])
    return validate(raw if raw is not None else {}, source)


def emit_config(cfg: ExperimentConfig) -> str:
    """Normalized YAML text; parse_text(emit_config(c)) == c."""
    return yaml.safe_dump(cfg.as_dict(), sort_keys=True, default_flow_style=None)


# ---------------------------------------------------------------------------
# building package objects


def _rel(path, source):
    p = Path(path)
    return p if p.is_absolute() or source is None else Path(source) / p


def build_kernel(block, d=1, source=None):
    form = block["form"]
    if form == "tensor_product":
        return kernels.tensor_product([build_kernel(f, 1, source) for f in block["factors"]])
    if form == "tabulated":
        return kernels.load_tabulated(_rel(block["path"], source), block["mass"])
    if form == "asymmetric_example":
        return kernels.asymmetric_example(block["rho"], block["reading"])
    args = {k: v for k, v in block.items() if k != "form"}
    return getattr(kernels, form)(**args)


def build_law(block, source=None):
    form = block["form"]
    if form == "tabulated":
        return birth_laws.load_tabulated(_rel(block["path"], source), block["domain_cap"])
    args = {k: v for k, v in block.items() if k != "form"}
    return getattr(birth_laws, form)(**args)


def check_buildable(cfg: ExperimentConfig):
    """Build kernel, law and frame; package errors become ConfigErrors with block paths."""
    errs = []
    for name, fn in (("kernel", cfg.build_kernel), ("birth", cfg.build_law)):
        try:
            fn()
        except (SemiwaveError, ValueError, OSError) as e:
            errs.append(f"{name}: {e}")
    if errs:
        raise ConfigError(errs)
    try:
        cfg.build_frame()
    except (SemiwaveError, ValueError) as e:
        raise ConfigError([f"frame: {e}"])
