"""Run configuration: flat `key = value` sections, strictly validated.

The format is plain UTF-8 text with `[section]` headers, `#` comments and
one `key = value` pair per line.  Unknown sections or keys are rejected so
that typos surface as errors instead of silently running defaults.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import ValidationError
from .functionals import ProblemParams, WeightModel, required_alpha
from .spectral import FractionalParams, MixedRectangleDomain

SUBCOMMANDS = ("eigen", "isometry", "sobolev", "rates", "fiber", "solve", "multiplicity")

# (section, key) -> parser name; every subcommand declares which it accepts
_KEY_TYPES = {
    ("problem", "n"): "int",
    ("problem", "s"): "float",
    ("problem", "s_list"): "float_list",
    ("problem", "n_list"): "int_list",
    ("problem", "q"): "float",
    ("problem", "lambda"): "float",
    ("problem", "lambda_list"): "float_list",
    ("domain", "lengths"): "float_list",
    ("domain", "dirichlet"): "str_list",
    ("weight", "qmax"): "float",
    ("weight", "background"): "float",
    ("weight", "rcut"): "float",
    ("weight", "maxima"): "point_list",
    ("weight", "gammas"): "float_list",
    ("weight", "alpha"): "float",
    ("instanton", "center"): "point",
    ("instanton", "rho"): "float_or_auto",
    ("instanton", "eps_pows"): "int_range",
    ("instanton", "p_list"): "float_list",
    ("numerics", "modes"): "int",
    ("numerics", "modes_list"): "int_list",
    ("numerics", "quad_points"): "int",
    ("numerics", "budget"): "int",
    ("numerics", "grad_tol"): "float",
    ("numerics", "restarts"): "int",
    ("numerics", "seed_eps"): "float_or_auto",
    ("numerics", "estimate"): "bool",
    ("numerics", "instanton_sweep"): "bool",
    ("numerics", "lambda_tilde"): "bool",
    ("numerics", "modes_count"): "int",
    ("output", "dir"): "str",
    ("output", "plots"): "bool",
}

_ALLOWED: dict[str, set[tuple[str, str]]] = {
    "eigen": {("problem", "n"), ("problem", "s"), ("domain", "lengths"),
              ("domain", "dirichlet"), ("numerics", "modes"), ("numerics", "quad_points"),
              ("numerics", "modes_count"), ("output", "dir"), ("output", "plots")},
    "isometry": {("problem", "n"), ("problem", "s_list"), ("problem", "s"),
                 ("domain", "lengths"), ("domain", "dirichlet"),
                 ("numerics", "modes"), ("numerics", "quad_points"),
                 ("numerics", "modes_count"), ("output", "dir"), ("output", "plots")},
    "sobolev": {("problem", "n_list"), ("problem", "s_list"), ("problem", "n"),
                ("problem", "s"), ("domain", "lengths"), ("domain", "dirichlet"),
                ("numerics", "modes"), ("numerics", "quad_points"),
                ("numerics", "restarts"), ("numerics", "estimate"),
                ("numerics", "instanton_sweep"), ("instanton", "center"),
                ("instanton", "rho"), ("instanton", "eps_pows"),
                ("output", "dir"), ("output", "plots")},
    "rates": {("problem", "n"), ("problem", "s"), ("domain", "lengths"),
              ("domain", "dirichlet"), ("instanton", "center"), ("instanton", "rho"),
              ("instanton", "eps_pows"), ("instanton", "p_list"),
              ("numerics", "modes"), ("numerics", "quad_points"),
              ("output", "dir"), ("output", "plots")},
    "fiber": {("problem", "n"), ("problem", "s"), ("problem", "q"),
              ("problem", "lambda"), ("problem", "lambda_list"),
              ("domain", "lengths"), ("domain", "dirichlet"),
              ("weight", "qmax"), ("weight", "background"), ("weight", "rcut"),
              ("weight", "maxima"), ("weight", "gammas"), ("weight", "alpha"),
              ("instanton", "center"), ("instanton", "rho"), ("instanton", "eps_pows"),
              ("numerics", "modes"), ("numerics", "quad_points"),
              ("output", "dir"), ("output", "plots")},
    "solve": {("problem", "n"), ("problem", "s"), ("problem", "q"), ("problem", "lambda"),
              ("domain", "lengths"), ("domain", "dirichlet"),
              ("weight", "qmax"), ("weight", "background"), ("weight", "rcut"),
              ("weight", "maxima"), ("weight", "gammas"), ("weight", "alpha"),
              ("numerics", "modes"), ("numerics", "modes_list"), ("numerics", "quad_points"),
              ("numerics", "budget"), ("numerics", "grad_tol"), ("numerics", "seed_eps"),
              ("output", "dir"), ("output", "plots")},
    "multiplicity": {("problem", "n"), ("problem", "s"), ("problem", "q"),
                     ("problem", "lambda"), ("domain", "lengths"), ("domain", "dirichlet"),
                     ("weight", "qmax"), ("weight", "background"), ("weight", "rcut"),
                     ("weight", "maxima"), ("weight", "gammas"), ("weight", "alpha"),
                     ("numerics", "modes"), ("numerics", "quad_points"),
                     ("numerics", "budget"), ("numerics", "grad_tol"),
                     ("numerics", "seed_eps"), ("numerics", "lambda_tilde"),
                     ("output", "dir"), ("output", "plots")},
}


@dataclass
class Diagnostic:
    key: str
    value: str
    message: str

    def __str__(self):
        return f"{self.key} = {self.value!r}: {self.message}"


@dataclass
class RunConfig:
    subcommand: str
    raw: dict[tuple[str, str], str]
    text: str
    values: dict[tuple[str, str], object] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.values.get((section, key), default)

    def has(self, section: str, key: str) -> bool:
        return (section, key) in self.values

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()[:16]


def _parse_value(kind: str, raw: str):
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "str":
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("on", "true", "yes", "1"):
            return True
        if low in ("off", "false", "no", "0"):
            return False
        raise ValueError(f"expected on/off, got {raw!r}")
    if kind == "int_list":
        return [int(tok) for tok in raw.replace(",", " ").split()]
    if kind == "float_list":
        return [float(tok) for tok in raw.replace(",", " ").split()]
    if kind == "str_list":
        return [tok for tok in raw.replace(",", " ").split()]
    if kind == "point":
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    if kind == "point_list":
        return [tuple(float(tok) for tok in part.replace(",", " ").split())
                for part in raw.split(";") if part.strip()]
    if kind == "float_or_auto":
        return None if raw.lower() == "auto" else float(raw)
    if kind == "int_range":
        if ".." in raw:
            lo, hi = raw.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(tok) for tok in raw.replace(",", " ").split()]
    raise AssertionError(f"unknown kind {kind}")


def parse_config(text: str, subcommand: str) -> tuple[RunConfig, list[Diagnostic]]:
    """Parse and type-check; returns the config and a list of diagnostics."""
    if subcommand not in SUBCOMMANDS:
        raise ValidationError(f"unknown subcommand {subcommand!r}")
    allowed = _ALLOWED[subcommand]
    diags: list[Diagnostic] = []
    raw: dict[tuple[str, str], str] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            continue
        if "=" not in stripped:
            diags.append(Diagnostic(f"line {lineno}", stripped,
                                    "expected 'key = value' or a [section] header"))
            continue
        if section is None:
            diags.append(Diagnostic(f"line {lineno}", stripped,
                                    "key appears before any [section] header"))
            continue
        key, _, val = stripped.partition("=")
        key = key.strip().lower()
        pair = (section, key)
        if pair not in _KEY_TYPES:
            diags.append(Diagnostic(f"{section}.{key}", val.strip(), "unknown key"))
            continue
        if pair not in allowed:
            diags.append(Diagnostic(f"{section}.{key}", val.strip(),
                                    f"key not accepted by the {subcommand!r} subcommand"))
            continue
        if pair in raw:
            diags.append(Diagnostic(f"{section}.{key}", val.strip(), "duplicate key"))
            continue
        raw[pair] = val.strip()

    cfg = RunConfig(subcommand=subcommand, raw=raw, text=text)
    for pair, rawval in raw.items():
        kind = _KEY_TYPES[pair]
        try:
            cfg.values[pair] = _parse_value(kind, rawval)
        except ValueError as exc:
            diags.append(Diagnostic(f"{pair[0]}.{pair[1]}", rawval, str(exc)))
    return cfg, diags


# ---------------------------------------------------------------------------
# object construction with diagnostics


def build_domain(cfg: RunConfig, diags: list[Diagnostic]) -> MixedRectangleDomain | None:
    lengths = cfg.get("domain", "lengths")
    dirichlet = cfg.get("domain", "dirichlet")
    if lengths is None or dirichlet is None:
        diags.append(Diagnostic("domain", "", "domain.lengths and domain.dirichlet are required"))
        return None
    try:
        return MixedRectangleDomain(tuple(lengths), dirichlet)
    except ValidationError as exc:
        diags.append(Diagnostic("domain", f"{lengths} / {dirichlet}", str(exc)))
        return None


def build_frac(cfg: RunConfig, diags: list[Diagnostic],
               s: float | None = None) -> FractionalParams | None:
    n = cfg.get("problem", "n")
    s_val = s if s is not None else cfg.get("problem", "s")
    if n is None or s_val is None:
        diags.append(Diagnostic("problem", "", "problem.n and problem.s are required"))
        return None
    try:
        return FractionalParams(float(s_val), int(n))
    except ValidationError as exc:
        diags.append(Diagnostic("problem.s", str(s_val), str(exc)))
        return None


def build_problem(cfg: RunConfig, diags: list[Diagnostic],
                  lam: float | None = None) -> ProblemParams | None:
    frac = build_frac(cfg, diags)
    if frac is None:
        return None
    q = cfg.get("problem", "q")
    lam_val = lam if lam is not None else cfg.get("problem", "lambda")
    if q is None:
        diags.append(Diagnostic("problem.q", "", "problem.q is required"))
        return None
    if lam_val is None:
        diags.append(Diagnostic("problem.lambda", "", "problem.lambda is required"))
        return None
    try:
        return ProblemParams(lam=float(lam_val), q=float(q), frac=frac)
    except ValidationError as exc:
        diags.append(Diagnostic("problem.q", f"q={q}, lambda={lam_val}", str(exc)))
        return None


def build_weight(cfg: RunConfig, diags: list[Diagnostic],
                 domain: MixedRectangleDomain | None,
                 pp: ProblemParams | None) -> WeightModel | None:
    if domain is None:
        return None
    qmax = cfg.get("weight", "qmax")
    if qmax is None:
        diags.append(Diagnostic("weight.qmax", "", "weight.qmax is required"))
        return None
    maxima = cfg.get("weight", "maxima")
    if not maxima:
        diags.append(Diagnostic("weight.maxima", "", "at least one maximum is required"))
        return None
    background = cfg.get("weight", "background", qmax)
    rcut = cfg.get("weight", "rcut", 0.0)
    gammas = cfg.get("weight", "gammas")
    if gammas is None:
        gammas = [1.0] * len(maxima)
    if len(gammas) == 1:
        gammas = gammas * len(maxima)
    if len(gammas) != len(maxima):
        diags.append(Diagnostic("weight.gammas", str(gammas),
                                f"expected {len(maxima)} gammas (one per maximum)"))
        return None
    alpha = cfg.get("weight", "alpha")
    if pp is not None:
        try:
            req = required_alpha(pp)
            alpha = req.resolve(alpha)
        except ValidationError as exc:
            diags.append(Diagnostic("weight.alpha", str(alpha), str(exc)))
            return None
    elif alpha is None:
        alpha = 0.0
    if background == qmax and rcut == 0.0:
        try:
            return WeightModel.constant(domain, float(qmax), maxima[0])
        except ValidationError as exc:
            diags.append(Diagnostic("weight", f"qmax={qmax}", str(exc)))
            return None
    try:
        return WeightModel(domain, float(qmax), float(background), float(rcut),
                           list(zip(maxima, gammas)), float(alpha))
    except ValidationError as exc:
        diags.append(Diagnostic("weight", f"maxima={maxima}", str(exc)))
        return None


def validate(cfg: RunConfig) -> list[Diagnostic]:
    """All module-level invariants checked up front; empty list means runnable."""
    diags: list[Diagnostic] = []
    sub = cfg.subcommand
    if sub in ("eigen", "isometry", "rates", "fiber", "solve", "multiplicity"):
        domain = build_domain(cfg, diags)
    else:
        domain = build_domain(cfg, diags) if cfg.has("domain", "lengths") else None

    if sub == "eigen":
        build_frac(cfg, diags)
    elif sub == "isometry":
        s_list = cfg.get("problem", "s_list") or (
            [cfg.get("problem", "s")] if cfg.has("problem", "s") else None)
        if not s_list:
            diags.append(Diagnostic("problem.s_list", "", "s or s_list is required"))
        else:
            for s in s_list:
                build_frac(cfg, diags, s=s)
    elif sub == "sobolev":
        n_list = cfg.get("problem", "n_list") or (
            [cfg.get("problem", "n")] if cfg.has("problem", "n") else None)
        s_list = cfg.get("problem", "s_list") or (
            [cfg.get("problem", "s")] if cfg.has("problem", "s") else None)
        if not n_list or not s_list:
            diags.append(Diagnostic("problem", "", "n/n_list and s/s_list are required"))
        else:
            for n in n_list:
                for s in s_list:
                    if s <= 0.5 or s >= 1.0:
                        diags.append(Diagnostic("problem.s_list", str(s),
                                                "s must lie in (1/2, 1)"))
                    elif n <= 2 * s or n < 2:
                        diags.append(Diagnostic("problem.n_list", str(n),
                                                f"need N >= 2 and N > 2s (s={s})"))
        if cfg.get("numerics", "estimate") or cfg.get("numerics", "instanton_sweep"):
            if domain is None:
                diags.append(Diagnostic("domain", "",
                                        "estimation and sweeps need a domain"))
    elif sub == "rates":
        frac = build_frac(cfg, diags)
        if domain is not None and frac is not None:
            _resolve_instanton(cfg, diags, domain, frac)
    elif sub == "fiber":
        pp = build_problem(cfg, diags, lam=_first_lambda(cfg))
        if pp is not None and domain is not None:
            w = build_weight(cfg, diags, domain, pp)
            fallback = w.maxima[0].point if w is not None else None
            _resolve_instanton(cfg, diags, domain, pp.frac, fallback)
    elif sub in ("solve", "multiplicity"):
        pp = build_problem(cfg, diags)
        if pp is not None and domain is not None:
            w = build_weight(cfg, diags, domain, pp)
            if w is not None and sub == "multiplicity" and len(w.maxima) < 1:
                diags.append(Diagnostic("weight.maxima", "", "multiplicity needs maxima"))
    return diags


def _first_lambda(cfg: RunConfig):
    lam_list = cfg.get("problem", "lambda_list")
    if lam_list:
        return lam_list[0]
    return cfg.get("problem", "lambda")


def lambda_values(cfg: RunConfig) -> list[float]:
    lam_list = cfg.get("problem", "lambda_list")
    if lam_list:
        return [float(v) for v in lam_list]
    lam = cfg.get("problem", "lambda")
    return [float(lam)] if lam is not None else []


def _resolve_instanton(cfg: RunConfig, diags: list[Diagnostic],
                       domain: MixedRectangleDomain, frac: FractionalParams,
                       default_center=None):
    from .instanton import TruncatedInstanton, default_rho

    center = cfg.get("instanton", "center") or default_center
    if center is None:
        diags.append(Diagnostic("instanton.center", "", "instanton.center is required"))
        return None
    rho = cfg.get("instanton", "rho")
    if rho is None:
        rho = default_rho(domain, center)
    pows = cfg.get("instanton", "eps_pows") or list(range(3, 9))
    try:
        return TruncatedInstanton(frac=frac, domain=domain, center=tuple(center),
                                  eps=rho * 2.0 ** (-max(pows)), rho=rho)
    except ValidationError as exc:
        diags.append(Diagnostic("instanton.center", str(center), str(exc)))
        return None
