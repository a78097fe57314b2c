"""Plain-text configuration parsing into a fully validated SimConfig.

Format: `section.key = value` lines, UTF-8, '#' comments, '.' decimal point.
Unknown keys are errors (no silent typo tolerance) and all problems are
reported together, not just the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dynamics import IC_RECIPES, InitialCondition, IntegratorSettings
from .eos import AnalysisParams, EosParams, ViscosityParams
from .errors import ConfigError, DomainError
from .fields import DiscretizationScheme, Grid


@dataclass(frozen=True)
class OutputSpec:
    dir: str | None = None
    record_every: int = 10
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.record_every < 1:
            raise DomainError("output.record_every must be >= 1")


@dataclass(frozen=True)
class SimConfig:
    grid: Grid
    scheme: DiscretizationScheme
    eos: EosParams
    visc: ViscosityParams
    analysis: AnalysisParams
    integrator: IntegratorSettings
    ic: InitialCondition
    output: OutputSpec
    seed: int = 0

    @property
    def record_every(self) -> int:
        return self.output.record_every

    @property
    def snapshot_times(self) -> tuple[float, ...]:
        return self.output.snapshot_times


_INT, _FLOAT, _BOOL, _STR, _FLOAT_LIST = range(5)

_MISSING = object()  # a key whose value failed to parse or was never given

# key -> (type, required, default); None default means "computed later"
_KEYS = {
    "grid.dim": (_INT, True, None),
    "grid.n": (_INT, True, None),
    "grid.length": (_FLOAT, True, None),
    "scheme.kind": (_STR, False, "spectral"),
    "scheme.dealias": (_BOOL, False, True),
    "eos.a_l": (_FLOAT, True, None),
    "eos.a_g": (_FLOAT, True, None),
    "eos.rho_l0": (_FLOAT, True, None),
    "eos.P_l0": (_FLOAT, True, None),
    "eos.m_tilde": (_FLOAT, True, None),
    "eos.n_tilde": (_FLOAT, True, None),
    "visc.mu": (_FLOAT, True, None),
    "visc.lambda": (_FLOAT, True, None),
    "analysis.q": (_FLOAT, False, None),
    "analysis.theta": (_FLOAT, False, 0.5),
    "integrator.method": (_STR, False, "rk4"),
    "integrator.cfl": (_FLOAT, False, 0.4),
    "integrator.dt_max": (_FLOAT, False, math.inf),
    "integrator.t_end": (_FLOAT, True, None),
    "integrator.positivity_floor": (_FLOAT, False, 1e-8),
    "ic.recipe": (_STR, True, None),
    "ic.amplitude_m": (_FLOAT, False, 0.0),
    "ic.amplitude_n": (_FLOAT, False, 0.0),
    "ic.amplitude_u": (_FLOAT, False, 0.0),
    "ic.width": (_FLOAT, False, 0.0),
    "ic.center": (_FLOAT, False, None),
    "ic.mode": (_INT, False, 1),
    "output.dir": (_STR, False, None),
    "output.record_every": (_INT, False, 10),
    "output.snapshot_times": (_FLOAT_LIST, False, ()),
    "seed": (_INT, False, 0),
}

# ic.* keys meaningful for each recipe (ic.recipe itself is always allowed)
_RECIPE_KEYS = {
    "equilibrium": set(),
    "gaussian_bump": {"ic.amplitude_m", "ic.amplitude_n", "ic.amplitude_u",
                      "ic.width", "ic.center"},
    "constant_ratio_bump": {"ic.amplitude_m", "ic.amplitude_u", "ic.width",
                            "ic.center"},
    "fourier_mode": {"ic.amplitude_m", "ic.amplitude_n", "ic.amplitude_u",
                     "ic.mode"},
}


def _parse_value(key: str, raw: str, kind: int, problems: list[str]):
    raw = raw.strip()
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _BOOL:
            low = raw.lower()
            if low in ("true", "false"):
                return low == "true"
            raise ValueError("expected true or false")
        if kind == _FLOAT_LIST:
            if not raw:
                return ()
            return tuple(float(part) for part in raw.split(","))
        return raw
    except ValueError as err:
        problems.append(f"{key}: cannot parse {raw!r} ({err})")
        return None


def parse_config(text: str) -> SimConfig:
    """Parse and validate configuration text; raises ConfigError carrying the
    complete list of problems on any failure."""
    problems: list[str] = []
    values: dict[str, object] = {}
    seen: set[str] = set()

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        seen.add(key)
        parsed = _parse_value(key, raw, _KEYS[key][0], problems)
        if parsed is not None:
            values[key] = parsed

    for key, (_, required, default) in _KEYS.items():
        if key in values or key in seen:
            continue  # present, or a parse failure already recorded
        if required:
            problems.append(f"missing required key {key!r}")
        else:
            values[key] = default
    for key in _KEYS:
        values.setdefault(key, _MISSING)

    def build(label, ctor, **kwargs):
        # an argument whose parse already failed: skip quietly so the
        # remaining sections still get validated and reported together
        if any(v is _MISSING for v in kwargs.values()):
            return None
        try:
            return ctor(**kwargs)
        except DomainError as err:
            problems.append(f"{label}: {err}")
            return None

    grid = build("grid", Grid, dim=values["grid.dim"], n=values["grid.n"],
                 length=values["grid.length"])
    scheme = build("scheme", DiscretizationScheme, kind=values["scheme.kind"],
                   dealias=values["scheme.dealias"])
    if scheme is not None and grid is not None and \
            scheme.kind == "central4" and grid.n < 16:
        problems.append("scheme: central4 requires grid.n >= 16")
    eos = build(
        "eos", EosParams,
        a_l=values["eos.a_l"], a_g=values["eos.a_g"],
        rho_l0=values["eos.rho_l0"], P_l0=values["eos.P_l0"],
        m_tilde=values["eos.m_tilde"], n_tilde=values["eos.n_tilde"],
    )
    visc = build("visc", ViscosityParams, mu=values["visc.mu"],
                 lam=values["visc.lambda"])
    analysis = None
    if visc is not None:
        q = values["analysis.q"]
        if q is None:
            q = AnalysisParams.default_q(visc)
        analysis = build("analysis", AnalysisParams.validated, q=q,
                         theta=values["analysis.theta"], visc=visc)
    integrator = build(
        "integrator", IntegratorSettings,
        method=values["integrator.method"], cfl=values["integrator.cfl"],
        dt_max=values["integrator.dt_max"], t_end=values["integrator.t_end"],
        positivity_floor=values["integrator.positivity_floor"],
    )

    recipe = values["ic.recipe"]
    ic = None
    if recipe is _MISSING:
        pass  # missing/unparsable recipe already recorded
    elif recipe not in IC_RECIPES:
        problems.append(f"ic.recipe: unknown recipe {recipe!r}")
    else:
        allowed = _RECIPE_KEYS[recipe]
        for key in seen:
            if key.startswith("ic.") and key != "ic.recipe" and key not in allowed:
                problems.append(f"{key}: not a parameter of recipe {recipe!r}")
        kwargs = dict(recipe=recipe)
        for key in allowed:
            kwargs[key.removeprefix("ic.")] = values[key]
        ic = build("ic", InitialCondition, **kwargs)

    output = build("output", OutputSpec, dir=values["output.dir"],
                   record_every=values["output.record_every"],
                   snapshot_times=values["output.snapshot_times"])
    if output is not None and integrator is not None:
        for s in output.snapshot_times:
            if not 0.0 <= s <= integrator.t_end:
                problems.append(
                    f"output.snapshot_times: {s} outside [0, t_end={integrator.t_end}]"
                )
    if problems:
        raise ConfigError(problems)
    return SimConfig(
        grid=grid, scheme=scheme, eos=eos, visc=visc, analysis=analysis,
        integrator=integrator, ic=ic, output=output, seed=values["seed"],
    )
