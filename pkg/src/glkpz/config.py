"""Strict flat ``key = value`` run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

EXPERIMENTS = ("simulate", "ensemble-tests", "heat-kernel-tests", "bg-diagnostics",
               "kpz-convergence", "localization")


class ConfigParseError(ValueError):
    pass


def _ints(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _floats(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# key: (parser, default, check, help)
SCHEMA = {
    "experiment": (str, None, lambda v: v in EXPERIMENTS, "one of " + ", ".join(EXPERIMENTS)),
    "seed": (int, 0, lambda v: v >= 0, "base seed"),
    "seeds.count": (int, 8, lambda v: v >= 1, "number of trajectories / seeds"),
    "potential.kind": (str, "perturbed", lambda v: v in ("gaussian", "perturbed"), "gaussian or perturbed"),
    "potential.eps": (float, 0.3, lambda v: True, "time-periodic perturbation amplitude"),
    "potential.omega": (float, 1.0, lambda v: True, "perturbation angular frequency"),
    "potential.skew": (float, 0.3, lambda v: True, "odd perturbation amplitude (sqrt(eps^2+skew^2) < 1/2)"),
    "sde.N": (int, 32, lambda v: v >= 4, "lattice size"),
    "sde.dt_factor": (float, 0.2, lambda v: 0 < v <= 1, "time step as a fraction of dt_max"),
    "sde.T_final": (float, 0.01, lambda v: v >= 0, "final time"),
    "sde.record_every": (int, 100, lambda v: v >= 1, "snapshot cadence in steps"),
    "sde.initial": (str, "canonical", lambda v: v in ("canonical", "flat"), "canonical or flat"),
    "proof.gamma_reg": (float, 0.1, lambda v: v > 0, "Hoelder monitor exponent"),
    "proof.gamma_ap": (float, 0.05, lambda v: v > 0, "a-priori monitor exponent"),
    "proof.smoothing_span": (float, 0.1, lambda v: v >= 0, "smoothing span in units of N^-2"),
    "output.directory": (str, "out", lambda v: bool(v), "output directory"),
    "output.format": (str, "csv", lambda v: v in ("csv", "json"), "csv or json tables"),
    "ens.t_list": (_floats, (0.0, 0.25, 0.5, 0.75, 1.0), lambda v: len(v) > 0, "times for coefficient tables"),
    "hk.N_list": (_ints, (16, 32, 64), lambda v: all(n >= 4 for n in v), "lattice sizes for kernel checks"),
    "hk.gap_N_list": (_ints, (16, 32, 64, 128), lambda v: all(n >= 4 for n in v), "lattice sizes for the continuum gap"),
    "hk.gap_dt": (float, 0.05, lambda v: v > 0, "macroscopic t - s for the continuum gap"),
    "bg.l_list": (_ints, (4, 8, 16, 32, 64), lambda v: len(v) >= 2 and min(v) >= 1, "block sizes"),
    "bg.draws": (int, 200, lambda v: v >= 2, "zero-density configurations per fit"),
    "bg.t": (float, 0.0, lambda v: v >= 0, "time at which statistics are frozen"),
    "kpz.N_list": (_ints, (16, 32, 64), lambda v: all(n >= 4 for n in v), "lattice sizes"),
    "kpz.T": (float, 0.25, lambda v: v >= 0, "macroscopic horizon"),
    "loc.N": (int, 256, lambda v: v >= 8, "lattice size"),
    "loc.I_size": (int, 8, lambda v: v >= 1, "inner interval length"),
    "loc.horizon": (float, 1.0, lambda v: v >= 0, "horizon in units of N^-2"),
    "loc.gamma_ap": (float, 0.1, lambda v: v >= 0, "localization exponent"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, k):
        return self.values[k]

    def with_overrides(self, **kv) -> "RunConfig":
        v = dict(self.values)
        v.update(kv)
        return RunConfig(v)

    def emit(self) -> str:
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in SCHEMA)


def defaults(experiment: str) -> RunConfig:
    v = {k: d for k, (_, d, _, _) in SCHEMA.items()}
    v["experiment"] = experiment
    return RunConfig(v)


def parse_text(text: str) -> RunConfig:
    values = {k: d for k, (_, d, _, _) in SCHEMA.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigParseError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigParseError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        conv, _, check, helptext = SCHEMA[key]
        try:
            parsed = conv(val)
        except ValueError:
            raise ConfigParseError(f"line {lineno}: bad value for {key}: {val!r}") from None
        if not check(parsed):
            msg = "sde.N must be ≥ 4" if key == "sde.N" else f"{key} out of range ({helptext})"
            raise ConfigParseError(f"line {lineno}: {msg}")
        values[key] = parsed
    if values["experiment"] is None:
        raise ConfigParseError("missing required key 'experiment'")
    return RunConfig(values)


def parse_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read())


def help_text() -> str:
    return "\n".join(f"  {k:22s} default={_fmt(d) if d is not None else '(required)'}  {h}"
                     for k, (_, d, _, h) in SCHEMA.items())
