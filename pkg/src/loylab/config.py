"""TOML run configuration.

A config holds exactly one of ``[model]`` (generic n-level model) or
``[friedrichs_lee]`` plus optional ``[run]``, ``[time]``, ``[evolve]``,
``[diagnose]`` and ``[sweep]`` tables.  Complex numbers may be written as
numbers, as strings understood by Python's ``complex`` ("0.01-0.005j"), or
as two-element ``[re, im]`` arrays.  See README for the full schema.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ModelError
from .model import (
    Channel,
    ContinuumGrid,
    FullModel,
    build_model,
    constant_coupling,
    lorentzian_coupling,
    random_model,
)

__all__ = ["RunConfig", "load_config", "parse_config", "ALL_METHODS"]

ALL_METHODS = ("loy0", "loy", "improved", "spectral", "iterate", "onedim")

_TOP_KEYS = {"run", "model", "friedrichs_lee", "time", "evolve", "diagnose", "sweep"}


def _complex(value, where: str) -> complex:
    try:
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ValueError
            return complex(float(value[0]), float(value[1]))
        if isinstance(value, str):
            return complex(value.replace(" ", ""))
        if isinstance(value, bool):
            raise ValueError
        return complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot read {value!r} as a complex number") from None


def _complex_vector(value, where: str) -> np.ndarray:
    if not isinstance(value, list):
        value = [value]
    return np.array([_complex(v, f"{where}[{i}]") for i, v in enumerate(value)])


def _complex_matrix(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise ConfigError(f"{where}: expected a list of rows")
    rows = [_complex_vector(r, f"{where}[{i}]") for i, r in enumerate(value)]
    if len({r.size for r in rows}) != 1:
        raise ConfigError(f"{where}: rows have different lengths")
    return np.array(rows)


def _float(table: dict, key: str, where: str, default=None, positive=False):
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    v = float(v)
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be positive")
    return v


def _int(table: dict, key: str, where: str, default=None, minimum=1):
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{where}.{key}: must be >= {minimum}")
    return v


def _check_keys(table: dict, allowed: set, where: str):
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


@dataclass
class TimeGrid:
    t_min: float = 0.0
    t_max: float | None = None
    points: int = 201
    lifetimes: float = 3.0

    def values(self, lifetime: float | None = None) -> np.ndarray:
        t_max = self.t_max
        if t_max is None:
            if lifetime is None or not np.isfinite(lifetime):
                raise ConfigError("[time]: t_max is required when no lifetime is available")
            t_max = self.lifetimes * lifetime
        t = np.linspace(self.t_min, t_max, self.points)
        if self.t_min < 0 < t_max:
            # effective evolution starts at t = 0, so keep it on the grid
            t = np.union1d(t, [0.0])
        return t


@dataclass
class RunConfig:
    """Parsed configuration; ``model_section`` is "model" or "friedrichs_lee"."""

    model_section: str
    model_table: dict
    methods: list
    eta: float | None = None
    grid: int | None = None
    seed: int = 0
    output: str = "loylab-out"
    psi: np.ndarray | None = None
    time: TimeGrid = field(default_factory=TimeGrid)
    evolve: dict = field(default_factory=dict)
    diagnose: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    source: str = "<string>"

    # -- model construction ------------------------------------------------

    def build_model(self) -> FullModel:
        if self.model_section != "model":
            from .friedrichs_lee import build_fl_sector
            return build_fl_sector(self.fl_params())
        return model_from_table(self.model_table, self.grid, self.seed)

    def fl_params(self, **overrides):
        if self.model_section != "friedrichs_lee":
            raise ConfigError("this command needs a [friedrichs_lee] section")
        return fl_params_from_table(self.model_table, self.grid, self.eta, **overrides)


def _channel_from_table(t: dict, n: int, where: str, grid_override: int | None) -> Channel:
    _check_keys(t, {"label", "e_min", "e_max", "points", "shape", "g", "center", "width", "window"}, where)
    points = grid_override or _int(t, "points", where)
    grid = ContinuumGrid.uniform(_float(t, "e_min", where), _float(t, "e_max", where), points)
    g = _complex_vector(t.get("g", 0.0), f"{where}.g")
    if g.size == 1 and n > 1:
        g = np.full(n, g[0])
    if g.size != n:
        raise ConfigError(f"{where}.g: {g.size} couplings for {n} levels")
    shape = t.get("shape", "constant")
    if shape == "constant":
        win = t.get("window")
        fn = constant_coupling(g, tuple(win) if win is not None else None)
    elif shape == "lorentzian":
        fn = lorentzian_coupling(g, _float(t, "center", where), _float(t, "width", where, positive=True))
    else:
        raise ConfigError(f"{where}.shape: unknown coupling shape {shape!r}")
    return Channel(grid, fn, str(t.get("label", where.rsplit(".", 1)[-1])))


def model_from_table(t: dict, grid_override: int | None = None, seed: int = 0) -> FullModel:
    where = "[model]"
    kind = t.get("kind", "explicit")
    try:
        if kind == "random":
            _check_keys(t, {"kind", "n", "points", "band", "coupling", "h1_scale", "q_scale", "m0"}, where)
            rng = np.random.default_rng(seed)
            band = tuple(t.get("band", (0.0, 4.0)))
            return random_model(rng, _int(t, "n", where, 2), grid_override or _int(t, "points", where, 400),
                                band, t.get("m0"), _float(t, "coupling", where, 0.05),
                                _float(t, "h1_scale", where, 0.05), _float(t, "q_scale", where, 0.0))
        if kind == "cpt":
            from .symmetry import CPTModelSpec, make_cpt_invariant
            _check_keys(t, {"kind", "m0", "m12", "channel", "q_scale"}, where)
            chans = _channel_list(t, 2, grid_override)
            m = sum(len(c.grid) for c in chans)
            qi = None
            q_scale = _float(t, "q_scale", where, 0.0)
            if q_scale:
                a = np.random.default_rng(seed).normal(size=(m, m)) * q_scale / np.sqrt(m)
                qi = 0.5 * (a + a.T)
            spec = CPTModelSpec(_float(t, "m0", where), _complex(t.get("m12", 0.0), f"{where}.m12"),
                                [(c.grid, c.coupling_table(2)[:, 0], c.label) for c in chans], qi)
            return make_cpt_invariant(spec)
        if kind != "explicit":
            raise ConfigError(f"{where}.kind: expected explicit, cpt or random, got {kind!r}")
        _check_keys(t, {"kind", "m0", "h1", "channel"}, where)
        h1 = _complex_matrix(t.get("h1", [[0.0, 0.0], [0.0, 0.0]]), f"{where}.h1")
        chans = _channel_list(t, h1.shape[0], grid_override)
        return build_model(_float(t, "m0", where), h1, chans)
    except ModelError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _channel_list(t: dict, n: int, grid_override) -> list:
    chans = t.get("channel")
    if not chans:
        raise ConfigError("[model]: at least one [[model.channel]] table is required")
    if isinstance(chans, dict):
        chans = [chans]
    return [_channel_from_table(c, n, f"[[model.channel]] #{i + 1}", grid_override)
            for i, c in enumerate(chans)]


def fl_params_from_table(t: dict, grid_override=None, eta=None, **overrides):
    from .friedrichs_lee import (
        HBAR_MEV_S,
        KAON_GAP,
        TAU_S,
        cpt_fl_params,
        flat_coupling,
        threshold_coupling,
    )

    where = "[friedrichs_lee]"
    _check_keys(t, {"preset", "m0", "mu", "m12", "gamma_s", "profile", "g", "cutoff", "cutoff_ratio",
                    "points", "eta", "tau_s", "kaon_gap", "hbar"}, where)
    t = {**t, **overrides}
    preset = t.get("preset", "desk")
    gap_default = 2.0
    if preset == "kaon-ratio":
        ratio = _float(t, "hbar", where, HBAR_MEV_S) / _float(t, "tau_s", where, TAU_S) \
            / _float(t, "kaon_gap", where, KAON_GAP)
        mu = _float(t, "mu", where, 0.0)
        m0 = _float(t, "m0", where, mu + gap_default)
        gamma_default = ratio * (m0 - mu)
    elif preset == "desk":
        mu = _float(t, "mu", where, 0.0)
        m0 = _float(t, "m0", where, mu + gap_default)
        gamma_default = 0.02
    else:
        raise ConfigError(f"{where}.preset: expected desk or kaon-ratio, got {preset!r}")
    gap = m0 - mu
    if not gap > 0:
        raise ConfigError(f"{where}: m0 must exceed mu")
    m12 = _complex(t.get("m12", complex(0.0, 1e-3 if preset == "desk" else 5e-4 * gap)), f"{where}.m12")
    gamma_s = _float(t, "gamma_s", where, gamma_default)
    if gamma_s < 0:
        raise ConfigError(f"{where}.gamma_s: must be >= 0")
    profile = t.get("profile", "threshold")
    if "cutoff" in t:
        cutoff = _float(t, "cutoff", where, positive=True)
    else:
        cutoff = _float(t, "cutoff_ratio", where, 16.0 if profile == "threshold" else 4.0, positive=True) * gap
    if profile == "threshold":
        coupling = threshold_coupling(gamma_s, gap)
    elif profile == "flat":
        # |g|^2 chosen so that the LOY decay rate of the symmetric state is gamma_s
        g = _complex(t["g"], f"{where}.g") if "g" in t else np.sqrt(gamma_s / (4 * np.pi))
        coupling = flat_coupling(g, omega_max=cutoff)
    else:
        raise ConfigError(f"{where}.profile: expected threshold or flat, got {profile!r}")
    points = grid_override or _int(t, "points", where, 16000)
    eta = eta if eta is not None else (_float(t, "eta", where, positive=True) if "eta" in t else None)
    try:
        return cpt_fl_params(m0, m12, mu, coupling, cutoff, points, eta, regime=preset,
                             gamma_s=gamma_s, profile=profile,
                             tau_s=_float(t, "tau_s", where, TAU_S),
                             kaon_gap=_float(t, "kaon_gap", where, KAON_GAP),
                             hbar=_float(t, "hbar", where, HBAR_MEV_S))
    except ModelError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: dict, source: str = "<string>") -> RunConfig:
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"{source}: unknown sections {sorted(extra)}")
    sections = [s for s in ("model", "friedrichs_lee") if s in data]
    if len(sections) != 1:
        raise ConfigError(f"{source}: exactly one of [model] or [friedrichs_lee] is required")
    run = data.get("run", {})
    _check_keys(run, {"methods", "eta", "grid", "seed", "output", "psi"}, "[run]")
    methods = run.get("methods", ["loy0", "loy", "improved", "spectral", "iterate"])
    if isinstance(methods, str):
        methods = [methods]
    if not methods:
        raise ConfigError("[run].methods: method list is empty")
    bad = [m for m in methods if m not in ALL_METHODS]
    if bad:
        raise ConfigError(f"[run].methods: unknown methods {bad}; choose from {list(ALL_METHODS)}")
    eta = _float(run, "eta", "[run]", positive=True) if "eta" in run else None
    grid = _int(run, "grid", "[run]", minimum=1) if "grid" in run else None
    seed = _int(run, "seed", "[run]", 0, minimum=0)
    psi = _complex_vector(run["psi"], "[run].psi") if "psi" in run else None
    tt = data.get("time", {})
    _check_keys(tt, {"t_min", "t_max", "points", "lifetimes"}, "[time]")
    tg = TimeGrid(_float(tt, "t_min", "[time]", 0.0),
                  _float(tt, "t_max", "[time]") if "t_max" in tt else None,
                  _int(tt, "points", "[time]", 201, minimum=2),
                  _float(tt, "lifetimes", "[time]", 3.0, positive=True))
    for name, keys in (("evolve", {"initial", "exact"}),
                       ("diagnose", {"initial", "threshold", "t_max", "scan_points"}),
                       ("sweep", {"scale", "im_m12", "random_cpt", "points", "q_scale"})):
        _check_keys(data.get(name, {}), keys, f"[{name}]")
    sec = sections[0]
    return RunConfig(sec, dict(data[sec]), list(methods), eta, grid, seed,
                     str(run.get("output", "loylab-out")), psi, tg,
                     dict(data.get("evolve", {})), dict(data.get("diagnose", {})),
                     dict(data.get("sweep", {})), source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the message carries "(at line L, column C)"
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, str(path))
