"""Run configuration: INI text in, validated :class:`RunConfig` out.

Every section and key is optional; missing values take the defaults below.
Validation collects every violation (with the line it came from) before
raising :class:`~fpsi.errors.ConfigError`.

Example::

    [solid]
    nx = 17
    ny = 17
    [scheme]
    tau = 0.01
    h = 0.1
    T = 2.0
"""
import configparser
import re
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from .dissipation import DissipationParams
from .energy import ElasticParams, elastic_violations
from .errors import ConfigError

ETA0_KINDS = ("identity-embed", "uniaxial-stretch", "equilibrium", "from-file")
B_KINDS = ("zero", "radial", "from-file")
V0_KINDS = ("zero", "from-file")
FORCE_KINDS = ("zero", "swirl", "shear-gravity", "constant")
TOY_ENERGIES = ("quadratic", "double-well", "zero")
EDGES = ("left", "right", "bottom", "top")


def _floats(text):
    return tuple(float(t) for t in re.split(r"[,\s]+", text.strip()) if t)


@dataclass(frozen=True)
class RunConfig:
    # reference solid Q and container Omega
    solid_nx: int = 17
    solid_ny: int = 17
    solid_origin: Tuple[float, float] = (0.0, 0.0)
    solid_extent: Tuple[float, float] = (1.0, 1.0)
    dirichlet: Tuple[str, ...] = ()
    fluid_nx: int = 33
    fluid_ny: int = 33
    fluid_origin: Tuple[float, float] = (0.0, 0.0)
    fluid_extent: Tuple[float, float] = (2.0, 2.0)
    # material
    rho_s: float = 1.0
    rho_f: float = 1.0
    nu: float = 0.1
    drag_a0: float = 1.0
    drag_model: str = "isotropic"
    mu: float = 1.0
    lam: float = 1.0
    a: float = 9.0
    q: float = 4.0
    a0: float = 0.5
    k0_order: int = 3
    # scheme
    tau: float = 0.01
    h: float = 0.1
    T: float = 2.0
    gtol: float = 1e-20
    maxiter: int = 500
    # initial data
    eta0: str = "identity-embed"
    eta0_offset: Tuple[float, float] = (0.5, 0.5)
    stretch: float = 1.05
    eta0_file: str = ""
    b: str = "radial"
    b_scale: float = -0.5
    b_file: str = ""
    v0: str = "zero"
    v0_file: str = ""
    # forcing
    force: str = "swirl"
    force_amplitude: float = 2.0
    force_direction: Tuple[float, float] = (0.0, -1.0)
    # guard; a negative clearance means one fluid cell
    gap_tol: float = 1e-6
    clearance_tol: float = -1.0
    # output
    out: str = "run"
    snapshot_every: int = 0
    seed: int = 0
    # toy and study subcommands
    toy_energy: str = "double-well"
    toy_x0: Tuple[float, ...] = (1.0, 0.0)
    toy_xstar: Tuple[float, ...] = (0.0, 0.0)
    toy_tau: float = 0.0025
    toy_h: float = 0.05
    toy_T: float = 10.0
    study_h: Tuple[float, ...] = (0.1, 0.05, 0.025)
    study_tau: Tuple[float, ...] = (0.02, 0.01, 0.005)
    study_T: float = 0.2

    # ------------------------------------------------------------ derived
    def elastic_params(self) -> ElasticParams:
        return ElasticParams(mu=self.mu, lam=self.lam, a=self.a, q=self.q, a0=self.a0,
                             k0_order=self.k0_order).for_window(self.h)

    def dissipation_params(self) -> DissipationParams:
        return DissipationParams(nu=self.nu, drag_a0=self.drag_a0, drag_model=self.drag_model,
                                 h_rate_weight=self.h, k0_order=self.k0_order)

    @property
    def steps_per_window(self):
        return int(round(self.h / self.tau))

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def echo(self):
        """Effective configuration as INI text (round-trips through :func:`parse_config`)."""
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for key, (sec, name) in _KEYMAP.items():
            val = getattr(self, key)
            if isinstance(val, tuple):
                val = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in val)
            elif isinstance(val, float):
                val = repr(val)
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, name, str(val))
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp.items(sec))
            lines.append("")
        return "\n".join(lines)


# RunConfig field -> (section, key)
_KEYMAP = {
    "solid_nx": ("solid", "nx"), "solid_ny": ("solid", "ny"),
    "solid_origin": ("solid", "origin"), "solid_extent": ("solid", "extent"),
    "dirichlet": ("solid", "dirichlet"),
    "fluid_nx": ("fluid", "nx"), "fluid_ny": ("fluid", "ny"),
    "fluid_origin": ("fluid", "origin"), "fluid_extent": ("fluid", "extent"),
    "rho_s": ("material", "rho_s"), "rho_f": ("material", "rho_f"), "nu": ("material", "nu"),
    "drag_a0": ("material", "drag_a0"), "drag_model": ("material", "drag_model"),
    "mu": ("material", "mu"), "lam": ("material", "lam"), "a": ("material", "a"),
    "q": ("material", "q"), "a0": ("material", "a0"), "k0_order": ("material", "k0_order"),
    "tau": ("scheme", "tau"), "h": ("scheme", "h"), "T": ("scheme", "T"),
    "gtol": ("scheme", "gtol"), "maxiter": ("scheme", "maxiter"),
    "eta0": ("initial", "eta0"), "eta0_offset": ("initial", "offset"), "stretch": ("initial", "stretch"),
    "eta0_file": ("initial", "eta0_file"), "b": ("initial", "b"), "b_scale": ("initial", "b_scale"),
    "b_file": ("initial", "b_file"), "v0": ("initial", "v0"), "v0_file": ("initial", "v0_file"),
    "force": ("forcing", "kind"), "force_amplitude": ("forcing", "amplitude"),
    "force_direction": ("forcing", "direction"),
    "gap_tol": ("guard", "gap_tol"), "clearance_tol": ("guard", "clearance_tol"),
    "out": ("output", "dir"), "snapshot_every": ("output", "snapshot_every"), "seed": ("output", "seed"),
    "toy_energy": ("toy", "energy"), "toy_x0": ("toy", "x0"), "toy_xstar": ("toy", "xstar"),
    "toy_tau": ("toy", "tau"), "toy_h": ("toy", "h"), "toy_T": ("toy", "T"),
    "study_h": ("study", "h_list"), "study_tau": ("study", "tau_list"), "study_T": ("study", "T"),
}
# keys sharing a constraint with the one a violation is reported against
_RELATED = {"h": ("tau",), "T": ("h", "tau"), "toy_h": ("toy_tau",), "a": ("q",),
            "eta0_offset": ("solid_origin", "solid_extent", "fluid_origin", "fluid_extent")}
_REVERSE = {v: k for k, v in _KEYMAP.items()}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _line_index(text):
    """Map ``(section, key)`` to its 1-based line number."""
    out, sec = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = n
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            out[(sec, m.group(1).strip())] = n
    return out


def _convert(name, raw):
    typ = _TYPES[name]
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float"):
        return float(raw)
    if typ in (str, "str"):
        return raw.strip()
    if name == "dirichlet":
        return tuple(t for t in re.split(r"[,\s]+", raw.strip()) if t)
    return _floats(raw)


def _integral(ratio):
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio)) and round(ratio) >= 1


def parse_config(text: str) -> RunConfig:
    """Parse INI text into a :class:`RunConfig`; raise ``ConfigError`` listing every problem."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    lines = _line_index(text)
    violations = []
    values = {}

    def where(sec, key):
        n = lines.get((sec, key))
        return f"line {n}: " if n else ""

    for sec in cp.sections():
        for key, raw in cp.items(sec):
            name = _REVERSE.get((sec, key))
            if name is None:
                violations.append(f"{where(sec, key)}unknown key [{sec}] {key}")
                continue
            try:
                values[name] = _convert(name, raw)
            except ValueError:
                violations.append(f"{where(sec, key)}[{sec}] {key} = {raw!r} is not a valid {_TYPES[name]}")
    cfg = RunConfig(**values)
    for name, msg in validate(cfg):
        sec, key = _KEYMAP[name]
        loc = where(sec, key)
        # constraints between two keys point at whichever one the file sets
        for other in _RELATED.get(name, ()):
            if not loc:
                loc = where(*_KEYMAP[other])
        violations.append(f"{loc}[{sec}] {key}: {msg}")
    if violations:
        raise ConfigError(violations)
    return cfg


def validate(cfg: RunConfig):
    """List of ``(field, message)`` for every violated constraint."""
    bad = []
    for name in ("solid_nx", "solid_ny"):
        if getattr(cfg, name) < 5:
            bad.append((name, "solid grid needs at least 5 nodes per axis (third differences)"))
    for name in ("fluid_nx", "fluid_ny"):
        if getattr(cfg, name) < 5:
            bad.append((name, "fluid grid needs at least 5 nodes per axis"))
    for name in ("solid_origin", "solid_extent", "fluid_origin", "fluid_extent", "eta0_offset",
                 "force_direction"):
        if len(getattr(cfg, name)) != 2:
            bad.append((name, "expects two numbers"))
    for name in ("solid_extent", "fluid_extent"):
        if len(getattr(cfg, name)) == 2 and min(getattr(cfg, name)) <= 0:
            bad.append((name, "extents must be positive"))
    for e in cfg.dirichlet:
        if e not in EDGES:
            bad.append(("dirichlet", f"unknown edge {e!r}; choose from {', '.join(EDGES)}"))
    for name in ("rho_s", "rho_f"):
        if not getattr(cfg, name) > 0:
            bad.append((name, f"requires {name} > 0"))
    if cfg.nu < 0:
        bad.append(("nu", "requires nu >= 0"))
    if cfg.drag_a0 < 0:
        bad.append(("drag_a0", "requires drag_a0 >= 0"))
    if cfg.drag_model not in ("isotropic", "porous"):
        bad.append(("drag_model", "choose isotropic or porous"))
    # material constraints, reported against the key that carries them
    bad.extend(elastic_violations(cfg.mu, cfg.lam, cfg.a, cfg.q, cfg.a0, cfg.k0_order))
    if not cfg.tau > 0:
        bad.append(("tau", "requires tau > 0"))
    if not cfg.h > 0:
        bad.append(("h", "requires h > 0"))
    if not cfg.T > 0:
        bad.append(("T", "requires T > 0"))
    if cfg.tau > 0 and cfg.h > 0 and not _integral(cfg.h / cfg.tau):
        bad.append(("h", f"h/tau = {cfg.h / cfg.tau!r} must be a positive integer"))
    if cfg.h > 0 and cfg.T > 0 and not _integral(cfg.T / cfg.h):
        bad.append(("T", f"T/h = {cfg.T / cfg.h!r} must be a positive integer (no partial final window)"))
    if cfg.maxiter < 1:
        bad.append(("maxiter", "requires maxiter >= 1"))
    if cfg.eta0 not in ETA0_KINDS:
        bad.append(("eta0", f"choose from {', '.join(ETA0_KINDS)}"))
    if cfg.eta0 == "from-file" and not cfg.eta0_file:
        bad.append(("eta0_file", "eta0 = from-file needs eta0_file"))
    if cfg.eta0 == "uniaxial-stretch" and not cfg.stretch > 0:
        bad.append(("stretch", "requires stretch > 0"))
    if cfg.b not in B_KINDS:
        bad.append(("b", f"choose from {', '.join(B_KINDS)}"))
    if cfg.b == "from-file" and not cfg.b_file:
        bad.append(("b_file", "b = from-file needs b_file"))
    if cfg.v0 not in V0_KINDS:
        bad.append(("v0", f"choose from {', '.join(V0_KINDS)}"))
    if cfg.v0 == "from-file" and not cfg.v0_file:
        bad.append(("v0_file", "v0 = from-file needs v0_file"))
    if cfg.force not in FORCE_KINDS:
        bad.append(("force", f"choose from {', '.join(FORCE_KINDS)}"))
    if cfg.gap_tol <= 0:
        bad.append(("gap_tol", "requires gap_tol > 0"))
    if cfg.snapshot_every < 0:
        bad.append(("snapshot_every", "requires snapshot_every >= 0"))
    # reference solid must sit inside the container
    if len(cfg.solid_origin) == 2 and len(cfg.solid_extent) == 2 and len(cfg.fluid_origin) == 2 \
            and len(cfg.fluid_extent) == 2:
        lo = np.array(cfg.fluid_origin)
        hi = lo + np.array(cfg.fluid_extent)
        s_lo = np.array(cfg.solid_origin)
        s_hi = s_lo + np.array(cfg.solid_extent)
        if cfg.eta0 in ("identity-embed", "uniaxial-stretch", "equilibrium") and len(cfg.eta0_offset) == 2:
            off = np.array(cfg.eta0_offset)
            if np.any(s_lo + off < lo) or np.any(s_hi + off > hi):
                bad.append(("eta0_offset", "embedded solid must lie inside the container"))
    if cfg.toy_energy not in TOY_ENERGIES:
        bad.append(("toy_energy", f"choose from {', '.join(TOY_ENERGIES)}"))
    if len(cfg.toy_x0) != len(cfg.toy_xstar) or not cfg.toy_x0:
        bad.append(("toy_xstar", "toy x0 and xstar need the same positive length"))
    if not (cfg.toy_tau > 0 and cfg.toy_h > 0 and cfg.toy_T > 0):
        bad.append(("toy_tau", "toy tau, h and T must be positive"))
    elif not _integral(cfg.toy_h / cfg.toy_tau):
        bad.append(("toy_h", f"toy h/tau = {cfg.toy_h / cfg.toy_tau!r} must be a positive integer"))
    if any(x <= 0 for x in cfg.study_h + cfg.study_tau):
        bad.append(("study_h", "study step lists must be positive"))
    return bad


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def config_dict(cfg: RunConfig):
    return asdict(cfg)
