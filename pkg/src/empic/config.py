"""JSON run descriptions: parsing, strict validation and plan resolution.

The schema is strict: unknown keys are fatal, every violation is
reported (not just the first), and validation is pure. The documented
key/default table lives in docs/config.md.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import grid as gridmod

LAYOUTS = ("AoS", "SoA")
QUANTITIES = ("E", "B", "J", "density", "particle_phase_space")
REGION_KINDS = ("full", "plane", "box", "line")
AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


class ConfigError(ValueError):
    """Carries every validation violation found in one pass."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ConfigParseError(ConfigError):
    """Malformed JSON, with line/column context."""


@dataclass(frozen=True)
class Perturbation:
    kind: str = "none"            # none | sine | random
    amplitude: float = 0.0        # momentum amplitude, units of m*c
    mode: int = 1                 # sine: mode number along x


@dataclass(frozen=True)
class SpeciesInit:
    kind: str                     # two_stream | uniform
    density: float
    drift_momentum: float = 0.0   # two_stream: +/- drift along x (m*c units)
    thermal_momentum: float = 0.0  # uniform: gaussian spread (m*c units)
    perturbation: Perturbation = field(default_factory=Perturbation)


@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    charge: float                 # units of elementary charge, sign included
    mass: float                   # units of electron mass
    particles_per_cell: int
    init: SpeciesInit


@dataclass(frozen=True)
class Region:
    kind: str = "full"
    axis: int = 0                 # plane/line
    coordinate: float = 0.0       # plane
    lo: tuple = (0.0, 0.0, 0.0)   # box
    hi: tuple = (0.0, 0.0, 0.0)   # box
    fixed: tuple = (0.0, 0.0)     # line: coordinates of the two other axes


@dataclass(frozen=True)
class OutputRequest:
    quantity: str
    species: str | None = None
    region: Region = field(default_factory=Region)
    t_start: float = 0.0
    t_end: float | None = None    # None = open ended
    every_n_steps: int = 1
    name: str = ""


@dataclass(frozen=True)
class IoSpec:
    group_size: int | str = "auto"
    files: int | str = "auto"


@dataclass(frozen=True)
class SimulationConfig:
    grid_cells: tuple[int, int, int]
    box_size: tuple[float, float, float]
    n_steps: int
    species: tuple[SpeciesSpec, ...]
    outputs: tuple[OutputRequest, ...] = ()
    cfl_factor: float = 0.98
    io: IoSpec = field(default_factory=IoSpec)
    rank_grid: tuple[int, int, int] | str = "auto"
    rng_seed: int = 1
    layout: str = "SoA"

    @property
    def cell_sizes(self) -> tuple[float, float, float]:
        return tuple(self.box_size[a] / self.grid_cells[a] for a in range(3))

    def species_by_name(self, name: str) -> SpeciesSpec:
        for s in self.species:
            if s.name == name:
                return s
        raise KeyError(name)


@dataclass(frozen=True)
class ResolvedPlan:
    """Derived quantities fixed by validation."""

    dt: float
    rank_grid: tuple[int, int, int]
    ghost_width: int
    n_ranks: int
    io_group_size: int
    io_files: int


def _reject_unknown(obj: dict, allowed, where: str, errors: list):
    for key in obj:
        if key not in allowed:
            errors.append(f"unknown key '{key}' in {where}")


def _need(obj: dict, key: str, where: str, errors: list):
    if key not in obj:
        errors.append(f"missing required key '{key}' in {where}")
        return None
    return obj[key]


def _triple(value, where, errors, kind=float):
    if (not isinstance(value, (list, tuple)) or len(value) != 3
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in value)):
        errors.append(f"{where} must be a list of 3 numbers")
        return None
    return tuple(kind(v) for v in value)


def _parse_perturbation(obj, where, errors) -> Perturbation:
    if obj is None:
        return Perturbation()
    _reject_unknown(obj, {"kind", "amplitude", "mode"}, where, errors)
    kind = obj.get("kind", "none")
    if kind not in ("none", "sine", "random"):
        errors.append(f"{where}.kind must be none|sine|random, got {kind!r}")
    return Perturbation(kind=kind,
                        amplitude=float(obj.get("amplitude", 0.0)),
                        mode=int(obj.get("mode", 1)))


def _parse_init(obj, where, errors) -> SpeciesInit | None:
    if not isinstance(obj, dict):
        errors.append(f"{where} must be an object")
        return None
    kind = _need(obj, "kind", where, errors)
    if kind == "two_stream":
        allowed = {"kind", "drift_momentum", "density", "perturbation"}
        _reject_unknown(obj, allowed, where, errors)
        return SpeciesInit(
            kind="two_stream",
            density=float(obj.get("density", 1.0)),
            drift_momentum=float(_need(obj, "drift_momentum", where, errors)
                                 or 0.0),
            perturbation=_parse_perturbation(obj.get("perturbation"),
                                             f"{where}.perturbation", errors))
    if kind == "uniform":
        allowed = {"kind", "thermal_momentum", "density", "perturbation"}
        _reject_unknown(obj, allowed, where, errors)
        return SpeciesInit(
            kind="uniform",
            density=float(obj.get("density", 1.0)),
            thermal_momentum=float(obj.get("thermal_momentum", 0.0)),
            perturbation=_parse_perturbation(obj.get("perturbation"),
                                             f"{where}.perturbation", errors))
    if kind is not None:
        errors.append(f"{where}.kind must be two_stream|uniform, got {kind!r}")
    return None


def _parse_species(obj, idx, errors) -> SpeciesSpec | None:
    where = f"species[{idx}]"
    if not isinstance(obj, dict):
        errors.append(f"{where} must be an object")
        return None
    allowed = {"name", "charge", "mass", "particles_per_cell", "init"}
    _reject_unknown(obj, allowed, where, errors)
    name = _need(obj, "name", where, errors)
    charge = _need(obj, "charge", where, errors)
    mass = _need(obj, "mass", where, errors)
    ppc = _need(obj, "particles_per_cell", where, errors)
    init_obj = _need(obj, "init", where, errors)
    init = _parse_init(init_obj, f"{where}.init", errors) \
        if init_obj is not None else None
    if None in (name, charge, mass, ppc) or init is None:
        return None
    return SpeciesSpec(name=str(name), charge=float(charge),
                       mass=float(mass), particles_per_cell=int(ppc),
                       init=init)


def _parse_region(obj, where, errors) -> Region:
    if obj is None:
        return Region()
    if not isinstance(obj, dict):
        errors.append(f"{where} must be an object")
        return Region()
    kind = obj.get("kind", "full")
    if kind == "full":
        _reject_unknown(obj, {"kind"}, where, errors)
        return Region(kind="full")
    if kind == "plane":
        _reject_unknown(obj, {"kind", "axis", "coordinate"}, where, errors)
        axis = obj.get("axis", "x")
        if axis not in AXIS_INDEX:
            errors.append(f"{where}.axis must be x|y|z")
            axis = "x"
        return Region(kind="plane", axis=AXIS_INDEX[axis],
                      coordinate=float(_need(obj, "coordinate", where,
                                             errors) or 0.0))
    if kind == "box":
        _reject_unknown(obj, {"kind", "lo", "hi"}, where, errors)
        lo = _triple(_need(obj, "lo", where, errors) or (0, 0, 0),
                     f"{where}.lo", errors) or (0.0, 0.0, 0.0)
        hi = _triple(_need(obj, "hi", where, errors) or (0, 0, 0),
                     f"{where}.hi", errors) or (0.0, 0.0, 0.0)
        return Region(kind="box", lo=lo, hi=hi)
    if kind == "line":
        _reject_unknown(obj, {"kind", "axis", "fixed"}, where, errors)
        axis = obj.get("axis", "x")
        if axis not in AXIS_INDEX:
            errors.append(f"{where}.axis must be x|y|z")
            axis = "x"
        fixed = obj.get("fixed", (0.0, 0.0))
        if not isinstance(fixed, (list, tuple)) or len(fixed) != 2:
            errors.append(f"{where}.fixed must be 2 coordinates")
            fixed = (0.0, 0.0)
        return Region(kind="line", axis=AXIS_INDEX[axis],
                      fixed=tuple(float(v) for v in fixed))
    errors.append(f"{where}.kind must be one of {REGION_KINDS}, got {kind!r}")
    return Region()


def _parse_output(obj, idx, errors) -> OutputRequest | None:
    where = f"outputs[{idx}]"
    if not isinstance(obj, dict):
        errors.append(f"{where} must be an object")
        return None
    allowed = {"quantity", "species", "region", "time_window",
               "every_n_steps", "name"}
    _reject_unknown(obj, allowed, where, errors)
    quantity = _need(obj, "quantity", where, errors)
    if quantity not in QUANTITIES:
        errors.append(f"{where}.quantity must be one of {QUANTITIES}, "
                      f"got {quantity!r}")
        return None
    window = obj.get("time_window", [0.0, None])
    if not isinstance(window, (list, tuple)) or len(window) != 2:
        errors.append(f"{where}.time_window must be [t_start, t_end|null]")
        window = [0.0, None]
    t_start = float(window[0])
    t_end = None if window[1] is None else float(window[1])
    species = obj.get("species")
    name = obj.get("name") or (quantity if species is None
                               else f"{quantity}_{species}")
    return OutputRequest(
        quantity=quantity, species=species,
        region=_parse_region(obj.get("region"), f"{where}.region", errors),
        t_start=t_start, t_end=t_end,
        every_n_steps=int(obj.get("every_n_steps", 1)), name=str(name))


def parse_config(text: str) -> SimulationConfig:
    """Parse a JSON run description into a config with defaults filled.

    Structural problems (bad JSON, unknown/missing keys, wrong types) are
    raised here; semantic checks happen in `validate`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            [f"malformed JSON at line {exc.lineno} column {exc.colno}: "
             f"{exc.msg}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["top-level JSON value must be an object"])

    errors: list[str] = []
    allowed = {"grid_cells", "box_size", "cfl_factor", "n_steps", "species",
               "outputs", "io", "rank_grid", "rng_seed", "layout"}
    _reject_unknown(doc, allowed, "top level", errors)

    cells = _triple(_need(doc, "grid_cells", "top level", errors)
                    or (1, 1, 1), "grid_cells", errors, kind=int)
    box = _triple(_need(doc, "box_size", "top level", errors)
                  or (1, 1, 1), "box_size", errors)
    n_steps = _need(doc, "n_steps", "top level", errors)

    species = []
    spec_list = doc.get("species", [])
    if not isinstance(spec_list, list):
        errors.append("species must be a list")
        spec_list = []
    for i, s in enumerate(spec_list):
        parsed = _parse_species(s, i, errors)
        if parsed is not None:
            species.append(parsed)

    outputs = []
    out_list = doc.get("outputs", [])
    if not isinstance(out_list, list):
        errors.append("outputs must be a list")
        out_list = []
    for i, o in enumerate(out_list):
        parsed = _parse_output(o, i, errors)
        if parsed is not None:
            outputs.append(parsed)

    io_obj = doc.get("io", {})
    if not isinstance(io_obj, dict):
        errors.append("io must be an object")
        io_obj = {}
    _reject_unknown(io_obj, {"group_size", "files"}, "io", errors)

    def io_field(key):
        v = io_obj.get(key, "auto")
        if v == "auto":
            return "auto"
        if isinstance(v, int) and not isinstance(v, bool):
            return v
        errors.append(f"io.{key} must be an integer or 'auto'")
        return "auto"

    io = IoSpec(group_size=io_field("group_size"), files=io_field("files"))

    rank_grid = doc.get("rank_grid", "auto")
    if rank_grid != "auto":
        rank_grid = _triple(rank_grid, "rank_grid", errors, kind=int) or "auto"

    layout = doc.get("layout", "SoA")
    if layout not in LAYOUTS:
        errors.append(f"layout must be one of {LAYOUTS}, got {layout!r}")
        layout = "SoA"

    if errors:
        raise ConfigError(errors)
    return SimulationConfig(
        grid_cells=cells, box_size=box, n_steps=int(n_steps),
        species=tuple(species), outputs=tuple(outputs),
        cfl_factor=float(doc.get("cfl_factor", 0.98)), io=io,
        rank_grid=rank_grid, rng_seed=int(doc.get("rng_seed", 1)),
        layout=layout)


def derive_dt(cells, box, cfl_factor: float) -> float:
    """Full 3D Yee stability bound scaled by cfl_factor (c = 1)."""
    inv2 = sum((n / L) ** 2 for n, L in zip(cells, box))
    return cfl_factor / math.sqrt(inv2)


def resolve_io_plan(n_ranks: int, io: IoSpec, errors: list):
    """(G, F) with auto rules: largest G <= 128 dividing N, F = max(1, M/2)."""
    g = io.group_size
    if g == "auto":
        g = max(d for d in range(1, min(n_ranks, 128) + 1)
                if n_ranks % d == 0)
    if n_ranks % g != 0:
        errors.append(f"io.group_size: group size must divide rank count "
                      f"({g} does not divide {n_ranks})")
        return None
    m = n_ranks // g
    f = io.files
    if f == "auto":
        f = max(1, m // 2)
    if m == 1:
        if f != 1:
            errors.append(f"io.files must be 1 when there is a single "
                          f"master, got {f}")
            return None
        return g, 1
    if f >= m:
        errors.append(f"io.files: file count must be smaller than the "
                      f"master count (F={f}, M={m})")
        return None
    if f < 1 or m % f != 0:
        errors.append(f"io.files: file count must divide the master count "
                      f"(F={f}, M={m})")
        return None
    return g, f


def validate(config: SimulationConfig,
             rank_grid_override=None) -> ResolvedPlan:
    """Semantic validation; returns the resolved plan or raises ConfigError
    listing every violation."""
    errors: list[str] = []
    ghost = gridmod.GHOST_WIDTH

    if any(c < 1 for c in config.grid_cells):
        errors.append(f"grid_cells components must be >= 1, "
                      f"got {config.grid_cells}")
    if any(b <= 0 for b in config.box_size):
        errors.append(f"box_size components must be > 0, "
                      f"got {config.box_size}")
    if config.n_steps < 0:
        errors.append(f"n_steps must be >= 0, got {config.n_steps}")
    if not 0.0 < config.cfl_factor <= 1.0:
        errors.append(f"cfl_factor violates the stability bound: must be in "
                      f"(0, 1], got {config.cfl_factor}")

    for s in config.species:
        where = f"species '{s.name}'"
        if s.mass <= 0:
            errors.append(f"{where}: mass must be > 0, got {s.mass}")
        if s.particles_per_cell < 1:
            errors.append(f"{where}: particles_per_cell must be >= 1")
        if s.init.density < 0:
            errors.append(f"{where}: density must be >= 0")
        if s.init.kind == "two_stream" and s.particles_per_cell % 2:
            errors.append(f"{where}: two_stream needs an even "
                          f"particles_per_cell (equal beams), "
                          f"got {s.particles_per_cell}")
    names = [s.name for s in config.species]
    if len(set(names)) != len(names):
        errors.append(f"species names must be unique, got {names}")

    for i, req in enumerate(config.outputs):
        where = f"outputs[{i}] ({req.name})"
        if req.every_n_steps < 1:
            errors.append(f"{where}: every_n_steps must be >= 1")
        if req.t_end is not None and req.t_start > req.t_end:
            errors.append(f"{where}: time window start exceeds end")
        if req.quantity in ("density", "particle_phase_space"):
            if req.species is None:
                errors.append(f"{where}: quantity needs a species")
            elif req.species not in names:
                errors.append(f"{where}: unknown species {req.species!r}")
        elif req.species is not None:
            errors.append(f"{where}: species only applies to density/"
                          f"particle_phase_space")
        reg = req.region
        if reg.kind == "plane":
            if not 0 <= reg.coordinate <= config.box_size[reg.axis]:
                errors.append(f"{where}: plane coordinate outside box")
        elif reg.kind == "box":
            for a in range(3):
                if not (0 <= reg.lo[a] <= reg.hi[a]
                        <= config.box_size[a]):
                    errors.append(f"{where}: box extents outside the "
                                  f"global box on axis {a}")
                    break
        elif reg.kind == "line":
            other = [a for a in range(3) if a != reg.axis]
            for c, a in zip(reg.fixed, other):
                if not 0 <= c <= config.box_size[a]:
                    errors.append(f"{where}: line coordinate outside box")
                    break

    rank_grid = rank_grid_override or config.rank_grid
    if rank_grid == "auto":
        rank_grid = (1, 1, 1)
    rank_grid = tuple(int(p) for p in rank_grid)
    if any(p < 1 for p in rank_grid):
        errors.append(f"rank_grid components must be >= 1, got {rank_grid}")
        rank_grid = (1, 1, 1)
    n_ranks = rank_grid[0] * rank_grid[1] * rank_grid[2]
    for a in range(3):
        if config.grid_cells[a] // rank_grid[a] < 2 * ghost:
            errors.append(
                f"rank grid incompatible with cell counts: axis {a} leaves "
                f"{config.grid_cells[a] // rank_grid[a]} cells per rank, "
                f"need >= {2 * ghost}")

    io_plan = resolve_io_plan(n_ranks, config.io, errors)

    if errors:
        raise ConfigError(errors)

    dt = derive_dt(config.grid_cells, config.box_size, config.cfl_factor)
    return ResolvedPlan(dt=dt, rank_grid=rank_grid, ghost_width=ghost,
                        n_ranks=n_ranks, io_group_size=io_plan[0],
                        io_files=io_plan[1])


def load_config(path, rank_grid_override=None):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    plan = validate(cfg, rank_grid_override=rank_grid_override)
    return cfg, plan


def to_json_dict(config: SimulationConfig) -> dict:
    """Round-trippable plain-dict form of a config."""
    def region_dict(r: Region):
        axis_name = "xyz"[r.axis]
        if r.kind == "full":
            return {"kind": "full"}
        if r.kind == "plane":
            return {"kind": "plane", "axis": axis_name,
                    "coordinate": r.coordinate}
        if r.kind == "box":
            return {"kind": "box", "lo": list(r.lo), "hi": list(r.hi)}
        return {"kind": "line", "axis": axis_name, "fixed": list(r.fixed)}

    doc = {
        "grid_cells": list(config.grid_cells),
        "box_size": list(config.box_size),
        "cfl_factor": config.cfl_factor,
        "n_steps": config.n_steps,
        "species": [],
        "outputs": [],
        "io": {"group_size": config.io.group_size, "files": config.io.files},
        "rank_grid": ("auto" if config.rank_grid == "auto"
                      else list(config.rank_grid)),
        "rng_seed": config.rng_seed,
        "layout": config.layout,
    }
    for s in config.species:
        init = {"kind": s.init.kind, "density": s.init.density}
        if s.init.kind == "two_stream":
            init["drift_momentum"] = s.init.drift_momentum
        else:
            init["thermal_momentum"] = s.init.thermal_momentum
        if s.init.perturbation.kind != "none":
            init["perturbation"] = {
                "kind": s.init.perturbation.kind,
                "amplitude": s.init.perturbation.amplitude,
                "mode": s.init.perturbation.mode,
            }
        doc["species"].append({
            "name": s.name, "charge": s.charge, "mass": s.mass,
            "particles_per_cell": s.particles_per_cell, "init": init})
    for o in config.outputs:
        out = {"quantity": o.quantity, "region": region_dict(o.region),
               "time_window": [o.t_start, o.t_end],
               "every_n_steps": o.every_n_steps, "name": o.name}
        if o.species is not None:
            out["species"] = o.species
        doc["outputs"].append(out)
    return doc


def serialize(config: SimulationConfig) -> str:
    return json.dumps(to_json_dict(config), indent=2)
