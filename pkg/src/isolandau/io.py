"""Run configuration, checkpoints and the CSV/JSON artifacts of a run directory.

Checkpoint layout (all little-endian)::

    b"LNDAU1"                                  magic
    u8 kind | f64 extent | u32 n | f64 t | u64 step | f64 clipped_mass
    n_values x f64                             density at the nodes
    u32 CRC-32 of everything between the magic and the checksum
"""
from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, profiles
from .diagnostics import DiagnosticsRecord
from .dynamics import GridSpec, SimConfig, SimState
from .errors import ChecksumError, ParameterError
from .fields import CartesianGrid3, Field, RadialGrid

MAGIC = b"LNDAU1"
_HEADER = struct.Struct("<BdIdQd")
_CRC = struct.Struct("<I")
_KINDS = {"radial": 0, "cartesian": 1}

CSV_NAME = "diagnostics.csv"
SUMMARY_NAME = "summary.json"
MANIFEST_NAME = "manifest.json"
LOG_NAME = "run.log"
SLICE_DIR = "slices"
CHECKPOINT_DIR = "checkpoints"


# configuration -------------------------------------------------------------

SCALAR_KEYS = {
    "form": str,
    "alpha": float,
    "t_end": float,
    "cfl_safety": float,
    "blowup_factor": float,
    "grid.kind": str,
    "grid.extent": float,
    "grid.n": int,
    "output.stride": int,
    "output.checkpoint_every": int,
    "init.profile": str,
}


def parse_config_text(text, source="<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Later keys override earlier ones."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        check_key(key)
        out[key] = value
    return out


def check_key(key):
    if key in SCALAR_KEYS or (key.startswith("init.") and len(key) > 5):
        return
    raise ParameterError(f"unknown config key {key!r}; known keys: "
                         f"{', '.join(sorted(SCALAR_KEYS))}, init.<profile parameter>")


def load_config(path) -> dict:
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))


def apply_overrides(cfg: dict, overrides) -> dict:
    """Merge ``key=value`` strings (command-line ``--set``) over a parsed config."""
    cfg = dict(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ParameterError(f"override must look like key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        check_key(key)
        cfg[key] = value
    return cfg


def _convert(key, value):
    try:
        return SCALAR_KEYS[key](value)
    except ValueError:
        raise ParameterError(f"config key {key}: cannot read {value!r} as "
                             f"{SCALAR_KEYS[key].__name__}") from None


def sim_config(cfg: dict) -> SimConfig:
    vals = {k: _convert(k, v) for k, v in cfg.items() if k in SCALAR_KEYS}
    profile = vals.get("init.profile", "maxwellian")
    if profile not in profiles.SUPPORTED:
        raise ParameterError(f"unknown initial profile {profile!r}; supported: "
                             f"{', '.join(profiles.SUPPORTED)}")
    init_params = tuple(sorted((k[5:], v) for k, v in cfg.items()
                               if k.startswith("init.") and k != "init.profile"))
    defaults = SimConfig()
    grid = GridSpec(vals.get("grid.kind", defaults.grid.kind),
                    vals.get("grid.extent", defaults.grid.extent),
                    vals.get("grid.n", defaults.grid.n))
    config = SimConfig(
        form=vals.get("form", defaults.form),
        alpha=vals.get("alpha", defaults.alpha),
        grid=grid,
        t_end=vals.get("t_end", defaults.t_end),
        cfl_safety=vals.get("cfl_safety", defaults.cfl_safety),
        output_stride=vals.get("output.stride", defaults.output_stride),
        init=profile,
        init_params=init_params,
        blowup_factor=vals.get("blowup_factor", defaults.blowup_factor),
        checkpoint_every=vals.get("output.checkpoint_every", defaults.checkpoint_every),
    )
    grid.build()
    config.initial_field()  # reject bad profile parameters before any output is written
    return config


def config_echo(config: SimConfig) -> dict:
    """Canonical key-value form of a configuration (what a config file would hold)."""
    out = {
        "form": config.form,
        "alpha": config.alpha,
        "t_end": config.t_end,
        "cfl_safety": config.cfl_safety,
        "blowup_factor": config.blowup_factor,
        "grid.kind": config.grid.kind,
        "grid.extent": config.grid.extent,
        "grid.n": config.grid.n,
        "output.stride": config.output_stride,
        "output.checkpoint_every": config.checkpoint_every,
        "init.profile": config.init,
    }
    for k, v in config.init_params:
        out[f"init.{k}"] = v
    return out


def config_text(config: SimConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_echo(config).items())


# checkpoints ---------------------------------------------------------------------

def _grid_fields(grid):
    if grid.kind == "radial":
        return _KINDS["radial"], grid.r_max, grid.n_points
    return _KINDS["cartesian"], grid.half_width, grid.n_per_axis


def _make_grid(kind, extent, n):
    if kind == _KINDS["radial"]:
        return RadialGrid(extent, n)
    if kind == _KINDS["cartesian"]:
        return CartesianGrid3(extent, n)
    raise ChecksumError(f"unknown grid kind code {kind}")


def encode_state(state: SimState) -> bytes:
    kind, extent, n = _grid_fields(state.u.grid)
    payload = (_HEADER.pack(kind, extent, n, state.t, state.step, state.clipped_mass)
               + np.ascontiguousarray(state.u.values, dtype="<f8").tobytes())
    return MAGIC + payload + _CRC.pack(zlib.crc32(payload))


def decode_state(blob: bytes, source="<bytes>") -> SimState:
    if len(blob) < len(MAGIC) + _HEADER.size + _CRC.size or blob[:len(MAGIC)] != MAGIC:
        raise ChecksumError(f"{source}: not an LNDAU1 checkpoint")
    payload = blob[len(MAGIC):-_CRC.size]
    (crc,) = _CRC.unpack(blob[-_CRC.size:])
    if zlib.crc32(payload) != crc:
        raise ChecksumError(f"{source}: CRC-32 mismatch (file corrupted)")
    kind, extent, n, t, step, clipped = _HEADER.unpack(payload[:_HEADER.size])
    grid = _make_grid(kind, extent, n)
    values = np.frombuffer(payload[_HEADER.size:], dtype="<f8")
    if values.size != math.prod(grid.shape):
        raise ChecksumError(f"{source}: payload size does not match the grid")
    u = Field(grid, values.reshape(grid.shape).astype(np.float64))
    state = SimState.initial(u, t=t, step=step)
    return SimState(state.t, state.u, state.a, state.step, clipped)


def write_state(path, state: SimState):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_state(state))


def read_state(path) -> SimState:
    path = Path(path)
    return decode_state(path.read_bytes(), str(path))


def slice_name(step) -> str:
    return f"{SLICE_DIR}/{step:09d}.lndau"


def checkpoint_name(step) -> str:
    return f"{CHECKPOINT_DIR}/step_{step:09d}.lndau"


def list_slices(run_dir) -> list[Path]:
    return sorted((Path(run_dir) / SLICE_DIR).glob("*.lndau"))


def load_slices(run_dir) -> list[SimState]:
    return [read_state(p) for p in list_slices(run_dir)]


# csv / json -------------------------------------------------------------------------

def format_number(x) -> str:
    return format(float(x), ".17g")


def csv_header() -> str:
    return ",".join(DiagnosticsRecord.CSV_HEADER) + "\n"


def csv_row(rec: DiagnosticsRecord) -> str:
    return ",".join(format_number(v) for v in rec.csv_values()) + "\n"


def read_csv_rows(path) -> list[list[float]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != csv_header().rstrip("\n"):
        raise ParameterError(f"{path}: unexpected CSV header")
    return [[float(x) for x in line.split(",")] for line in lines[1:] if line]


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _jsonable(obj.item())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


# manifest -----------------------------------------------------------------------------

@dataclass
class RunManifest:
    """What a run produced.  ``wall_clock_s`` goes to the run log, not the JSON,
    so that identical configurations give byte-identical JSON."""

    config: dict
    grid: dict
    outputs: dict = field(default_factory=dict)
    version: str = __version__
    seed: None = None
    wall_clock_s: float = 0.0

    def to_dict(self):
        out = asdict(self)
        out.pop("wall_clock_s")
        return out


def verify_manifest(run_dir) -> list[str]:
    """Problems with a run directory's manifest (empty when consistent)."""
    run_dir = Path(run_dir)
    data = json.loads((run_dir / MANIFEST_NAME).read_text())
    problems = []
    for name, rows in data["outputs"].items():
        path = run_dir / name
        if not path.exists():
            problems.append(f"missing {name}")
        elif name.endswith(".csv") and len(read_csv_rows(path)) != rows:
            problems.append(f"{name}: expected {rows} rows")
        elif path.is_dir() and len(list(path.glob("*.lndau"))) != rows:
            problems.append(f"{name}: expected {rows} files")
    return problems
