"""Output manager and the hierarchical aggregated PICB writer/reader.

Aggregation plan: N ranks form N/G groups of size G; within a group
every rank ships its block to the group master (the lowest rank), and
the M = N/G masters write at precomputed offsets into F files with
M/F masters per file, so the number of writers per file stays constant
as N grows with fixed G and N/F.

On-disk layout (little-endian, float64 payloads):

    file      := header(64B) group-block*
    header    := "PICB" version endian kind ncomp global_cells[3]
                 step time pad
    grid blk  := "GBLK" block_len group_id n_sub union_lo[3] union_hi[3]
                 sub*           sub := rank pad lo[3] hi[3] payload
    part blk  := "PBLK" block_len group_id species_id count records
                 (record = x y z px py pz w, record-major)

Grid payloads are z-fastest, component-major, addressed by global cell
extents, so reconstruction is independent of (N, G, F). A JSON index
sidecar maps every block to (file, offset, length); readers can also
recover by sequentially scanning the self-describing blocks.

Write strategies: "aggregated" (the scheme above), "legacy-shared"
(every rank writes its own block into one shared file, the old
baseline; realized as G=1, F=1) and "task-local" (one file per rank,
kept for benchmarking).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .config import OutputRequest, SimulationConfig
from .grid import DomainTopology

MAGIC = b"PICB"
GRID_BLOCK_MAGIC = b"GBLK"
PARTICLE_BLOCK_MAGIC = b"PBLK"
VERSION = 1
ENDIAN_MARK = 0x01020304
KIND_GRID = 0
KIND_PARTICLES = 1

_HEADER = struct.Struct("<4sIIII3QQd4x")
assert _HEADER.size == 64
_GRID_BLOCK = struct.Struct("<4sQII3Q3Q")
_GRID_SUB = struct.Struct("<II3Q3Q")
_PART_BLOCK = struct.Struct("<4sQIIQ")

STRATEGIES = ("aggregated", "legacy-shared", "task-local")


class OutputFormatError(ValueError):
    pass


class OutputWriteError(OSError):
    pass


@dataclass(frozen=True)
class IoTopology:
    """The (N, G, M, F) aggregation plan."""

    n_ranks: int
    group_size: int
    n_files: int

    @property
    def n_masters(self) -> int:
        return self.n_ranks // self.group_size

    @property
    def masters_per_file(self) -> int:
        return self.n_masters // self.n_files

    def group_of(self, rank: int) -> int:
        return rank // self.group_size

    def master_of(self, group: int) -> int:
        return group * self.group_size

    def is_master(self, rank: int) -> bool:
        return rank % self.group_size == 0

    def members_of(self, group: int):
        lo = group * self.group_size
        return range(lo, lo + self.group_size)

    def file_of(self, group: int) -> int:
        return group // self.masters_per_file

    def groups_of_file(self, file_index: int):
        mpf = self.masters_per_file
        return range(file_index * mpf, (file_index + 1) * mpf)


def plan_io_topology(n_ranks: int, group_size: int,
                     n_files: int) -> IoTopology:
    """Validated aggregation plan; degenerate M=1 runs allow F=1."""
    if n_ranks < 1 or group_size < 1 or n_files < 1:
        raise ValueError("N, G and F must all be positive")
    if n_ranks % group_size:
        raise ValueError(f"group size must divide rank count "
                         f"(G={group_size}, N={n_ranks})")
    m = n_ranks // group_size
    if m == 1:
        if n_files != 1:
            raise ValueError(f"single-master plan needs F=1, got {n_files}")
    else:
        if n_files >= m:
            raise ValueError(f"file count must be smaller than master count "
                             f"(F={n_files}, M={m})")
        if m % n_files:
            raise ValueError(f"file count must divide master count "
                             f"(F={n_files}, M={m})")
    return IoTopology(n_ranks=n_ranks, group_size=group_size,
                      n_files=n_files)


# --- emission predicate and region clipping ---------------------------------

def should_emit(request: OutputRequest, step: int, time: float) -> bool:
    if step % request.every_n_steps:
        return False
    if time < request.t_start:
        return False
    return request.t_end is None or time <= request.t_end


def request_cell_box(request: OutputRequest, config: SimulationConfig):
    """Global cell-index box [lo, hi) selected by the request's region."""
    cells = config.grid_cells
    d = config.cell_sizes
    reg = request.region
    lo = [0, 0, 0]
    hi = list(cells)
    if reg.kind == "plane":
        layer = min(int(reg.coordinate / d[reg.axis]), cells[reg.axis] - 1)
        lo[reg.axis] = layer
        hi[reg.axis] = layer + 1
    elif reg.kind == "box":
        for a in range(3):
            lo[a] = min(int(math.floor(reg.lo[a] / d[a])), cells[a] - 1)
            hi[a] = max(min(int(math.ceil(reg.hi[a] / d[a])), cells[a]),
                        lo[a] + 1)
    elif reg.kind == "line":
        other = [a for a in range(3) if a != reg.axis]
        for c, a in zip(reg.fixed, other):
            layer = min(int(c / d[a]), cells[a] - 1)
            lo[a] = layer
            hi[a] = layer + 1
    return tuple(lo), tuple(hi)


def clip_to_rank(box, topo: DomainTopology):
    """Intersect a global cell box with the rank's interior, or None."""
    lo, hi = box
    clo = []
    chi = []
    for a in range(3):
        s = topo.starts[a]
        e = s + topo.counts[a]
        lo_a = max(lo[a], s)
        hi_a = min(hi[a], e)
        if lo_a >= hi_a:
            return None
        clo.append(lo_a)
        chi.append(hi_a)
    return tuple(clo), tuple(chi)


# --- block serialization -----------------------------------------------------

def _grid_sub_bytes(rank: int, lo, hi, payload: np.ndarray) -> bytes:
    header = _GRID_SUB.pack(rank, 0, *lo, *hi)
    data = np.ascontiguousarray(payload, dtype="<f8")
    return header + data.tobytes()


def compose_grid_block(group_id: int, subs) -> bytes:
    """subs: list of (rank, lo, hi, payload), ascending rank order."""
    body = b"".join(_grid_sub_bytes(r, lo, hi, p) for r, lo, hi, p in subs)
    if subs:
        union_lo = tuple(min(s[1][a] for s in subs) for a in range(3))
        union_hi = tuple(max(s[2][a] for s in subs) for a in range(3))
    else:
        union_lo = union_hi = (0, 0, 0)
    header = _GRID_BLOCK.pack(GRID_BLOCK_MAGIC,
                              _GRID_BLOCK.size + len(body),
                              group_id, len(subs), *union_lo, *union_hi)
    return header + body


def compose_particle_block(group_id: int, species_id: int,
                           records: np.ndarray) -> bytes:
    data = np.ascontiguousarray(records, dtype="<f8")
    if data.size and (data.ndim != 2 or data.shape[1] != 7):
        raise ValueError("particle records must be (n, 7)")
    body = data.tobytes()
    header = _PART_BLOCK.pack(PARTICLE_BLOCK_MAGIC,
                              _PART_BLOCK.size + len(body),
                              group_id, species_id, len(data))
    return header + body


def header_bytes(kind: int, ncomp: int, global_cells, step: int,
                 time: float) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, ENDIAN_MARK, kind, ncomp,
                        *global_cells, step, time)


# --- collective write --------------------------------------------------------

@dataclass(frozen=True)
class FilesetPaths:
    index_path: str
    data_paths: tuple[str, ...]


def fileset_paths(out_dir: str, name: str, step: int,
                  n_files: int) -> FilesetPaths:
    base = os.path.join(out_dir, f"{name}_step{step:08d}")
    return FilesetPaths(
        index_path=base + ".index.json",
        data_paths=tuple(f"{base}.f{i:03d}.picb" for i in range(n_files)))


def write_collective(*, out_dir, name, kind, ncomp, step, time, local_block,
                     io: IoTopology, topo: DomainTopology, transport,
                     strategy="aggregated", quantity="", species_names=None,
                     config_echo=None, region_box=None) -> FilesetPaths:
    """Collective fileset write; every rank must call with the same
    request. Only masters touch the file system; distinct masters never
    write overlapping ranges.

    local_block: grid -> (lo, hi, payload (ncomp,nx,ny,nz)) or None;
    particles -> (species_id, records). Returns the fileset paths.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown io strategy {strategy!r}")
    rank = transport.rank
    n = io.n_ranks

    if strategy == "aggregated":
        eff = io
    else:
        # legacy-shared: every rank its own group, one shared file;
        # task-local: every rank its own group and its own file
        eff = IoTopology(n_ranks=n, group_size=1,
                         n_files=1 if strategy == "legacy-shared" else n)

    # 1. local block -> group block bytes on masters
    if eff.is_master(rank):
        group = eff.group_of(rank)
        parts = [(rank, local_block)]
        for member in eff.members_of(group):
            if member != rank:
                parts.append((member,
                              transport.recv(member, "io.block")))
        if kind == KIND_GRID:
            subs = [(r, b[0], b[1], b[2]) for r, b in parts if b is not None]
            block = compose_grid_block(group, subs)
        else:
            recs = [b[1] for _, b in parts if b is not None and len(b[1])]
            species_id = next((b[0] for _, b in parts if b is not None), 0)
            merged = np.concatenate(recs) if recs else np.empty((0, 7))
            block = compose_particle_block(group, species_id, merged)
    else:
        transport.send(eff.master_of(eff.group_of(rank)), "io.block",
                       local_block)
        block = None

    # 2. everyone learns every group's block length
    lengths = transport.allgather(None if block is None else len(block))
    group_len = {eff.group_of(r): ln for r, ln in enumerate(lengths)
                 if ln is not None}

    offsets = {}
    file_sizes = [_HEADER.size] * eff.n_files
    for g in range(eff.n_masters):
        f = eff.file_of(g)
        offsets[g] = file_sizes[f]
        file_sizes[f] += group_len[g]

    paths = fileset_paths(out_dir, name, step, eff.n_files)
    header = header_bytes(kind, ncomp, topo.global_cells, step, time)

    # 3. rank 0 creates the files at final size, then masters fill in
    if rank == 0:
        os.makedirs(out_dir, exist_ok=True)
        for path, size in zip(paths.data_paths, file_sizes):
            try:
                with open(path, "wb") as fh:
                    fh.write(header)
                    fh.truncate(size)
            except OSError as exc:
                raise OutputWriteError(
                    f"creating {path} ({size} bytes): {exc}") from exc
    transport.barrier()

    if block is not None:
        group = eff.group_of(rank)
        path = paths.data_paths[eff.file_of(group)]
        offset = offsets[group]
        try:
            with open(path, "r+b") as fh:
                fh.seek(offset)
                fh.write(block)
                fh.flush()
        except OSError as exc:
            raise OutputWriteError(
                f"writing block of group {group} at {path}:{offset}: "
                f"{exc}") from exc
    transport.barrier()

    # 4. rank 0 writes the index sidecar
    if rank == 0:
        index = {
            "format": "picb-index",
            "version": VERSION,
            "kind": "grid" if kind == KIND_GRID else "particles",
            "quantity": quantity,
            "name": name,
            "step": step,
            "time": time,
            "ncomp": ncomp,
            "global_cells": list(topo.global_cells),
            "region": None if region_box is None else
                {"lo": list(region_box[0]), "hi": list(region_box[1])},
            "io": {"N": n, "G": eff.group_size, "M": eff.n_masters,
                   "F": eff.n_files, "strategy": strategy},
            "files": [os.path.basename(p) for p in paths.data_paths],
            "blocks": [{"group": g, "file": eff.file_of(g),
                        "offset": offsets[g], "length": group_len[g]}
                       for g in range(eff.n_masters)],
            "species": species_names or {},
        }
        if config_echo is not None:
            index["config"] = config_echo
        with open(paths.index_path, "w", encoding="utf-8") as fh:
            json.dump(index, fh, indent=1)
    transport.barrier()
    return paths


def legacy_write_all(**kwargs) -> FilesetPaths:
    """The old baseline: every rank writes into one shared file."""
    kwargs["strategy"] = "legacy-shared"
    return write_collective(**kwargs)


# --- reading -----------------------------------------------------------------

@dataclass
class GridData:
    quantity: str
    step: int
    time: float
    ncomp: int
    global_cells: tuple
    lo: tuple                 # region origin, global cell indices
    data: np.ndarray          # (ncomp, nx, ny, nz)


@dataclass
class ParticleData:
    quantity: str
    step: int
    time: float
    global_cells: tuple
    species: dict             # species_id -> (n, 7) records


def _read_header(buf: bytes, path: str):
    if len(buf) < _HEADER.size:
        raise OutputFormatError(f"{path}: truncated header "
                                f"({len(buf)} bytes)")
    (magic, version, endian, kind, ncomp, gx, gy, gz, step, time) = \
        _HEADER.unpack(buf[:_HEADER.size])
    if magic != MAGIC:
        raise OutputFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise OutputFormatError(f"{path}: unsupported version {version}")
    if endian != ENDIAN_MARK:
        raise OutputFormatError(f"{path}: endianness marker mismatch "
                                f"(0x{endian:08x})")
    return kind, ncomp, (gx, gy, gz), step, time


def _scan_blocks(buf: bytes, path: str):
    """Yield (offset, kind_magic, block_bytes) for each block in a file."""
    pos = _HEADER.size
    while pos < len(buf):
        magic = buf[pos:pos + 4]
        if magic not in (GRID_BLOCK_MAGIC, PARTICLE_BLOCK_MAGIC):
            raise OutputFormatError(
                f"{path}: unknown block magic {magic!r} at offset {pos}")
        (length,) = struct.unpack_from("<Q", buf, pos + 4)
        if pos + length > len(buf):
            raise OutputFormatError(
                f"{path}: truncated block at offset {pos} "
                f"(wants {length} bytes, {len(buf) - pos} left)")
        yield pos, magic, buf[pos:pos + length]
        pos += length


def _parse_grid_block(block: bytes, ncomp: int, path: str, offset: int):
    (magic, length, group, n_sub, *union) = \
        _GRID_BLOCK.unpack_from(block, 0)
    pos = _GRID_BLOCK.size
    subs = []
    for _ in range(n_sub):
        rank, _pad, lx, ly, lz, hx, hy, hz = _GRID_SUB.unpack_from(block, pos)
        pos += _GRID_SUB.size
        shape = (hx - lx, hy - ly, hz - lz)
        count = ncomp * shape[0] * shape[1] * shape[2]
        nbytes = count * 8
        if pos + nbytes > len(block):
            raise OutputFormatError(
                f"{path}: sub-block payload of rank {rank} overruns block "
                f"at offset {offset}")
        payload = np.frombuffer(block, dtype="<f8", count=count,
                                offset=pos).reshape((ncomp, *shape))
        pos += nbytes
        subs.append((rank, (lx, ly, lz), (hx, hy, hz), payload))
    return group, subs


def _parse_particle_block(block: bytes, path: str, offset: int):
    magic, length, group, species_id, count = _PART_BLOCK.unpack_from(block)
    nbytes = count * 7 * 8
    if _PART_BLOCK.size + nbytes > len(block):
        raise OutputFormatError(
            f"{path}: particle records overrun block at offset {offset}")
    records = np.frombuffer(block, dtype="<f8", count=count * 7,
                            offset=_PART_BLOCK.size).reshape((count, 7))
    return group, species_id, records


def read_fileset(index_path: str, use_index: bool = True):
    """Reconstruct global quantities from a fileset.

    With use_index=False the index sidecar is ignored and blocks are
    recovered by sequential scan (the index is an optimization).
    """
    with open(index_path, "r", encoding="utf-8") as fh:
        index = json.load(fh)
    if index.get("format") != "picb-index":
        raise OutputFormatError(f"{index_path}: not a picb index")
    base_dir = os.path.dirname(os.path.abspath(index_path))
    data_paths = [os.path.join(base_dir, f) for f in index["files"]]
    return read_data_files(data_paths, index=index if use_index else None,
                           quantity=index.get("quantity", ""))


def read_data_files(data_paths, index=None, quantity=""):
    """Reconstruct from data files, via the index when given."""
    grid_blocks = []
    particle_blocks = []
    meta = None
    for fi, path in enumerate(sorted(data_paths)):
        with open(path, "rb") as fh:
            buf = fh.read()
        kind, ncomp, cells, step, time = _read_header(buf, path)
        if meta is None:
            meta = (kind, ncomp, cells, step, time)
        elif meta[:3] != (kind, ncomp, cells):
            raise OutputFormatError(
                f"{path}: header disagrees with other files in the set")
        if index is not None:
            spans = [(b["offset"], b["length"]) for b in index["blocks"]
                     if b["file"] == fi]
            blocks = []
            for off, length in spans:
                if off + length > len(buf):
                    raise OutputFormatError(
                        f"{path}: index block at {off} (+{length}) overruns "
                        f"file of {len(buf)} bytes")
                magic = buf[off:off + 4]
                blocks.append((off, magic, buf[off:off + length]))
        else:
            blocks = list(_scan_blocks(buf, path))
        for off, magic, block in blocks:
            if magic == GRID_BLOCK_MAGIC:
                grid_blocks.append(
                    (path, off) + _parse_grid_block(block, ncomp, path, off))
            else:
                particle_blocks.append(
                    (path, off) + _parse_particle_block(block, path, off))

    kind, ncomp, cells, step, time = meta
    if kind == KIND_GRID:
        subs = [s for blk in sorted(grid_blocks, key=lambda b: b[2])
                for s in blk[3]]
        if not subs:
            raise OutputFormatError("fileset contains no grid data")
        lo = tuple(min(s[1][a] for s in subs) for a in range(3))
        hi = tuple(max(s[2][a] for s in subs) for a in range(3))
        shape = tuple(hi[a] - lo[a] for a in range(3))
        data = np.zeros((ncomp, *shape))
        for rank, slo, shi, payload in subs:
            sl = tuple(slice(slo[a] - lo[a], shi[a] - lo[a])
                       for a in range(3))
            data[(slice(None), *sl)] = payload
        return GridData(quantity=quantity, step=step, time=time,
                        ncomp=ncomp, global_cells=cells, lo=lo, data=data)

    species = {}
    for path, off, group, species_id, records in sorted(
            particle_blocks, key=lambda b: b[2]):
        prev = species.get(species_id)
        species[species_id] = records if prev is None \
            else np.concatenate([prev, records])
    return ParticleData(quantity=quantity, step=step, time=time,
                        global_cells=cells, species=species)


def fileset_summary(index_path: str) -> dict:
    """Inspection record: metadata plus payload checksums."""
    with open(index_path, "r", encoding="utf-8") as fh:
        index = json.load(fh)
    data = read_fileset(index_path)
    out = {
        "index": os.path.basename(index_path),
        "kind": index["kind"],
        "quantity": index.get("quantity", ""),
        "step": index["step"],
        "time": index["time"],
        "global_cells": index["global_cells"],
        "io": index["io"],
        "n_blocks": len(index["blocks"]),
        "files": index["files"],
    }
    if isinstance(data, GridData):
        out["region_lo"] = list(data.lo)
        out["shape"] = list(data.data.shape)
        out["components"] = [
            {"min": float(c.min()), "max": float(c.max()),
             "sha256": hashlib.sha256(
                 np.ascontiguousarray(c, dtype="<f8").tobytes()).hexdigest()}
            for c in data.data]
    else:
        out["species"] = {
            str(sid): {"count": int(len(recs)),
                       "sha256": hashlib.sha256(
                           np.ascontiguousarray(recs, dtype="<f8")
                           .tobytes()).hexdigest()}
            for sid, recs in sorted(data.species.items())}
    return out
