/**
 * PICB fileset reader.
 *
 * Binary layout (little-endian, float64 payloads):
 *   file      = header(64B) block*
 *   grid blk  = "GBLK" len group nSub unionLo[3] unionHi[3] sub*
 *   sub       = rank pad lo[3] hi[3] payload (ncomp, z-fastest)
 *   part blk  = "PBLK" len group species count records(count x 7)
 *
 * The JSON index sidecar maps blocks to (file, offset, length); it is
 * an optimization only, readers can recover by sequential scan.
 */
import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

export const HEADER_SIZE = 64;
export const KIND_GRID = 0;
export const KIND_PARTICLES = 1;
const ENDIAN_MARK = 0x01020304;
const GRID_BLOCK_HEADER = 4 + 8 + 4 + 4 + 48;
const GRID_SUB_HEADER = 4 + 4 + 48;
const PART_BLOCK_HEADER = 4 + 8 + 4 + 4 + 8;

export class PicbFormatError extends Error {}

export interface FileHeader {
  kind: number;
  ncomp: number;
  globalCells: [number, number, number];
  step: number;
  time: number;
}

export interface GridSubBlock {
  rank: number;
  lo: [number, number, number];
  hi: [number, number, number];
  /** ncomp * prod(hi-lo) values, component-major, z-fastest */
  payload: Float64Array;
}

export interface GridData {
  kind: "grid";
  quantity: string;
  step: number;
  time: number;
  ncomp: number;
  globalCells: [number, number, number];
  lo: [number, number, number];
  shape: [number, number, number];
  /** component-major (ncomp, nx, ny, nz), z-fastest */
  data: Float64Array;
}

export interface ParticleData {
  kind: "particles";
  quantity: string;
  step: number;
  time: number;
  globalCells: [number, number, number];
  /** species id -> flat records (n x 7): x y z px py pz w */
  species: Map<number, Float64Array>;
}

export type FilesetData = GridData | ParticleData;

function u64(view: DataView, offset: number, ctx: string): number {
  const v = view.getBigUint64(offset, true);
  if (v > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new PicbFormatError(`${ctx}: u64 value too large at ${offset}`);
  }
  return Number(v);
}

function magicAt(buf: Uint8Array, offset: number): string {
  return String.fromCharCode(...buf.subarray(offset, offset + 4));
}

/** Aligned float64 view of a byte span (copies; Buffers may be unaligned). */
function floatsAt(buf: Uint8Array, offset: number, count: number,
                  ctx: string): Float64Array {
  if (offset + count * 8 > buf.length) {
    throw new PicbFormatError(
      `${ctx}: payload of ${count} doubles at byte ${offset} overruns file ` +
      `of ${buf.length} bytes`);
  }
  const copy = new Uint8Array(count * 8);
  copy.set(buf.subarray(offset, offset + count * 8));
  return new Float64Array(copy.buffer);
}

export function parseHeader(buf: Uint8Array, ctx: string): FileHeader {
  if (buf.length < HEADER_SIZE) {
    throw new PicbFormatError(`${ctx}: truncated header (${buf.length} bytes)`);
  }
  if (magicAt(buf, 0) !== "PICB") {
    throw new PicbFormatError(`${ctx}: bad magic ${magicAt(buf, 0)}`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const version = view.getUint32(4, true);
  if (version !== 1) {
    throw new PicbFormatError(`${ctx}: unsupported version ${version}`);
  }
  if (view.getUint32(8, true) !== ENDIAN_MARK) {
    throw new PicbFormatError(`${ctx}: endianness marker mismatch`);
  }
  return {
    kind: view.getUint32(12, true),
    ncomp: view.getUint32(16, true),
    globalCells: [u64(view, 20, ctx), u64(view, 28, ctx), u64(view, 36, ctx)],
    step: u64(view, 44, ctx),
    time: view.getFloat64(52, true),
  };
}

interface RawBlock {
  offset: number;
  magic: string;
  length: number;
}

function scanBlocks(buf: Uint8Array, ctx: string): RawBlock[] {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const blocks: RawBlock[] = [];
  let pos = HEADER_SIZE;
  while (pos < buf.length) {
    const magic = magicAt(buf, pos);
    if (magic !== "GBLK" && magic !== "PBLK") {
      throw new PicbFormatError(
        `${ctx}: unknown block magic ${JSON.stringify(magic)} at byte ${pos}`);
    }
    const length = u64(view, pos + 4, ctx);
    if (pos + length > buf.length) {
      throw new PicbFormatError(
        `${ctx}: truncated block at byte ${pos} (wants ${length} bytes, ` +
        `${buf.length - pos} left)`);
    }
    blocks.push({ offset: pos, magic, length });
    pos += length;
  }
  return blocks;
}

function parseGridBlock(buf: Uint8Array, block: RawBlock, ncomp: number,
                        ctx: string): { group: number; subs: GridSubBlock[] } {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const base = block.offset;
  const group = view.getUint32(base + 12, true);
  const nSub = view.getUint32(base + 16, true);
  let pos = base + GRID_BLOCK_HEADER;
  const subs: GridSubBlock[] = [];
  for (let s = 0; s < nSub; s++) {
    const rank = view.getUint32(pos, true);
    const lo: [number, number, number] = [
      u64(view, pos + 8, ctx), u64(view, pos + 16, ctx),
      u64(view, pos + 24, ctx)];
    const hi: [number, number, number] = [
      u64(view, pos + 32, ctx), u64(view, pos + 40, ctx),
      u64(view, pos + 48, ctx)];
    pos += GRID_SUB_HEADER;
    const count = ncomp * (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
    const payload = floatsAt(buf, pos, count, ctx);
    pos += count * 8;
    if (pos > base + block.length) {
      throw new PicbFormatError(
        `${ctx}: sub-block of rank ${rank} overruns block at ${base}`);
    }
    subs.push({ rank, lo, hi, payload });
  }
  return { group, subs };
}

function parseParticleBlock(buf: Uint8Array, block: RawBlock, ctx: string):
    { group: number; speciesId: number; records: Float64Array } {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const base = block.offset;
  const group = view.getUint32(base + 12, true);
  const speciesId = view.getUint32(base + 16, true);
  const count = u64(view, base + 20, ctx);
  const records = floatsAt(buf, base + PART_BLOCK_HEADER, count * 7, ctx);
  return { group, speciesId, records };
}

export interface IndexSidecar {
  format: string;
  kind: string;
  quantity: string;
  step: number;
  time: number;
  ncomp: number;
  global_cells: number[];
  io: { N: number; G: number; M: number; F: number; strategy: string };
  files: string[];
  blocks: { group: number; file: number; offset: number; length: number }[];
  species: Record<string, string>;
}

export function readIndex(indexPath: string): IndexSidecar {
  const index = JSON.parse(fs.readFileSync(indexPath, "utf-8"));
  if (index.format !== "picb-index") {
    throw new PicbFormatError(`${indexPath}: not a picb index sidecar`);
  }
  return index as IndexSidecar;
}

/**
 * Reconstruct the global quantity of one fileset.
 *
 * With useIndex=false the block table in the sidecar is ignored and the
 * data files are scanned sequentially (recovery path).
 */
export function readFileset(indexPath: string,
                            useIndex = true): FilesetData {
  const index = readIndex(indexPath);
  const dir = path.dirname(path.resolve(indexPath));
  const dataPaths = index.files.map((f) => path.join(dir, f));

  let header: FileHeader | null = null;
  const gridSubs: { group: number; subs: GridSubBlock[] }[] = [];
  const particleBlocks: { group: number; speciesId: number;
                          records: Float64Array }[] = [];

  dataPaths.forEach((p, fi) => {
    const buf = new Uint8Array(fs.readFileSync(p));
    const h = parseHeader(buf, p);
    if (header === null) {
      header = h;
    } else if (header.kind !== h.kind || header.ncomp !== h.ncomp) {
      throw new PicbFormatError(`${p}: header disagrees with fileset`);
    }
    const blocks = useIndex
      ? index.blocks.filter((b) => b.file === fi).map((b) => {
          const magic = magicAt(buf, b.offset);
          if (b.offset + b.length > buf.length) {
            throw new PicbFormatError(
              `${p}: index block at ${b.offset} overruns file`);
          }
          return { offset: b.offset, magic, length: b.length };
        })
      : scanBlocks(buf, p);
    for (const block of blocks) {
      if (block.magic === "GBLK") {
        gridSubs.push(parseGridBlock(buf, block, h.ncomp, p));
      } else {
        particleBlocks.push(parseParticleBlock(buf, block, p));
      }
    }
  });
  if (header === null) {
    throw new PicbFormatError(`${indexPath}: fileset lists no data files`);
  }
  const h: FileHeader = header;

  if (h.kind === KIND_GRID) {
    const subs = gridSubs
      .sort((a, b) => a.group - b.group)
      .flatMap((g) => g.subs);
    if (subs.length === 0) {
      throw new PicbFormatError(`${indexPath}: fileset contains no grid data`);
    }
    const lo: [number, number, number] = [Infinity, Infinity, Infinity];
    const hi: [number, number, number] = [-Infinity, -Infinity, -Infinity];
    for (const s of subs) {
      for (let a = 0; a < 3; a++) {
        lo[a] = Math.min(lo[a], s.lo[a]);
        hi[a] = Math.max(hi[a], s.hi[a]);
      }
    }
    const shape: [number, number, number] =
      [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    const data = new Float64Array(h.ncomp * shape[0] * shape[1] * shape[2]);
    for (const s of subs) {
      const sn = [s.hi[0] - s.lo[0], s.hi[1] - s.lo[1], s.hi[2] - s.lo[2]];
      let src = 0;
      for (let c = 0; c < h.ncomp; c++) {
        for (let i = 0; i < sn[0]; i++) {
          for (let j = 0; j < sn[1]; j++) {
            const gi = s.lo[0] - lo[0] + i;
            const gj = s.lo[1] - lo[1] + j;
            const gk = s.lo[2] - lo[2];
            const dst = ((c * shape[0] + gi) * shape[1] + gj) * shape[2] + gk;
            data.set(s.payload.subarray(src, src + sn[2]), dst);
            src += sn[2];
          }
        }
      }
    }
    return { kind: "grid", quantity: index.quantity, step: h.step,
             time: h.time, ncomp: h.ncomp, globalCells: h.globalCells,
             lo, shape, data };
  }

  const species = new Map<number, Float64Array>();
  particleBlocks.sort((a, b) => a.group - b.group);
  for (const blk of particleBlocks) {
    const prev = species.get(blk.speciesId);
    if (prev === undefined) {
      species.set(blk.speciesId, blk.records);
    } else {
      const merged = new Float64Array(prev.length + blk.records.length);
      merged.set(prev);
      merged.set(blk.records, prev.length);
      species.set(blk.speciesId, merged);
    }
  }
  return { kind: "particles", quantity: index.quantity, step: h.step,
           time: h.time, globalCells: h.globalCells, species };
}

export function sha256OfFloats(values: Float64Array): string {
  const bytes = new Uint8Array(values.buffer, values.byteOffset,
                               values.length * 8);
  return createHash("sha256").update(bytes).digest("hex");
}

/** One component of a grid fileset as a contiguous array. */
export function component(grid: GridData, c: number): Float64Array {
  const n = grid.shape[0] * grid.shape[1] * grid.shape[2];
  return grid.data.subarray(c * n, (c + 1) * n);
}

/** Mean over y and z of one component: profile along x. */
export function xProfile(grid: GridData, c: number): Float64Array {
  const [nx, ny, nz] = grid.shape;
  const comp = component(grid, c);
  const out = new Float64Array(nx);
  for (let i = 0; i < nx; i++) {
    let sum = 0;
    const base = i * ny * nz;
    for (let jk = 0; jk < ny * nz; jk++) sum += comp[base + jk];
    out[i] = sum / (ny * nz);
  }
  return out;
}

/** 2D slice comp[:, :, kIndex] (x-y plane) of one component. */
export function xySlice(grid: GridData, c: number,
                        kIndex: number): { nx: number; ny: number;
                                           values: Float64Array } {
  const [nx, ny, nz] = grid.shape;
  const comp = component(grid, c);
  const values = new Float64Array(nx * ny);
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      values[i * ny + j] = comp[(i * ny + j) * nz + kIndex];
    }
  }
  return { nx, ny, values };
}
