/**
 * AOVR1 container writer/reader (little-endian).
 *
 * Layout: magic "AOVR", version u8=1, D u32, M u32, N u32, C u32, O u32;
 * C class records (name_len u16, name, split u8, D float32); O object
 * records (id_len u16, id, class_index u32, has_info u8, M*N*D float32
 * grid, optional M*N float32 info map); metadata pair count u16, then
 * key_len u16 + key + val_len u16 + val per pair.
 */

export interface ClassEntry {
  name: string;
  split: "base" | "novel";
  embedding: Float64Array;
}

export interface ObjectEntry {
  objectId: string;
  classIndex: number;
  /** m-major [M*N][D] */
  grid: Float64Array[];
  infoMap?: Float64Array;
}

export interface Container {
  dim: number;
  azimuths: number;
  elevations: number;
  classes: ClassEntry[];
  objects: ObjectEntry[];
  metadata: Record<string, string>;
}

const MAGIC = Buffer.from("AOVR", "ascii");
const NORM_TOL = 1e-5;

function checkUnit(vec: Float64Array, what: string): void {
  let norm = 0;
  for (const x of vec) {
    if (!Number.isFinite(x)) throw new Error(`${what}: non-finite value`);
    norm += x * x;
  }
  norm = Math.sqrt(norm);
  if (Math.abs(norm - 1.0) > NORM_TOL) {
    throw new Error(`${what}: norm ${norm.toFixed(6)} is not unit within ${NORM_TOL}`);
  }
}

class Writer {
  private chunks: Buffer[] = [];

  u8(v: number): void {
    const b = Buffer.alloc(1);
    b.writeUInt8(v);
    this.chunks.push(b);
  }

  u16(v: number): void {
    const b = Buffer.alloc(2);
    b.writeUInt16LE(v);
    this.chunks.push(b);
  }

  u32(v: number): void {
    const b = Buffer.alloc(4);
    b.writeUInt32LE(v);
    this.chunks.push(b);
  }

  raw(b: Buffer): void {
    this.chunks.push(b);
  }

  str(s: string): void {
    const b = Buffer.from(s, "utf-8");
    this.u16(b.length);
    this.raw(b);
  }

  f32array(vec: Float64Array): void {
    const b = Buffer.alloc(vec.length * 4);
    for (let i = 0; i < vec.length; i++) b.writeFloatLE(vec[i], i * 4);
    this.raw(b);
  }

  bytes(): Buffer {
    return Buffer.concat(this.chunks);
  }
}

export function encodeContainer(c: Container): Buffer {
  const names = new Set(c.classes.map((e) => e.name));
  if (names.size !== c.classes.length) throw new Error("class names are not unique");
  const w = new Writer();
  w.raw(MAGIC);
  w.u8(1);
  w.u32(c.dim);
  w.u32(c.azimuths);
  w.u32(c.elevations);
  w.u32(c.classes.length);
  w.u32(c.objects.length);
  for (const entry of c.classes) {
    checkUnit(entry.embedding, `class '${entry.name}' embedding`);
    if (entry.embedding.length !== c.dim) throw new Error(`class '${entry.name}': wrong dim`);
    w.str(entry.name);
    w.u8(entry.split === "base" ? 0 : 1);
    w.f32array(entry.embedding);
  }
  const views = c.azimuths * c.elevations;
  for (const obj of c.objects) {
    if (obj.classIndex < 0 || obj.classIndex >= c.classes.length) {
      throw new Error(`object '${obj.objectId}': class index out of range`);
    }
    if (obj.grid.length !== views) {
      throw new Error(`object '${obj.objectId}': expected ${views} views, got ${obj.grid.length}`);
    }
    w.str(obj.objectId);
    w.u32(obj.classIndex);
    w.u8(obj.infoMap ? 1 : 0);
    for (const [i, vec] of obj.grid.entries()) {
      checkUnit(vec, `object '${obj.objectId}' view ${i}`);
      w.f32array(vec);
    }
    if (obj.infoMap) w.f32array(obj.infoMap);
  }
  const meta = Object.entries(c.metadata);
  w.u16(meta.length);
  for (const [key, val] of meta) {
    w.str(key);
    w.str(val);
  }
  return w.bytes();
}

class Reader {
  private off = 0;

  constructor(private buf: Buffer) {}

  private need(n: number, what: string): void {
    if (this.off + n > this.buf.length) throw new Error(`truncated while reading ${what}`);
  }

  u8(what: string): number {
    this.need(1, what);
    return this.buf.readUInt8(this.off++);
  }

  u16(what: string): number {
    this.need(2, what);
    const v = this.buf.readUInt16LE(this.off);
    this.off += 2;
    return v;
  }

  u32(what: string): number {
    this.need(4, what);
    const v = this.buf.readUInt32LE(this.off);
    this.off += 4;
    return v;
  }

  str(what: string): string {
    const len = this.u16(what);
    this.need(len, what);
    const s = this.buf.subarray(this.off, this.off + len).toString("utf-8");
    this.off += len;
    return s;
  }

  f32array(n: number, what: string): Float64Array {
    this.need(n * 4, what);
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) out[i] = this.buf.readFloatLE(this.off + i * 4);
    this.off += n * 4;
    return out;
  }
}

export function decodeContainer(buf: Buffer): Container {
  if (!buf.subarray(0, 4).equals(MAGIC)) throw new Error("bad magic");
  const r = new Reader(buf.subarray(4));
  const version = r.u8("version");
  if (version !== 1) throw new Error(`unsupported version ${version}`);
  const dim = r.u32("dim");
  const azimuths = r.u32("azimuths");
  const elevations = r.u32("elevations");
  const nClasses = r.u32("class count");
  const nObjects = r.u32("object count");
  const classes: ClassEntry[] = [];
  for (let i = 0; i < nClasses; i++) {
    const name = r.str(`class ${i} name`);
    const split = r.u8(`class ${i} split`) === 0 ? "base" : "novel";
    const embedding = r.f32array(dim, `class ${i} embedding`);
    checkUnit(embedding, `class '${name}' embedding`);
    classes.push({ name, split, embedding });
  }
  const objects: ObjectEntry[] = [];
  const views = azimuths * elevations;
  for (let i = 0; i < nObjects; i++) {
    const objectId = r.str(`object ${i} id`);
    const classIndex = r.u32(`object ${i} class index`);
    const hasInfo = r.u8(`object ${i} info flag`);
    const grid: Float64Array[] = [];
    for (let v = 0; v < views; v++) {
      grid.push(r.f32array(dim, `object ${i} view ${v}`));
    }
    const infoMap = hasInfo ? r.f32array(views, `object ${i} info map`) : undefined;
    objects.push({ objectId, classIndex, grid, infoMap });
  }
  const metadata: Record<string, string> = {};
  const nMeta = r.u16("metadata count");
  for (let i = 0; i < nMeta; i++) {
    const key = r.str(`metadata ${i} key`);
    metadata[key] = r.str(`metadata ${i} value`);
  }
  return { dim, azimuths, elevations, classes, objects, metadata };
}
