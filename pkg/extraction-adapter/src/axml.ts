/**
 * Binary Android XML (AXML), the encoded form of AndroidManifest.xml.
 *
 * The reader walks the chunk stream and yields start elements with
 * their string-typed attributes, which is all manifest feature
 * extraction needs; unknown chunk types are skipped by declared size.
 * The writer produces a small, well-formed document for fixtures.
 * String pools are supported in both UTF-16 (written here) and UTF-8
 * (common in tool-built manifests).
 */

export const ANDROID_NS = "http://schemas.android.com/apk/res/android";

const CHUNK_XML = 0x0003;
const CHUNK_STRING_POOL = 0x0001;
const CHUNK_START_NAMESPACE = 0x0100;
const CHUNK_END_NAMESPACE = 0x0101;
const CHUNK_START_ELEMENT = 0x0102;
const CHUNK_END_ELEMENT = 0x0103;

const UTF8_FLAG = 0x0100;
const NO_ENTRY = 0xffffffff;
const TYPE_STRING = 0x03;

export interface XmlElement {
  name: string;
  /** attribute name -> string value; namespace prefixes are dropped */
  attributes: Record<string, string>;
  children: XmlElement[];
}

export class AxmlFormatError extends Error {}

// ---------------------------------------------------------------- reader

class Cursor {
  constructor(readonly view: DataView, public offset = 0) {}

  u8(): number {
    const v = this.view.getUint8(this.offset);
    this.offset += 1;
    return v;
  }

  u16(): number {
    const v = this.view.getUint16(this.offset, true);
    this.offset += 2;
    return v;
  }

  u32(): number {
    const v = this.view.getUint32(this.offset, true);
    this.offset += 4;
    return v;
  }
}

function readStringPool(view: DataView, chunkStart: number): string[] {
  const c = new Cursor(view, chunkStart);
  c.u16(); // type, already checked
  const headerSize = c.u16();
  c.u32(); // chunk size
  const stringCount = c.u32();
  c.u32(); // style count
  const flags = c.u32();
  const stringsStart = c.u32();
  c.u32(); // styles start
  const utf8 = (flags & UTF8_FLAG) !== 0;

  const offsets: number[] = [];
  c.offset = chunkStart + headerSize;
  for (let i = 0; i < stringCount; i++) {
    offsets.push(c.u32());
  }

  const strings: string[] = [];
  for (const rel of offsets) {
    const s = new Cursor(view, chunkStart + stringsStart + rel);
    if (utf8) {
      // two lengths (utf16 units, then bytes), each 1 or 2 bytes
      let n = s.u8();
      if (n & 0x80) s.u8();
      let byteLen = s.u8();
      if (byteLen & 0x80) byteLen = ((byteLen & 0x7f) << 8) | s.u8();
      const bytes = new Uint8Array(view.buffer, view.byteOffset + s.offset, byteLen);
      strings.push(new TextDecoder("utf-8").decode(bytes));
    } else {
      let chars = s.u16();
      if (chars & 0x8000) chars = ((chars & 0x7fff) << 16) | s.u16();
      let out = "";
      for (let i = 0; i < chars; i++) {
        out += String.fromCharCode(s.u16());
      }
      strings.push(out);
    }
  }
  return strings;
}

/** Parse a binary manifest into a single rooted element tree. */
export function parseAxml(data: Uint8Array): XmlElement {
  if (data.byteLength < 8) {
    throw new AxmlFormatError("document too short for a chunk header");
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const head = new Cursor(view);
  if (head.u16() !== CHUNK_XML) {
    throw new AxmlFormatError("not a binary XML document");
  }
  head.u16();
  const totalSize = head.u32();
  if (totalSize > data.byteLength) {
    throw new AxmlFormatError("declared size exceeds the document");
  }

  let pool: string[] | null = null;
  const lookup = (idx: number): string => {
    if (pool === null) throw new AxmlFormatError("element before string pool");
    const s = pool[idx];
    if (s === undefined) throw new AxmlFormatError(`string index ${idx} out of range`);
    return s;
  };

  const root: XmlElement = { name: "", attributes: {}, children: [] };
  const stack: XmlElement[] = [root];
  let offset = 8;
  while (offset + 8 <= totalSize) {
    const c = new Cursor(view, offset);
    const type = c.u16();
    const headerSize = c.u16();
    const size = c.u32();
    if (size < 8 || offset + size > totalSize) {
      throw new AxmlFormatError(`malformed chunk at offset ${offset}`);
    }
    if (type === CHUNK_STRING_POOL) {
      pool = readStringPool(view, offset);
    } else if (type === CHUNK_START_ELEMENT) {
      const ext = new Cursor(view, offset + headerSize);
      ext.u32(); // element namespace
      const name = lookup(ext.u32());
      const extStart = offset + headerSize;
      const attributeStart = ext.u16();
      const attributeSize = ext.u16();
      const attributeCount = ext.u16();
      const element: XmlElement = { name, attributes: {}, children: [] };
      for (let i = 0; i < attributeCount; i++) {
        const a = new Cursor(view, extStart + attributeStart + i * attributeSize);
        a.u32(); // attribute namespace
        const attrName = lookup(a.u32());
        const raw = a.u32();
        a.u16(); // typed value size
        a.u8(); // reserved
        const dataType = a.u8();
        const payload = a.u32();
        if (dataType === TYPE_STRING) {
          element.attributes[attrName] = lookup(raw !== NO_ENTRY ? raw : payload);
        } else {
          element.attributes[attrName] = String(payload);
        }
      }
      stack[stack.length - 1]!.children.push(element);
      stack.push(element);
    } else if (type === CHUNK_END_ELEMENT) {
      if (stack.length > 1) stack.pop();
    }
    // namespace and unknown chunks are skipped by size
    offset += size;
  }

  const top = root.children[0];
  if (!top) {
    throw new AxmlFormatError("document contains no elements");
  }
  return top;
}

export function* walkElements(root: XmlElement): Generator<XmlElement> {
  yield root;
  for (const child of root.children) {
    yield* walkElements(child);
  }
}

// ---------------------------------------------------------------- writer

export interface XmlNode {
  name: string;
  attributes?: Record<string, string>;
  children?: XmlNode[];
}

class PoolBuilder {
  private indices = new Map<string, number>();

  intern(s: string): number {
    let idx = this.indices.get(s);
    if (idx === undefined) {
      idx = this.indices.size;
      this.indices.set(s, idx);
    }
    return idx;
  }

  strings(): string[] {
    return [...this.indices.keys()];
  }
}

class ByteWriter {
  private parts: number[] = [];

  u8(v: number): void {
    this.parts.push(v & 0xff);
  }

  u16(v: number): void {
    this.u8(v);
    this.u8(v >>> 8);
  }

  u32(v: number): void {
    this.u16(v);
    this.u16(v >>> 16);
  }

  bytes(): Uint8Array {
    return Uint8Array.from(this.parts);
  }

  get length(): number {
    return this.parts.length;
  }
}

function encodePool(strings: string[]): Uint8Array {
  const body = new ByteWriter();
  const offsets: number[] = [];
  for (const s of strings) {
    offsets.push(body.length);
    body.u16(s.length);
    for (const ch of s) {
      body.u16(ch.charCodeAt(0));
    }
    body.u16(0);
  }
  while (body.length % 4 !== 0) {
    body.u8(0);
  }
  const headerSize = 28;
  const offsetsSize = 4 * strings.length;
  const w = new ByteWriter();
  w.u16(CHUNK_STRING_POOL);
  w.u16(headerSize);
  w.u32(headerSize + offsetsSize + body.length);
  w.u32(strings.length);
  w.u32(0); // no styles
  w.u32(0); // UTF-16
  w.u32(headerSize + offsetsSize);
  w.u32(0);
  for (const off of offsets) {
    w.u32(off);
  }
  const head = w.bytes();
  const out = new Uint8Array(head.length + body.length);
  out.set(head, 0);
  out.set(body.bytes(), head.length);
  return out;
}

function encodeElement(node: XmlNode, pool: PoolBuilder, out: Uint8Array[]): void {
  const attrs = Object.entries(node.attributes ?? {});
  const nameIdx = pool.intern(node.name);
  const attrEntries = attrs.map(([k, v]) => ({
    name: pool.intern(k),
    value: pool.intern(v),
  }));

  const start = new ByteWriter();
  start.u16(CHUNK_START_ELEMENT);
  start.u16(16);
  start.u32(16 + 20 + attrs.length * 20);
  start.u32(0); // line number
  start.u32(NO_ENTRY); // comment
  start.u32(NO_ENTRY); // element namespace
  start.u32(nameIdx);
  start.u16(20); // attribute start
  start.u16(20); // attribute size
  start.u16(attrs.length);
  start.u16(0); // id attribute
  start.u16(0); // class attribute
  start.u16(0); // style attribute
  for (const a of attrEntries) {
    start.u32(NO_ENTRY); // attribute namespace: prefixes dropped on read anyway
    start.u32(a.name);
    start.u32(a.value);
    start.u16(8);
    start.u8(0);
    start.u8(TYPE_STRING);
    start.u32(a.value);
  }
  out.push(start.bytes());

  for (const child of node.children ?? []) {
    encodeElement(child, pool, out);
  }

  const end = new ByteWriter();
  end.u16(CHUNK_END_ELEMENT);
  end.u16(16);
  end.u32(24);
  end.u32(0);
  end.u32(NO_ENTRY);
  end.u32(NO_ENTRY);
  end.u32(nameIdx);
  out.push(end.bytes());
}

/** Encode an element tree as a binary XML document. */
export function buildAxml(rootNode: XmlNode): Uint8Array {
  const pool = new PoolBuilder();
  const elementChunks: Uint8Array[] = [];
  encodeElement(rootNode, pool, elementChunks);
  const poolChunk = encodePool(pool.strings());

  const bodySize = poolChunk.length + elementChunks.reduce((n, c) => n + c.length, 0);
  const header = new ByteWriter();
  header.u16(CHUNK_XML);
  header.u16(8);
  header.u32(8 + bodySize);

  const parts = [header.bytes(), poolChunk, ...elementChunks];
  const out = new Uint8Array(8 + bodySize);
  let at = 0;
  for (const part of parts) {
    out.set(part, at);
    at += part.length;
  }
  return out;
}
