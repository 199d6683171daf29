/**
 * DEX bytecode containers, read just deeply enough for feature work:
 * the string table (URL scanning) and the method reference table
 * joined against type descriptors (API call matching).  The writer
 * emits a minimal but checksummed file for fixtures; no code items.
 */

import { createHash } from "node:crypto";

const HEADER_SIZE = 0x70;
const ENDIAN_TAG = 0x12345678;
const MAGIC = [0x64, 0x65, 0x78, 0x0a, 0x30, 0x33, 0x35, 0x00]; // dex\n035\0

export interface MethodRef {
  /** dotted class name, e.g. android.telephony.SmsManager */
  readonly className: string;
  readonly methodName: string;
}

export interface DexContents {
  readonly strings: string[];
  readonly methods: MethodRef[];
}

export class DexFormatError extends Error {}

// ---------------------------------------------------------------- reader

function readUleb128(data: Uint8Array, offset: number): [number, number] {
  let result = 0;
  let shift = 0;
  let at = offset;
  for (;;) {
    const byte = data[at];
    if (byte === undefined) throw new DexFormatError("truncated uleb128");
    at += 1;
    result |= (byte & 0x7f) << shift;
    if ((byte & 0x80) === 0) break;
    shift += 7;
    if (shift > 28) throw new DexFormatError("uleb128 too long");
  }
  return [result >>> 0, at];
}

function decodeMutf8(bytes: Uint8Array): string {
  // MUTF-8 differs from UTF-8 in encoding U+0000 as C0 80 and using
  // surrogate pairs; both decode acceptably for identifier-like text.
  const plain: number[] = [];
  for (let i = 0; i < bytes.length; i++) {
    if (bytes[i] === 0xc0 && bytes[i + 1] === 0x80) {
      plain.push(0);
      i += 1;
    } else {
      plain.push(bytes[i]!);
    }
  }
  return new TextDecoder("utf-8").decode(Uint8Array.from(plain));
}

function descriptorToDotted(descriptor: string): string | null {
  if (!descriptor.startsWith("L") || !descriptor.endsWith(";")) {
    return null; // primitive or array type
  }
  return descriptor.slice(1, -1).replaceAll("/", ".");
}

/** Parse the string and method tables out of a DEX file. */
export function parseDex(data: Uint8Array): DexContents {
  if (data.length < HEADER_SIZE) {
    throw new DexFormatError("file shorter than a dex header");
  }
  for (let i = 0; i < 4; i++) {
    if (data[i] !== MAGIC[i]) {
      throw new DexFormatError("bad dex magic");
    }
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const u32 = (at: number) => view.getUint32(at, true);
  if (u32(0x28) !== ENDIAN_TAG) {
    throw new DexFormatError("unsupported byte order");
  }

  const stringCount = u32(0x38);
  const stringIdsOff = u32(0x3c);
  const typeCount = u32(0x40);
  const typeIdsOff = u32(0x44);
  const methodCount = u32(0x58);
  const methodIdsOff = u32(0x5c);

  const strings: string[] = [];
  for (let i = 0; i < stringCount; i++) {
    const dataOff = u32(stringIdsOff + 4 * i);
    if (dataOff >= data.length) {
      throw new DexFormatError(`string ${i} points past the file`);
    }
    const [, start] = readUleb128(data, dataOff);
    let end = start;
    while (end < data.length && data[end] !== 0) end++;
    strings.push(decodeMutf8(data.subarray(start, end)));
  }

  const typeNames: (string | null)[] = [];
  for (let i = 0; i < typeCount; i++) {
    const descriptorIdx = u32(typeIdsOff + 4 * i);
    const descriptor = strings[descriptorIdx];
    if (descriptor === undefined) {
      throw new DexFormatError(`type ${i} names a missing string`);
    }
    typeNames.push(descriptorToDotted(descriptor));
  }

  const methods: MethodRef[] = [];
  for (let i = 0; i < methodCount; i++) {
    const at = methodIdsOff + 8 * i;
    const classIdx = view.getUint16(at, true);
    const nameIdx = u32(at + 4);
    const className = typeNames[classIdx];
    const methodName = strings[nameIdx];
    if (methodName === undefined) {
      throw new DexFormatError(`method ${i} names a missing string`);
    }
    if (className != null) {
      methods.push({ className, methodName });
    }
  }

  return { strings, methods };
}

// ---------------------------------------------------------------- writer

function encodeUleb128(value: number): number[] {
  const out: number[] = [];
  let v = value >>> 0;
  do {
    let byte = v & 0x7f;
    v >>>= 7;
    if (v !== 0) byte |= 0x80;
    out.push(byte);
  } while (v !== 0);
  return out;
}

function adler32(data: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (const byte of data) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

/**
 * Build a DEX whose string table holds `strings` plus everything the
 * method references need.  Classes become type entries; each (class,
 * method) pair becomes a method_id row with a shared ()V prototype.
 */
export function buildDex(strings: string[], methods: MethodRef[]): Uint8Array {
  const stringSet = new Set<string>(strings);
  stringSet.add("V");
  const classDescriptors = new Map<string, string>();
  for (const m of methods) {
    const descriptor = `L${m.className.replaceAll(".", "/")};`;
    classDescriptors.set(m.className, descriptor);
    stringSet.add(descriptor);
    stringSet.add(m.methodName);
  }
  const allStrings = [...stringSet].sort(); // dex mandates sorted string ids
  const stringIndex = new Map(allStrings.map((s, i) => [s, i]));

  // type ids sort by descriptor string index, method ids by (class, name)
  const typeDescriptors = ["V", ...classDescriptors.values()].sort(
    (a, b) => stringIndex.get(a)! - stringIndex.get(b)!,
  );
  const typeIndex = new Map(typeDescriptors.map((d, i) => [d, i]));
  const orderedMethods = [...methods].sort((a, b) => {
    const classA = typeIndex.get(classDescriptors.get(a.className)!)!;
    const classB = typeIndex.get(classDescriptors.get(b.className)!)!;
    if (classA !== classB) return classA - classB;
    return stringIndex.get(a.methodName)! - stringIndex.get(b.methodName)!;
  });

  const encoder = new TextEncoder();
  const stringData: number[][] = allStrings.map((s) => {
    const bytes = [...encoder.encode(s)];
    return [...encodeUleb128(s.length), ...bytes, 0];
  });

  const stringIdsOff = HEADER_SIZE;
  const typeIdsOff = stringIdsOff + 4 * allStrings.length;
  const protoIdsOff = typeIdsOff + 4 * typeDescriptors.length;
  const methodIdsOff = protoIdsOff + 12; // single ()V prototype
  const dataOff = methodIdsOff + 8 * methods.length;

  const stringOffsets: number[] = [];
  let cursor = dataOff;
  for (const enc of stringData) {
    stringOffsets.push(cursor);
    cursor += enc.length;
  }
  const mapOff = cursor + ((4 - (cursor % 4)) % 4);
  const mapEntries: [number, number, number][] = [
    [0x0000, 1, 0], // header
    [0x0001, allStrings.length, stringIdsOff],
    [0x0002, typeDescriptors.length, typeIdsOff],
    [0x0003, 1, protoIdsOff],
    [0x0005, methods.length, methodIdsOff],
    [0x1000, 1, mapOff],
  ];
  const fileSize = mapOff + 4 + 12 * mapEntries.length;

  const out = new Uint8Array(fileSize);
  const view = new DataView(out.buffer);
  const u32 = (at: number, v: number) => view.setUint32(at, v, true);
  const u16 = (at: number, v: number) => view.setUint16(at, v, true);

  out.set(MAGIC, 0);
  u32(0x20, fileSize);
  u32(0x24, HEADER_SIZE);
  u32(0x28, ENDIAN_TAG);
  u32(0x34, mapOff);
  u32(0x38, allStrings.length);
  u32(0x3c, stringIdsOff);
  u32(0x40, typeDescriptors.length);
  u32(0x44, typeIdsOff);
  u32(0x48, 1); // proto ids
  u32(0x4c, protoIdsOff);
  u32(0x58, methods.length);
  u32(0x5c, methodIdsOff);
  u32(0x60, 0); // class defs
  u32(0x64, 0);
  u32(0x68, fileSize - dataOff);
  u32(0x6c, dataOff);

  stringOffsets.forEach((off, i) => u32(stringIdsOff + 4 * i, off));
  typeDescriptors.forEach((d, i) => u32(typeIdsOff + 4 * i, stringIndex.get(d)!));

  const voidType = typeIndex.get("V")!;
  u32(protoIdsOff, stringIndex.get("V")!); // shorty
  u32(protoIdsOff + 4, voidType); // return type
  u32(protoIdsOff + 8, 0); // no parameters

  orderedMethods.forEach((m, i) => {
    const at = methodIdsOff + 8 * i;
    u16(at, typeIndex.get(classDescriptors.get(m.className)!)!);
    u16(at + 2, 0); // proto index
    u32(at + 4, stringIndex.get(m.methodName)!);
  });

  let at = dataOff;
  for (const enc of stringData) {
    out.set(enc, at);
    at += enc.length;
  }

  u32(mapOff, mapEntries.length);
  mapEntries.forEach(([type, count, offset], i) => {
    const entryAt = mapOff + 4 + 12 * i;
    u16(entryAt, type);
    u32(entryAt + 4, count);
    u32(entryAt + 8, offset);
  });

  const signature = createHash("sha1").update(out.subarray(32)).digest();
  out.set(signature, 12);
  u32(8, adler32(out.subarray(12)));
  return out;
}
