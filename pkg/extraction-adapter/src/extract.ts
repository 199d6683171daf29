/**
 * APK to feature file.
 *
 * Manifest-derived categories (permission, hardware, component,
 * intent) come from the binary AndroidManifest.xml; code-derived
 * categories (restricted_api, api_call, used_permission, url) come
 * from the method-reference and string tables of every classes*.dex.
 * A broken part degrades to partial extraction with a warning; a file
 * that is not an APK archive at all is an error.
 */

import { readFileSync, readdirSync, writeFileSync, mkdirSync, statSync } from "node:fs";
import { basename, join } from "node:path";
import { unzipSync } from "fflate";

import { parseAxml, walkElements, type XmlElement } from "./axml.js";
import { parseDex, type MethodRef } from "./dex.js";
import { RESTRICTED_APIS, SUSPICIOUS_APIS } from "./data/api-lists.js";
import {
  countByCategory,
  feature,
  serializeFeatureFile,
  type Category,
  type Feature,
  type Label,
} from "./features.js";

export const TOOLKIT_VERSION = "extraction-adapter/0.1.0";

const MANIFEST_ENTRY = "AndroidManifest.xml";
const COMPONENT_ELEMENTS = new Set(["activity", "service", "receiver", "provider"]);
const INTENT_ELEMENTS = new Set(["action", "category"]);
const URL_PATTERN = /^https?:\/\/\S+$/;

export class ExtractionError extends Error {}

export interface ExtractionRecord {
  readonly apkPath: string;
  readonly featureFilePath: string;
  readonly counts: Record<Category, number>;
  readonly warnings: string[];
  readonly toolkitVersion: string;
}

function manifestFeatures(root: XmlElement, out: Set<string>, requested: Set<string>): void {
  for (const element of walkElements(root)) {
    const name = element.attributes["name"];
    if (!name) continue;
    if (element.name === "uses-permission") {
      out.add(`permission::${name}`);
      requested.add(name);
    } else if (element.name === "uses-feature") {
      out.add(`hardware::${name}`);
    } else if (COMPONENT_ELEMENTS.has(element.name)) {
      out.add(`component::${name}`);
    } else if (INTENT_ELEMENTS.has(element.name)) {
      out.add(`intent::${name}`);
    }
  }
}

function codeFeatures(
  methods: MethodRef[],
  strings: string[],
  requested: Set<string>,
  out: Set<string>,
): void {
  const restricted = new Map(
    RESTRICTED_APIS.map((a) => [`${a.className}#${a.methodName}`, a.permission]),
  );
  const suspicious = new Set(
    SUSPICIOUS_APIS.map((a) => `${a.className}#${a.methodName}`),
  );
  for (const m of methods) {
    const key = `${m.className}#${m.methodName}`;
    const call = `${m.className}.${m.methodName}()`;
    const permission = restricted.get(key);
    if (permission !== undefined) {
      out.add(`restricted_api::${call}`);
      // a gated call only counts as permission usage if the manifest
      // actually requests that permission
      if (requested.has(permission)) {
        out.add(`used_permission::${permission}`);
      }
    }
    if (suspicious.has(key)) {
      out.add(`api_call::${call}`);
    }
  }
  for (const s of strings) {
    if (URL_PATTERN.test(s)) {
      out.add(`url::${s}`);
    }
  }
}

function toFeatures(lines: Set<string>): Feature[] {
  return [...lines].map((line) => {
    const at = line.indexOf("::");
    return feature(line.slice(0, at) as Category, line.slice(at + 2));
  });
}

export interface ExtractedFeatures {
  features: Feature[];
  warnings: string[];
}

/** Pull every extractable feature out of an APK's bytes. */
export function extractFeatures(apkBytes: Uint8Array): ExtractedFeatures {
  let entries: Record<string, Uint8Array>;
  try {
    entries = unzipSync(apkBytes);
  } catch (err) {
    throw new ExtractionError(`not a readable archive: ${(err as Error).message}`);
  }

  const warnings: string[] = [];
  const lines = new Set<string>();
  const requested = new Set<string>();

  const manifestBytes = entries[MANIFEST_ENTRY];
  if (manifestBytes === undefined) {
    warnings.push("archive has no AndroidManifest.xml");
  } else {
    try {
      manifestFeatures(parseAxml(manifestBytes), lines, requested);
    } catch (err) {
      warnings.push(`manifest unparseable: ${(err as Error).message}`);
    }
  }

  const dexNames = Object.keys(entries)
    .filter((name) => /^classes\d*\.dex$/.test(name))
    .sort();
  if (dexNames.length === 0) {
    warnings.push("archive has no dex files");
  }
  const methods: MethodRef[] = [];
  const strings: string[] = [];
  for (const name of dexNames) {
    try {
      const dex = parseDex(entries[name]!);
      methods.push(...dex.methods);
      strings.push(...dex.strings);
    } catch (err) {
      warnings.push(`${name} unparseable: ${(err as Error).message}`);
    }
  }
  codeFeatures(methods, strings, requested, lines);

  if (manifestBytes === undefined && dexNames.length === 0) {
    throw new ExtractionError("archive contains neither a manifest nor dex files");
  }
  return { features: toFeatures(lines), warnings };
}

function featureFileName(apkPath: string): string {
  return basename(apkPath).replace(/\.apk$/i, "") + ".features";
}

/** Extract one APK and write its feature file under `outDir`. */
export function extractApk(apkPath: string, outDir: string, label: Label): ExtractionRecord {
  let bytes: Uint8Array;
  try {
    bytes = readFileSync(apkPath);
  } catch (err) {
    throw new ExtractionError(`cannot read ${apkPath}: ${(err as Error).message}`);
  }
  const { features, warnings } = extractFeatures(bytes);
  mkdirSync(outDir, { recursive: true });
  const featureFilePath = join(outDir, featureFileName(apkPath));
  writeFileSync(featureFilePath, serializeFeatureFile(features, label), "utf-8");
  return {
    apkPath,
    featureFilePath,
    counts: countByCategory(features),
    warnings,
    toolkitVersion: TOOLKIT_VERSION,
  };
}

/**
 * Extract every *.apk under a directory (sorted, so output order is
 * stable) and write a manifest.txt naming the emitted files, which
 * makes `outDir` directly loadable as a dataset directory.
 */
export function extractDirectory(
  apkDir: string,
  outDir: string,
  label: Label,
): ExtractionRecord[] {
  const names = readdirSync(apkDir)
    .filter((n) => n.toLowerCase().endsWith(".apk"))
    .sort();
  if (names.length === 0) {
    throw new ExtractionError(`no .apk files under ${apkDir}`);
  }
  const records = names.map((n) => extractApk(join(apkDir, n), outDir, label));
  const manifest = records.map((r) => basename(r.featureFilePath)).join("\n") + "\n";
  writeFileSync(join(outDir, "manifest.txt"), manifest, "utf-8");
  return records;
}

/** Dispatch on whether `target` is a single APK or a directory of them. */
export function runExtraction(
  target: string,
  outDir: string,
  label: Label,
): ExtractionRecord[] {
  let isDir: boolean;
  try {
    isDir = statSync(target).isDirectory();
  } catch (err) {
    throw new ExtractionError(`cannot access ${target}: ${(err as Error).message}`);
  }
  return isDir ? extractDirectory(target, outDir, label) : [extractApk(target, outDir, label)];
}
