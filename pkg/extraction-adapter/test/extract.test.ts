import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { unzipSync, zipSync } from "fflate";
import { describe, expect, it } from "vitest";

import { CATEGORIES } from "../src/features.js";
import {
  ExtractionError,
  extractApk,
  extractDirectory,
  extractFeatures,
} from "../src/extract.js";
import {
  FIXTURE_MANIFEST_PERMISSIONS,
  FIXTURE_URL,
  buildFixtureApk,
} from "../src/fixture.js";

const FIXTURE_APK = fileURLToPath(new URL("./fixtures/tiny.apk", import.meta.url));

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "adapter-test-"));
}

describe("fixture apk round-trip", () => {
  it("committed fixture matches the builder output", () => {
    expect(new Uint8Array(readFileSync(FIXTURE_APK))).toEqual(buildFixtureApk());
  });

  it("emits every known manifest permission", () => {
    const record = extractApk(FIXTURE_APK, tmp(), "malicious");
    const emitted = readFileSync(record.featureFilePath, "utf-8");
    for (const p of FIXTURE_MANIFEST_PERMISSIONS) {
      expect(emitted).toContain(`permission::${p}\n`);
    }
    expect(emitted.startsWith("label: malicious\n")).toBe(true);
  });

  it("populates all eight categories with the expected counts", () => {
    const record = extractApk(FIXTURE_APK, tmp(), "benign");
    expect(Object.keys(record.counts).sort()).toEqual([...CATEGORIES].sort());
    expect(record.counts).toEqual({
      api_call: 3,
      component: 2,
      hardware: 1,
      intent: 3,
      permission: 3,
      restricted_api: 3,
      url: 1,
      used_permission: 2,
    });
    expect(record.warnings).toEqual([]);
  });

  it("counts permission usage only when the manifest requests it", () => {
    const { features } = extractFeatures(buildFixtureApk());
    const lines = new Set(features.map((f) => `${f.category}::${f.value}`));
    // the location call is referenced, so the restricted api appears...
    expect(lines).toContain(
      "restricted_api::android.location.LocationManager.getLastKnownLocation()",
    );
    // ...but ACCESS_FINE_LOCATION is not requested, so it is not "used"
    expect(lines).not.toContain("used_permission::android.permission.ACCESS_FINE_LOCATION");
    expect(lines).toContain("used_permission::android.permission.SEND_SMS");
  });

  it("collects http(s) urls and ignores other strings", () => {
    const { features } = extractFeatures(buildFixtureApk());
    const urls = features.filter((f) => f.category === "url").map((f) => f.value);
    expect(urls).toEqual([FIXTURE_URL]);
  });

  it("extraction is deterministic", () => {
    const a = extractApk(FIXTURE_APK, tmp(), "malicious");
    const b = extractApk(FIXTURE_APK, tmp(), "malicious");
    expect(readFileSync(a.featureFilePath, "utf-8")).toBe(
      readFileSync(b.featureFilePath, "utf-8"),
    );
  });
});

describe("error paths", () => {
  it("rejects a non-archive file", () => {
    const path = join(tmp(), "not-an.apk");
    writeFileSync(path, "just some text");
    expect(() => extractApk(path, tmp(), "benign")).toThrow(ExtractionError);
  });

  it("rejects a missing file", () => {
    expect(() => extractApk("/nonexistent/x.apk", tmp(), "benign")).toThrow(ExtractionError);
  });

  it("degrades to warnings when the manifest is corrupt", () => {
    const broken = zipSync({
      "AndroidManifest.xml": new TextEncoder().encode("garbage"),
      "classes.dex": readFixtureDex(),
    });
    const { features, warnings } = extractFeatures(broken);
    expect(warnings.some((w) => w.includes("manifest"))).toBe(true);
    // code-derived categories still extract
    expect(features.some((f) => f.category === "api_call")).toBe(true);
    expect(features.some((f) => f.category === "permission")).toBe(false);
  });
});

function readFixtureDex(): Uint8Array {
  return unzipSync(new Uint8Array(readFileSync(FIXTURE_APK)))["classes.dex"]!;
}

describe("directory extraction", () => {
  it("writes one feature file per apk plus a manifest", () => {
    const apkDir = tmp();
    writeFileSync(join(apkDir, "b.apk"), buildFixtureApk());
    writeFileSync(join(apkDir, "a.apk"), buildFixtureApk());
    const outDir = tmp();
    const records = extractDirectory(apkDir, outDir, "malicious");
    expect(records).toHaveLength(2);
    expect(readFileSync(join(outDir, "manifest.txt"), "utf-8")).toBe(
      "a.features\nb.features\n",
    );
  });

  it("rejects a directory without apks", () => {
    expect(() => extractDirectory(tmp(), tmp(), "benign")).toThrow(ExtractionError);
  });
});
