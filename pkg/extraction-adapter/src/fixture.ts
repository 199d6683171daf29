/**
 * A tiny APK built from scratch for tests and samples: a binary
 * manifest with known permissions, features, components, and intent
 * filters, plus one dex whose method table references permission-gated
 * and merely suspicious APIs.  Every extraction category is populated,
 * so a round-trip exercises the full mapping.
 */

import { zipSync } from "fflate";

import { buildAxml, type XmlNode } from "./axml.js";
import { buildDex, type MethodRef } from "./dex.js";

export const FIXTURE_PACKAGE = "com.fixture.relay";

export const FIXTURE_MANIFEST_PERMISSIONS = [
  "android.permission.SEND_SMS",
  "android.permission.INTERNET",
  "android.permission.READ_PHONE_STATE",
];

export const FIXTURE_URL = "https://relay.fixture.example/gate";

const MANIFEST: XmlNode = {
  name: "manifest",
  attributes: { package: FIXTURE_PACKAGE, versionName: "1.0" },
  children: [
    ...FIXTURE_MANIFEST_PERMISSIONS.map((p) => ({
      name: "uses-permission",
      attributes: { name: p },
    })),
    { name: "uses-feature", attributes: { name: "android.hardware.telephony" } },
    {
      name: "application",
      attributes: { label: "Relay" },
      children: [
        {
          name: "activity",
          attributes: { name: `${FIXTURE_PACKAGE}.MainActivity` },
          children: [
            {
              name: "intent-filter",
              children: [
                { name: "action", attributes: { name: "android.intent.action.MAIN" } },
                { name: "category", attributes: { name: "android.intent.category.LAUNCHER" } },
              ],
            },
          ],
        },
        {
          name: "receiver",
          attributes: { name: `${FIXTURE_PACKAGE}.SmsReceiver` },
          children: [
            {
              name: "intent-filter",
              children: [
                { name: "action", attributes: { name: "android.provider.Telephony.SMS_RECEIVED" } },
              ],
            },
          ],
        },
      ],
    },
  ],
};

const METHODS: MethodRef[] = [
  { className: "android.telephony.SmsManager", methodName: "sendTextMessage" },
  { className: "android.telephony.TelephonyManager", methodName: "getDeviceId" },
  // gated behind a permission the manifest does not request
  { className: "android.location.LocationManager", methodName: "getLastKnownLocation" },
  { className: "java.lang.Runtime", methodName: "exec" },
  { className: `${FIXTURE_PACKAGE}.Helper`, methodName: "process" },
];

const STRINGS = [
  FIXTURE_URL,
  "ftp://ignored.example/payload",
  "relay configuration loaded",
];

export function buildFixtureApk(): Uint8Array {
  return zipSync(
    {
      "AndroidManifest.xml": buildAxml(MANIFEST),
      "classes.dex": buildDex(STRINGS, METHODS),
      "res/raw/notes.txt": new TextEncoder().encode("fixture asset\n"),
    },
    { level: 6, mtime: new Date("2020-01-01T00:00:00Z") },
  );
}
