import { describe, expect, it } from "vitest";

import { AxmlFormatError, buildAxml, parseAxml, walkElements, type XmlNode } from "../src/axml.js";

const DOCUMENT: XmlNode = {
  name: "manifest",
  attributes: { package: "com.example.app" },
  children: [
    { name: "uses-permission", attributes: { name: "android.permission.CAMERA" } },
    {
      name: "application",
      children: [
        {
          name: "activity",
          attributes: { name: "com.example.app.Main", exported: "true" },
          children: [
            {
              name: "intent-filter",
              children: [{ name: "action", attributes: { name: "android.intent.action.MAIN" } }],
            },
          ],
        },
      ],
    },
  ],
};

describe("binary xml round-trip", () => {
  it("preserves the element tree and attributes", () => {
    const root = parseAxml(buildAxml(DOCUMENT));
    expect(root.name).toBe("manifest");
    expect(root.attributes["package"]).toBe("com.example.app");
    expect(root.children.map((c) => c.name)).toEqual(["uses-permission", "application"]);
    const activity = root.children[1]!.children[0]!;
    expect(activity.name).toBe("activity");
    expect(activity.attributes["name"]).toBe("com.example.app.Main");
    const action = activity.children[0]!.children[0]!;
    expect(action.attributes["name"]).toBe("android.intent.action.MAIN");
  });

  it("walks every element exactly once", () => {
    const root = parseAxml(buildAxml(DOCUMENT));
    const names = [...walkElements(root)].map((e) => e.name);
    expect(names).toEqual([
      "manifest",
      "uses-permission",
      "application",
      "activity",
      "intent-filter",
      "action",
    ]);
  });

  it("is byte-stable", () => {
    expect(buildAxml(DOCUMENT)).toEqual(buildAxml(DOCUMENT));
  });
});

describe("reader hardening", () => {
  it("rejects a non-xml buffer", () => {
    expect(() => parseAxml(new TextEncoder().encode("<manifest/>"))).toThrow(AxmlFormatError);
  });

  it("rejects a buffer shorter than one header", () => {
    expect(() => parseAxml(new Uint8Array([3, 0]))).toThrow(AxmlFormatError);
  });

  it("rejects a document whose declared size overruns the buffer", () => {
    const good = buildAxml(DOCUMENT);
    expect(() => parseAxml(good.subarray(0, good.length - 16))).toThrow(AxmlFormatError);
  });

  it("reads utf-8 string pools", () => {
    // rewrite the pool of a minimal document by hand: one string "m",
    // used as the single element's name
    const utf8Pool = [
      0x01, 0x00, 0x1c, 0x00, 0x28, 0x00, 0x00, 0x00, // pool header: type, headerSize, size
      0x01, 0x00, 0x00, 0x00, // string count
      0x00, 0x00, 0x00, 0x00, // style count
      0x00, 0x01, 0x00, 0x00, // flags: utf-8
      0x20, 0x00, 0x00, 0x00, // strings start
      0x00, 0x00, 0x00, 0x00, // styles start
      0x00, 0x00, 0x00, 0x00, // offset[0]
      0x01, 0x01, 0x6d, 0x00, // "m": utf16 len, byte len, bytes, terminator
      0x00, 0x00, 0x00, 0x00, // padding to declared size
    ];
    const startElement = [
      0x02, 0x01, 0x10, 0x00, 0x24, 0x00, 0x00, 0x00,
      0x00, 0x00, 0x00, 0x00, // line
      0xff, 0xff, 0xff, 0xff, // comment
      0xff, 0xff, 0xff, 0xff, // namespace
      0x00, 0x00, 0x00, 0x00, // name -> "m"
      0x14, 0x00, 0x14, 0x00, // attribute start/size
      0x00, 0x00, 0x00, 0x00, // count, id index
      0x00, 0x00, 0x00, 0x00, // class, style index
    ];
    const body = [...utf8Pool, ...startElement];
    const doc = new Uint8Array(8 + body.length);
    const view = new DataView(doc.buffer);
    view.setUint16(0, 0x0003, true);
    view.setUint16(2, 8, true);
    view.setUint32(4, doc.length, true);
    doc.set(body, 8);
    expect(parseAxml(doc).name).toBe("m");
  });
});
