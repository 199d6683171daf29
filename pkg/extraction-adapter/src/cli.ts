#!/usr/bin/env node
/** Command-line surface: `extract` and `embed-serve`. */

import { pathToFileURL } from "node:url";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { ExtractionError, runExtraction } from "./extract.js";
import { HashedNgramEmbedder } from "./embedding.js";
import { serveStdio, serveTcp } from "./service.js";
import type { Label } from "./features.js";

export async function main(argv: string[]): Promise<number> {
  let exitCode = 0;
  await yargs(argv)
    .scriptName("extraction-adapter")
    .command(
      "extract",
      "extract feature files from an APK or a directory of APKs",
      (cmd) =>
        cmd
          .option("apk", { type: "string", demandOption: true, describe: "APK file or directory" })
          .option("out", { type: "string", demandOption: true, describe: "output directory" })
          .option("label", {
            choices: ["benign", "malicious"] as const,
            default: "benign" as const,
            describe: "label written into each feature file",
          }),
      (args) => {
        try {
          const records = runExtraction(args.apk, args.out, args.label as Label);
          for (const r of records) {
            const total = Object.values(r.counts).reduce((a, b) => a + b, 0);
            const warn = r.warnings.length ? ` (${r.warnings.length} warnings)` : "";
            console.log(`${r.apkPath} -> ${r.featureFilePath}: ${total} features${warn}`);
            for (const w of r.warnings) {
              console.error(`  warning: ${w}`);
            }
          }
        } catch (err) {
          if (err instanceof ExtractionError) {
            console.error(`error: ${err.message}`);
            exitCode = 1;
            return;
          }
          throw err;
        }
      },
    )
    .command(
      "embed-serve",
      "serve the embedding wire protocol",
      (cmd) =>
        cmd
          .option("mode", {
            choices: ["stdio", "tcp"] as const,
            demandOption: true,
          })
          .option("port", { type: "number", default: 0, describe: "tcp port, 0 = ephemeral" })
          .option("dimension", { type: "number", default: 384 })
          .option("seed", { type: "number", default: 0 }),
      async (args) => {
        const embedder = new HashedNgramEmbedder(args.seed, args.dimension);
        if (args.mode === "stdio") {
          console.error(`serving ${embedder.fingerprint()} on stdio`);
          await serveStdio(embedder);
        } else {
          const { port } = await serveTcp(embedder, args.port);
          console.error(`serving ${embedder.fingerprint()} on 127.0.0.1:${port}`);
          await new Promise(() => {}); // runs until killed
        }
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${msg ?? err?.message}`);
      process.exit(2); // stop before any handler runs on bad arguments
    })
    .parseAsync();
  return exitCode;
}

const entry = process.argv[1];
if (entry !== undefined && import.meta.url === pathToFileURL(entry).href) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
