export {
  CATEGORIES,
  countByCategory,
  feature,
  serializeFeature,
  serializeFeatureFile,
  type Category,
  type Feature,
  type Label,
} from "./features.js";
export { AxmlFormatError, buildAxml, parseAxml, walkElements } from "./axml.js";
export { DexFormatError, buildDex, parseDex, type DexContents, type MethodRef } from "./dex.js";
export {
  ExtractionError,
  TOOLKIT_VERSION,
  extractApk,
  extractDirectory,
  extractFeatures,
  runExtraction,
  type ExtractionRecord,
} from "./extract.js";
export { HashedNgramEmbedder } from "./embedding.js";
export { handleLine, serveStdio, serveTcp, type ServiceResponse } from "./service.js";
export { buildFixtureApk, FIXTURE_MANIFEST_PERMISSIONS, FIXTURE_PACKAGE, FIXTURE_URL } from "./fixture.js";
