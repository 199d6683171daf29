/**
 * The feature-file grammar this adapter emits.
 *
 * A sample is a UTF-8 text file: first contentful line `label: benign`
 * or `label: malicious`, then one `category::value` line per feature,
 * `#` lines are comments.  Lines are emitted sorted by (category,
 * value) so extraction output is byte-stable.
 */

export const CATEGORIES = [
  "api_call",
  "component",
  "hardware",
  "intent",
  "permission",
  "restricted_api",
  "url",
  "used_permission",
] as const;

export type Category = (typeof CATEGORIES)[number];

export type Label = "benign" | "malicious";

export interface Feature {
  readonly category: Category;
  readonly value: string;
}

export function feature(category: Category, value: string): Feature {
  const trimmed = value.trim();
  if (!trimmed) {
    throw new Error(`empty value for category ${category}`);
  }
  if (/[\r\n]/.test(trimmed)) {
    throw new Error(`value contains a line break: ${JSON.stringify(value)}`);
  }
  return { category, value: trimmed };
}

export function serializeFeature(f: Feature): string {
  return `${f.category}::${f.value}`;
}

/** Distinct features, sorted by (category, value), one per line. */
export function serializeFeatureFile(features: Iterable<Feature>, label: Label): string {
  const seen = new Map<string, Feature>();
  for (const f of features) {
    seen.set(serializeFeature(f), f);
  }
  const lines = [...seen.keys()].sort();
  return [`label: ${label}`, ...lines].join("\n") + "\n";
}

/** Per-category tallies; every category key is present, possibly zero. */
export function countByCategory(features: Iterable<Feature>): Record<Category, number> {
  const counts = Object.fromEntries(CATEGORIES.map((c) => [c, 0])) as Record<Category, number>;
  const seen = new Set<string>();
  for (const f of features) {
    const key = serializeFeature(f);
    if (!seen.has(key)) {
      seen.add(key);
      counts[f.category] += 1;
    }
  }
  return counts;
}
