/**
 * Loader for dataset exports: one manifest line followed by one JSON
 * object per (doi, material) entry.
 *
 * The wire format is owned by the extraction pipeline; field names stay
 * snake_case here so that what the explorer reads is literally what the
 * file says. Optional fields are omitted on the wire, never null, so
 * every accessor that can be absent is typed `?`.
 */

export const SUPPORTED_SCHEMA_VERSION = 1;

export class DatasetLoadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "DatasetLoadError";
  }
}

export interface Manifest {
  schema_version: number;
  created_at: string;
  model: string;
  pattern_checksum: string;
  unit_rules_version: string;
  template_hashes: Record<string, string>;
}

export interface Measurement {
  property: string;
  value: number;
  raw_unit: string;
  canonical_unit: string;
  source: string;
  canonical_value?: number;
  temperature_k?: number;
  flags?: string[];
}

export interface Structure {
  compound_type?: string;
  crystal_structure?: string;
  lattice_structure?: string;
  lattice_parameters?: string;
  space_group?: string;
  doping_type?: string;
  processing_method?: string;
  dopants?: string[];
  flags?: string[];
}

export interface ConductivityPoint {
  value_s_per_m: number;
  origin: string;
  temperature_k?: number;
}

export interface DatasetEntry {
  doi: string;
  material: string;
  te_properties: Measurement[];
  structure: Structure;
  provenance: Record<string, unknown>;
  conductivity_view?: ConductivityPoint[];
  flags?: string[];
}

export interface LoadedDataset {
  manifest: Manifest | null;
  entries: DatasetEntry[];
}

function fail(lineno: number, message: string): never {
  throw new DatasetLoadError(`line ${lineno}: ${message}`);
}

function asEntry(payload: Record<string, unknown>, lineno: number): DatasetEntry {
  if (typeof payload.doi !== "string" || !payload.doi) {
    fail(lineno, "entry has no doi");
  }
  if (typeof payload.material !== "string" || !payload.material) {
    fail(lineno, "entry has no material");
  }
  if (!Array.isArray(payload.te_properties)) {
    fail(lineno, "entry has no te_properties array");
  }
  for (const m of payload.te_properties as Measurement[]) {
    if (typeof m.property !== "string" || typeof m.value !== "number") {
      fail(lineno, "measurement missing property or numeric value");
    }
  }
  return {
    doi: payload.doi,
    material: payload.material,
    te_properties: payload.te_properties as Measurement[],
    structure: (payload.structure ?? {}) as Structure,
    provenance: (payload.provenance ?? {}) as Record<string, unknown>,
    conductivity_view: payload.conductivity_view as ConductivityPoint[] | undefined,
    flags: payload.flags as string[] | undefined,
  };
}

/**
 * Parse a dataset file. Throws DatasetLoadError (with the offending
 * line number) on malformed JSON, a missing required field, or a schema
 * version this explorer does not understand; callers surface the
 * message as a banner instead of crashing.
 */
export function parseDataset(text: string): LoadedDataset {
  let manifest: Manifest | null = null;
  const entries: DatasetEntry[] = [];
  let first = true;
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i]!.trim();
    if (!line) continue;
    let payload: Record<string, unknown>;
    try {
      payload = JSON.parse(line);
    } catch {
      fail(i + 1, "not valid JSON");
    }
    if (payload === null || typeof payload !== "object" || Array.isArray(payload)) {
      fail(i + 1, "expected a JSON object");
    }
    const kind = (payload.kind as string | undefined) ?? "entry";
    delete payload.kind;
    if (kind === "manifest") {
      const version = Number(payload.schema_version ?? SUPPORTED_SCHEMA_VERSION);
      if (version !== SUPPORTED_SCHEMA_VERSION) {
        fail(
          i + 1,
          `schema version ${version} not supported ` +
            `(this explorer reads version ${SUPPORTED_SCHEMA_VERSION})`,
        );
      }
      manifest = {
        schema_version: version,
        created_at: String(payload.created_at ?? ""),
        model: String(payload.model ?? ""),
        pattern_checksum: String(payload.pattern_checksum ?? ""),
        unit_rules_version: String(payload.unit_rules_version ?? ""),
        template_hashes: (payload.template_hashes ?? {}) as Record<string, string>,
      };
      first = false;
      continue;
    }
    // A leading header line without a doi is tolerated, matching the
    // pipeline's own reader; anywhere else a doi-less object is an error.
    if (first && !("doi" in payload)) {
      first = false;
      continue;
    }
    first = false;
    entries.push(asEntry(payload, i + 1));
  }
  return { manifest, entries };
}
