/**
 * DOM wiring for the explorer page. All dataset logic lives in the
 * pure modules (jsonl, rows, filters, csv, urlstate); this file only
 * moves values between them and the document, so it stays untested
 * while everything it delegates to is.
 */

import { CSV_COLUMNS, cellText, toCsv, visibleColumns, type CsvColumn } from "./csv.js";
import {
  applyFilters,
  emptyFilterState,
  filterStateErrors,
  type FilterState,
  type RangeName,
} from "./filters.js";
import { DatasetLoadError, parseDataset, type LoadedDataset } from "./jsonl.js";
import { distinctValues, expandRows, rowByKey, type Row } from "./rows.js";
import { decodeFilterState, encodeFilterState } from "./urlstate.js";

const ROW_RENDER_CAP = 500;

let rows: Row[] = [];
let state: FilterState = emptyFilterState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showBanner(message: string | null): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message ?? "";
  banner.hidden = message === null;
}

function loadText(text: string, sourceName: string): void {
  let dataset: LoadedDataset;
  try {
    dataset = parseDataset(text);
  } catch (err) {
    if (err instanceof DatasetLoadError) {
      showBanner(`${sourceName}: ${err.message}`);
      return;
    }
    throw err;
  }
  showBanner(null);
  rows = expandRows(dataset.entries);
  state = decodeFilterState(location.search);
  const meta = dataset.manifest
    ? ` (model ${dataset.manifest.model || "?"}, ${dataset.manifest.created_at || "undated"})`
    : "";
  el<HTMLSpanElement>("file-info").textContent =
    `${sourceName}: ${dataset.entries.length} entries, ${rows.length} measurements${meta}`;
  rebuildFacets();
  syncControls();
  render();
}

function rebuildFacets(): void {
  fillSelect("compound-type", distinctValues(rows, "compound_type"));
  fillSelect("crystal-structure", distinctValues(rows, "crystal_structure"));
}

function fillSelect(id: string, values: string[]): void {
  const select = el<HTMLSelectElement>(id);
  select.replaceChildren(new Option("(any)", ""));
  for (const v of values) select.add(new Option(v, v));
}

function syncControls(): void {
  el<HTMLInputElement>("material").value = state.material;
  el<HTMLSelectElement>("compound-type").value = state.compoundType;
  el<HTMLSelectElement>("crystal-structure").value = state.crystalStructure;
  for (const name of ["zt", "sigma", "kappa"] as RangeName[]) {
    const r = state[name];
    el<HTMLInputElement>(`${name}-min`).value = r.min === null ? "" : String(r.min);
    el<HTMLInputElement>(`${name}-max`).value = r.max === null ? "" : String(r.max);
  }
  const toggles = el<HTMLDivElement>("column-toggles");
  toggles.replaceChildren();
  for (const column of CSV_COLUMNS) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = state.columns.has(column);
    box.addEventListener("change", () => {
      const next = new Set(state.columns);
      if (box.checked) next.add(column);
      else next.delete(column);
      state.columns = next;
      render();
    });
    label.append(box, ` ${column}`);
    toggles.append(label);
  }
}

function readControls(): void {
  state.material = el<HTMLInputElement>("material").value;
  state.compoundType = el<HTMLSelectElement>("compound-type").value;
  state.crystalStructure = el<HTMLSelectElement>("crystal-structure").value;
  for (const name of ["zt", "sigma", "kappa"] as RangeName[]) {
    state[name] = {
      min: readBound(`${name}-min`),
      max: readBound(`${name}-max`),
    };
  }
}

function readBound(id: string): number | null {
  const raw = el<HTMLInputElement>(id).value.trim();
  if (raw === "") return null;
  const n = Number(raw);
  return Number.isFinite(n) ? n : null;
}

function render(): void {
  const errors = filterStateErrors(state);
  if (errors.length) {
    showBanner(errors.join("; "));
    return;
  }
  showBanner(null);
  const filtered = applyFilters(rows, state);
  const columns = visibleColumns(state.columns);
  el<HTMLSpanElement>("counts").textContent =
    `${filtered.length} of ${rows.length} rows` +
    (filtered.length > ROW_RENDER_CAP ? ` (showing first ${ROW_RENDER_CAP})` : "");

  const head = el<HTMLTableRowElement>("table-head");
  head.replaceChildren(...columns.map((c) => {
    const th = document.createElement("th");
    th.textContent = c;
    return th;
  }));
  const body = el<HTMLTableSectionElement>("table-body");
  body.replaceChildren();
  for (const row of filtered.slice(0, ROW_RENDER_CAP)) {
    const tr = document.createElement("tr");
    tr.className = row.key === state.selectedKey ? "selected" : "";
    for (const column of columns) {
      const td = document.createElement("td");
      td.textContent = cellText(row, column);
      tr.append(td);
    }
    tr.addEventListener("click", () => {
      state.selectedKey = row.key;
      render();
    });
    body.append(tr);
  }
  renderDetails();
  history.replaceState(null, "", "?" + encodeFilterState(state));
}

function detailLine(parent: HTMLElement, label: string, value: string): void {
  const div = document.createElement("div");
  const b = document.createElement("b");
  b.textContent = `${label}: `;
  div.append(b, value);
  parent.append(div);
}

function renderDetails(): void {
  const pane = el<HTMLDivElement>("details");
  pane.replaceChildren();
  const row = state.selectedKey === null ? undefined : rowByKey(rows, state.selectedKey);
  if (!row) {
    pane.textContent = "Select a row to inspect the full record.";
    return;
  }
  const entry = row.entry;
  const title = document.createElement("h3");
  title.textContent = entry.material;
  const doi = document.createElement("a");
  doi.href = `https://doi.org/${entry.doi}`;
  doi.textContent = entry.doi;
  doi.target = "_blank";
  doi.rel = "noopener";
  pane.append(title, doi);

  const measHead = document.createElement("h4");
  measHead.textContent = `Measurements (${entry.te_properties.length})`;
  pane.append(measHead);
  for (const m of entry.te_properties) {
    const parts = [`${m.property} = ${m.value}${m.raw_unit ? " " + m.raw_unit : ""}`];
    if (m.canonical_value !== undefined) {
      parts.push(`canonical ${m.canonical_value}${m.canonical_unit ? " " + m.canonical_unit : ""}`);
    }
    if (m.temperature_k !== undefined) parts.push(`at ${m.temperature_k} K`);
    parts.push(`from ${m.source}`);
    if (m.flags?.length) parts.push(`[${m.flags.join(", ")}]`);
    detailLine(pane, "•", parts.join(", "));
  }

  const structHead = document.createElement("h4");
  structHead.textContent = "Structure";
  pane.append(structHead);
  const s = entry.structure;
  // absent optionals are simply not rendered
  if (s.compound_type !== undefined) detailLine(pane, "compound type", s.compound_type);
  if (s.crystal_structure !== undefined) detailLine(pane, "crystal structure", s.crystal_structure);
  if (s.lattice_structure !== undefined) detailLine(pane, "lattice structure", s.lattice_structure);
  if (s.lattice_parameters !== undefined) detailLine(pane, "lattice parameters", s.lattice_parameters);
  if (s.space_group !== undefined) detailLine(pane, "space group", s.space_group);
  if (s.doping_type !== undefined) detailLine(pane, "doping type", s.doping_type);
  if (s.dopants?.length) detailLine(pane, "dopants", s.dopants.join(", "));
  if (s.processing_method !== undefined) detailLine(pane, "processing", s.processing_method);

  if (entry.conductivity_view?.length) {
    const condHead = document.createElement("h4");
    condHead.textContent = "Conductivity view (S/m)";
    pane.append(condHead);
    for (const p of entry.conductivity_view) {
      const at = p.temperature_k !== undefined ? ` at ${p.temperature_k} K` : "";
      detailLine(pane, "•", `${p.value_s_per_m}${at}, from ${p.origin}`);
    }
  }

  const provHead = document.createElement("h4");
  provHead.textContent = "Provenance";
  pane.append(provHead);
  for (const [key, value] of Object.entries(entry.provenance)) {
    detailLine(pane, key, typeof value === "string" ? value : JSON.stringify(value));
  }
}

function exportFiltered(): void {
  const filtered = applyFilters(rows, state);
  const text = toCsv(filtered, visibleColumns(state.columns));
  const blob = new Blob([text], { type: "text/csv;charset=utf-8" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "dataset_filtered.csv";
  link.click();
  URL.revokeObjectURL(link.href);
}

function wire(): void {
  el<HTMLInputElement>("file-input").addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    file.text().then((text) => loadText(text, file.name));
  });
  for (const id of ["material", "zt-min", "zt-max", "sigma-min", "sigma-max",
                    "kappa-min", "kappa-max"]) {
    el<HTMLInputElement>(id).addEventListener("input", () => {
      readControls();
      render();
    });
  }
  for (const id of ["compound-type", "crystal-structure"]) {
    el<HTMLSelectElement>(id).addEventListener("change", () => {
      readControls();
      render();
    });
  }
  el<HTMLButtonElement>("export").addEventListener("click", exportFiltered);

  // static-hosting mode: a dataset.jsonl published next to the page
  fetch("./dataset.jsonl")
    .then((resp) => (resp.ok ? resp.text() : null))
    .then((text) => {
      if (text !== null && rows.length === 0) loadText(text, "dataset.jsonl");
    })
    .catch(() => undefined);
}

wire();
