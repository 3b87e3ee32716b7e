/**
 * DOM wiring for the console's three regions: the query editor, the
 * execution status area, and the interactive result table. All behavior
 * with a contract lives in the imported modules; this file only binds
 * events and paints state.
 */

import { HttpTransport } from "./api.js";
import { renderHighlight } from "./highlight.js";
import { tokenize } from "./lexer.js";
import { ConsoleController, summarizeResult } from "./state.js";
import { toggleSort, viewRows, withSearch } from "./table.js";
import type { ConsoleState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const queryInput = el<HTMLTextAreaElement>("query");
const highlightPane = el<HTMLPreElement>("highlight");
const highlightCode = el<HTMLElement>("highlight-code");
const runButton = el<HTMLButtonElement>("run");
const checkStatus = el<HTMLSpanElement>("check-status");
const banner = el<HTMLDivElement>("banner");
const statusLine = el<HTMLDivElement>("status-line");
const errorPanel = el<HTMLDivElement>("error-panel");
const patternStats = el<HTMLTableElement>("pattern-stats");
const tableRegion = el<HTMLElement>("table-region");
const searchInput = el<HTMLInputElement>("search");
const rowCount = el<HTMLSpanElement>("row-count");
const results = el<HTMLTableElement>("results");

const transport = new HttpTransport();
const controller = new ConsoleController(transport);

function paintEditor(state: ConsoleState): void {
  const text = state.text;
  const lex = tokenize(text);
  const html = renderHighlight(text, lex, controller.currentDiagnostics());
  // Trailing newline needs a filler line or the overlay is one row short.
  highlightCode.innerHTML = text.endsWith("\n") || text === "" ? html + "​" : html;
  const issues = controller.currentDiagnostics().length;
  if (state.checking) {
    checkStatus.textContent = "checking…";
  } else if (issues > 0) {
    checkStatus.textContent = `${issues} issue${issues === 1 ? "" : "s"}`;
  } else if (state.checkedRevision === state.revision && text.trim() !== "") {
    checkStatus.textContent = "ok";
  } else {
    checkStatus.textContent = "";
  }
}

function fmtMs(ms: number): string {
  return ms >= 100 ? `${Math.round(ms)} ms` : `${ms.toFixed(1)} ms`;
}

function fmtCell(value: unknown): string {
  if (typeof value === "number" && Number.isInteger(value)) {
    return String(value);
  }
  return String(value);
}

function paintStatus(state: ConsoleState): void {
  const summary = summarizeResult(state.result);
  const statsBody = patternStats.tBodies[0] as HTMLTableSectionElement;
  statsBody.replaceChildren();
  errorPanel.replaceChildren();
  errorPanel.hidden = true;
  patternStats.hidden = true;

  if (state.running) {
    statusLine.textContent = "running…";
    return;
  }
  if (summary.kind === "none") {
    statusLine.textContent = "no query has run yet";
    return;
  }
  const stats = summary.stats;
  if (summary.kind === "error") {
    statusLine.textContent = "query failed";
    errorPanel.hidden = false;
    for (const d of summary.diagnostics) {
      const line = document.createElement("div");
      const sev = document.createElement("span");
      sev.className = `sev-${d.severity}`;
      sev.textContent = d.severity;
      line.append(sev, ` ${d.line}:${d.col} ${d.message}`);
      errorPanel.append(line);
    }
    return;
  }
  let text = summary.rowLabel;
  if (stats !== null) {
    text += ` · planned in ${fmtMs(stats.planning_ms)}, executed in ${fmtMs(stats.execution_ms)}`;
  }
  statusLine.textContent = text;
  if (stats !== null && stats.per_pattern.length > 0) {
    patternStats.hidden = false;
    for (const p of stats.per_pattern) {
      const tr = document.createElement("tr");
      for (const cell of [p.alias, String(p.estimated), String(p.scanned), String(p.matched)]) {
        const td = document.createElement("td");
        td.textContent = cell;
        tr.append(td);
      }
      statsBody.append(tr);
    }
  }
}

function paintTable(state: ConsoleState): void {
  const summary = summarizeResult(state.result);
  if (summary.kind !== "table" || state.result?.table === undefined) {
    tableRegion.hidden = true;
    return;
  }
  const table = state.result.table;
  tableRegion.hidden = false;

  const headRow = (results.tHead as HTMLTableSectionElement).rows[0] as HTMLTableRowElement;
  headRow.replaceChildren();
  table.columns.forEach((name, idx) => {
    const th = document.createElement("th");
    let label = name;
    if (state.view.sortCol === idx) {
      label += state.view.sortDir === "asc" ? " ▲" : " ▼";
    }
    th.textContent = label;
    th.addEventListener("click", () => {
      controller.setView(toggleSort(controller.getState().view, idx));
    });
    headRow.append(th);
  });

  const rows = viewRows(table, state.view);
  const body = results.tBodies[0] as HTMLTableSectionElement;
  body.replaceChildren();
  for (const row of rows) {
    const tr = document.createElement("tr");
    for (const cell of row) {
      const td = document.createElement("td");
      td.textContent = fmtCell(cell);
      tr.append(td);
    }
    body.append(tr);
  }
  const shown = rows.length;
  const total = table.rows.length;
  rowCount.textContent = shown === total ? `${total} rows` : `${shown} of ${total} rows`;
  if (searchInput.value !== state.view.search) {
    searchInput.value = state.view.search;
  }
}

function paint(state: ConsoleState): void {
  paintEditor(state);
  paintStatus(state);
  paintTable(state);
  banner.hidden = state.banner === null;
  banner.textContent = state.banner ?? "";
  runButton.disabled = state.running;
}

controller.subscribe(paint);

queryInput.addEventListener("input", () => {
  controller.edit(queryInput.value);
});
queryInput.addEventListener("scroll", () => {
  highlightPane.scrollTop = queryInput.scrollTop;
  highlightPane.scrollLeft = queryInput.scrollLeft;
});
queryInput.addEventListener("keydown", (ev) => {
  if ((ev.ctrlKey || ev.metaKey) && ev.key === "Enter") {
    ev.preventDefault();
    void controller.run();
  }
});
runButton.addEventListener("click", () => {
  void controller.run();
});
searchInput.addEventListener("input", () => {
  controller.setView(withSearch(controller.getState().view, searchInput.value));
});

const storeStats = el<HTMLSpanElement>("store-stats");
transport
  .stats()
  .then((s) => {
    storeStats.textContent =
      `${s.event_count.toLocaleString()} events · ` +
      `${s.entity_count.toLocaleString()} entities · ` +
      `${s.partition_count} partitions`;
  })
  .catch(() => {
    storeStats.textContent = "store stats unavailable";
  });

paint(controller.getState());
