/**
 * Pure result-table transforms: client-side sorting and substring search.
 *
 * Every function returns fresh arrays and never touches the response data,
 * so clearing the controls always restores the exact server row order.
 */

import type { TablePayload } from "./api.js";

export type Cell = string | number | boolean | null;

export type SortDir = "asc" | "desc";

export interface TableView {
  /** Column index to sort by, or null for server order. */
  sortCol: number | null;
  sortDir: SortDir;
  /** Case-insensitive substring matched against every cell of a row. */
  search: string;
}

export const INITIAL_VIEW: TableView = { sortCol: null, sortDir: "asc", search: "" };

/**
 * Clicking a header cycles that column asc, then desc, then back to server
 * order; clicking a different column starts at asc.
 */
export function toggleSort(view: TableView, col: number): TableView {
  if (view.sortCol !== col) {
    return { ...view, sortCol: col, sortDir: "asc" };
  }
  if (view.sortDir === "asc") {
    return { ...view, sortDir: "desc" };
  }
  return { ...view, sortCol: null, sortDir: "asc" };
}

export function withSearch(view: TableView, search: string): TableView {
  return { ...view, search };
}

function asNumber(cell: Cell): number | null {
  if (typeof cell === "number") {
    return cell;
  }
  if (typeof cell === "string" && cell.trim() !== "") {
    const parsed = Number(cell);
    return Number.isNaN(parsed) ? null : parsed;
  }
  return null;
}

/** Numeric order applies only when every value in the column is a number. */
export function isNumericColumn(rows: readonly (readonly Cell[])[], col: number): boolean {
  if (rows.length === 0) {
    return false;
  }
  return rows.every((row) => asNumber(row[col] ?? null) !== null);
}

function rowMatches(row: readonly Cell[], needle: string): boolean {
  return row.some((cell) => String(cell).toLowerCase().includes(needle));
}

/**
 * Apply search, then sort, to the payload rows. The sort is stable, so rows
 * that compare equal keep their server order, and search composes with it:
 * the same comparator runs over whichever subset the filter kept.
 */
export function viewRows(data: TablePayload, view: TableView): Cell[][] {
  let rows: Cell[][] = data.rows.map((row) => row.slice());
  if (view.search !== "") {
    const needle = view.search.toLowerCase();
    rows = rows.filter((row) => rowMatches(row, needle));
  }
  const col = view.sortCol;
  if (col !== null && col >= 0 && col < data.columns.length) {
    const numeric = isNumericColumn(rows, col);
    const sign = view.sortDir === "asc" ? 1 : -1;
    rows.sort((a, b) => {
      const av = a[col] ?? null;
      const bv = b[col] ?? null;
      let cmp: number;
      if (numeric) {
        cmp = (asNumber(av) as number) - (asNumber(bv) as number);
      } else {
        const as = String(av);
        const bs = String(bv);
        cmp = as < bs ? -1 : as > bs ? 1 : 0;
      }
      return sign * cmp;
    });
  }
  return rows;
}
