import { describe, expect, it } from "vitest";

import type { TablePayload } from "../src/api.js";
import {
  INITIAL_VIEW,
  isNumericColumn,
  toggleSort,
  viewRows,
  withSearch,
} from "../src/table.js";
import type { TableView } from "../src/table.js";

function payload(): TablePayload {
  return {
    columns: ["p.exe_name", "amt", "window_start"],
    rows: [
      ["sbblv.exe", 8335000.0, 1522814510000],
      ["backup.exe", 120.5, 1522814500000],
      ["osql.exe", 9, 1522814520000],
      ["cmd.exe", 9, 1522814490000],
    ],
    truncated: false,
  };
}

const sortedBy = (col: number, dir: "asc" | "desc" = "asc"): TableView => ({
  sortCol: col,
  sortDir: dir,
  search: "",
});

describe("toggleSort", () => {
  it("cycles a column through asc, desc, and back to server order", () => {
    const first = toggleSort(INITIAL_VIEW, 1);
    expect(first).toMatchObject({ sortCol: 1, sortDir: "asc" });
    const second = toggleSort(first, 1);
    expect(second).toMatchObject({ sortCol: 1, sortDir: "desc" });
    const third = toggleSort(second, 1);
    expect(third).toMatchObject({ sortCol: null, sortDir: "asc" });
  });

  it("starts ascending when switching to a different column", () => {
    const view = toggleSort(sortedBy(0, "desc"), 2);
    expect(view).toMatchObject({ sortCol: 2, sortDir: "asc" });
  });
});

describe("sorting", () => {
  it("sorts numerically when every value parses as a number", () => {
    const rows = viewRows(payload(), sortedBy(1));
    expect(rows.map((r) => r[1])).toEqual([9, 9, 120.5, 8335000.0]);
  });

  it("sorts numeric strings by value, not by their spelling", () => {
    const data: TablePayload = {
      columns: ["n"],
      rows: [["10"], ["9"], ["100"]],
      truncated: false,
    };
    expect(viewRows(data, sortedBy(0)).map((r) => r[0])).toEqual(["9", "10", "100"]);
  });

  it("falls back to lexicographic order when any value is not a number", () => {
    const data: TablePayload = {
      columns: ["n"],
      rows: [["10"], ["9"], ["x"]],
      truncated: false,
    };
    expect(viewRows(data, sortedBy(0)).map((r) => r[0])).toEqual(["10", "9", "x"]);
  });

  it("descending exactly reverses ascending", () => {
    const asc = viewRows(payload(), sortedBy(2, "asc"));
    const desc = viewRows(payload(), sortedBy(2, "desc"));
    expect(desc).toEqual([...asc].reverse());
  });

  it("is stable: ties keep their server order", () => {
    const rows = viewRows(payload(), sortedBy(1));
    expect(rows.slice(0, 2).map((r) => r[0])).toEqual(["osql.exe", "cmd.exe"]);
  });
});

describe("searching", () => {
  it("filters rows by case-insensitive substring across all columns", () => {
    const rows = viewRows(payload(), withSearch(INITIAL_VIEW, "SBBLV"));
    expect(rows).toEqual([["sbblv.exe", 8335000.0, 1522814510000]]);
  });

  it("matches numeric cells through their string form", () => {
    const rows = viewRows(payload(), withSearch(INITIAL_VIEW, "120.5"));
    expect(rows.map((r) => r[0])).toEqual(["backup.exe"]);
  });

  it("composes with sorting", () => {
    const view = withSearch(sortedBy(2, "desc"), ".exe");
    const rows = viewRows(payload(), view);
    expect(rows.map((r) => r[2])).toEqual([
      1522814520000, 1522814510000, 1522814500000, 1522814490000,
    ]);
  });

  it("returns no rows when nothing matches", () => {
    expect(viewRows(payload(), withSearch(INITIAL_VIEW, "zzz"))).toEqual([]);
  });
});

describe("view purity", () => {
  it("never mutates the underlying response data", () => {
    const data = payload();
    const snapshot = data.rows.map((r) => [...r]);
    const refs = [...data.rows];
    viewRows(data, withSearch(sortedBy(0, "desc"), "exe"));
    expect(data.rows).toEqual(snapshot);
    data.rows.forEach((row, i) => expect(row).toBe(refs[i]));
  });

  it("restores the exact original row order when the view is cleared", () => {
    const data = payload();
    viewRows(data, withSearch(sortedBy(1, "desc"), "osql"));
    const restored = viewRows(data, INITIAL_VIEW);
    expect(restored).toEqual(payload().rows);
  });
});

describe("isNumericColumn", () => {
  it("accepts numbers and numeric strings", () => {
    expect(isNumericColumn([[1], ["2.5"], [3]], 0)).toBe(true);
  });

  it("rejects empty strings, nulls, and words", () => {
    expect(isNumericColumn([[1], [""]], 0)).toBe(false);
    expect(isNumericColumn([[1], [null]], 0)).toBe(false);
    expect(isNumericColumn([["osql.exe"]], 0)).toBe(false);
  });

  it("treats an empty table as non-numeric", () => {
    expect(isNumericColumn([], 0)).toBe(false);
  });
});
