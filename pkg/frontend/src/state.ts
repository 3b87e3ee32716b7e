/**
 * Console state machine, kept free of DOM concerns so the contracts are
 * unit-testable: debounced checking, single-flight requests, and revision
 * safety (a response for text revision n is never rendered once the text
 * has moved to revision m > n).
 */

import type { QueryOptions, QueryResponse, QueryStats, Transport } from "./api.js";
import type { Diagnostic } from "./lexer.js";
import type { TableView } from "./table.js";
import { INITIAL_VIEW } from "./table.js";

export const CHECK_DEBOUNCE_MS = 300;

export const OFFLINE_BANNER =
  "cannot reach the query service; your edits are kept and requests will retry";

export interface ConsoleState {
  text: string;
  /** Bumped on every edit; responses carry the revision they were sent for. */
  revision: number;
  /** Diagnostics from the last check that is still current. */
  diagnostics: Diagnostic[];
  /** Revision `diagnostics` corresponds to, -1 before the first check. */
  checkedRevision: number;
  checking: boolean;
  running: boolean;
  /** Last rendered run response; null before the first run. */
  result: QueryResponse | null;
  resultRevision: number;
  /** Non-blocking connectivity notice; null when the service is reachable. */
  banner: string | null;
  view: TableView;
}

function initialState(): ConsoleState {
  return {
    text: "",
    revision: 0,
    diagnostics: [],
    checkedRevision: -1,
    checking: false,
    running: false,
    result: null,
    resultRevision: -1,
    banner: null,
    view: INITIAL_VIEW,
  };
}

export type Listener = (state: ConsoleState) => void;

export class ConsoleController {
  private state: ConsoleState = initialState();
  private listeners: Listener[] = [];
  private timer: ReturnType<typeof setTimeout> | null = null;
  private checkQueued = false;

  constructor(
    private readonly transport: Transport,
    private readonly debounceMs: number = CHECK_DEBOUNCE_MS,
  ) {}

  getState(): ConsoleState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private setState(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Update the source text and schedule a debounced syntax check. */
  edit(text: string): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fireCheck();
    }, this.debounceMs);
    this.setState({ text, revision: this.state.revision + 1 });
  }

  private async fireCheck(): Promise<void> {
    if (this.state.checking) {
      this.checkQueued = true;
      return;
    }
    const revision = this.state.revision;
    this.setState({ checking: true });
    try {
      const resp = await this.transport.check(this.state.text);
      if (revision === this.state.revision) {
        this.setState({
          diagnostics: resp.diagnostics,
          checkedRevision: revision,
          banner: null,
        });
      }
    } catch {
      this.setState({ banner: OFFLINE_BANNER });
    } finally {
      this.setState({ checking: false });
      if (this.checkQueued) {
        this.checkQueued = false;
        void this.fireCheck();
      }
    }
  }

  /** Execute the current text. Ignored while another run is in flight. */
  async run(options?: QueryOptions): Promise<void> {
    if (this.state.running || this.state.text.trim() === "") {
      return;
    }
    const revision = this.state.revision;
    this.setState({ running: true });
    try {
      const resp = await this.transport.query(this.state.text, options);
      if (revision === this.state.revision) {
        this.setState({
          result: resp,
          resultRevision: revision,
          banner: null,
          view: INITIAL_VIEW,
        });
      }
    } catch {
      this.setState({ banner: OFFLINE_BANNER });
    } finally {
      this.setState({ running: false });
    }
  }

  /** Table controls; they only touch the view, never the response data. */
  setView(view: TableView): void {
    this.setState({ view });
  }

  /** Underlines are drawn only when diagnostics match the current text. */
  currentDiagnostics(): Diagnostic[] {
    return this.state.checkedRevision === this.state.revision ? this.state.diagnostics : [];
  }
}

export type ResultSummary =
  | { kind: "none" }
  | { kind: "error"; diagnostics: Diagnostic[]; stats: QueryStats | null }
  | {
      kind: "table";
      rowCount: number;
      rowLabel: string;
      truncated: boolean;
      stats: QueryStats | null;
      plan: unknown;
    };

/** Shape the last response for the status area and result panel. */
export function summarizeResult(result: QueryResponse | null): ResultSummary {
  if (result === null) {
    return { kind: "none" };
  }
  if (!result.ok || result.table === undefined) {
    return {
      kind: "error",
      diagnostics: result.diagnostics ?? [],
      stats: result.stats ?? null,
    };
  }
  const count = result.table.rows.length;
  let label = `${count} row${count === 1 ? "" : "s"}`;
  if (result.table.truncated) {
    label += " (truncated)";
  }
  return {
    kind: "table",
    rowCount: count,
    rowLabel: label,
    truncated: result.table.truncated,
    stats: result.stats ?? null,
    plan: result.plan ?? null,
  };
}
