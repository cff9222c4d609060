/** Chart series extraction: a 1:1 mapping from received messages to plotted
 * points. Every value in a series is a value that arrived on the wire. */
import { MetricsPayload } from "./protocol.js";
import { ClientSessionView } from "./view.js";

export interface Point {
  x: number;
  y: number;
}

export interface ChartSet {
  /** One line per reward-ranking hypothesis, y = posterior probability. */
  posterior: Point[][];
  entropy: Point[];
  cumulativeReturn: Point[];
  tau: Point[];
}

function posteriorKeys(row: MetricsPayload): string[] {
  return Object.keys(row)
    .filter((k) => /^p\d+$/.test(k))
    .sort((a, b) => Number(a.slice(1)) - Number(b.slice(1)));
}

export function chartSet(view: ClientSessionView): ChartSet {
  const rows = view.metrics.toArray();
  const keys = rows.length > 0 ? posteriorKeys(rows[0]) : [];
  return {
    posterior: keys.map((key) =>
      rows.map((r) => ({ x: r.tick, y: (r as unknown as Record<string, unknown>)[key] as number }))),
    entropy: rows.map((r) => ({ x: r.tick, y: r.entropy })),
    cumulativeReturn: rows.map((r) => ({ x: r.tick, y: r.return })),
    tau: rows.filter((r) => r.tau !== null).map((r) => ({ x: r.tick, y: r.tau as number })),
  };
}

/** What the entropy chart's live readout shows: the latest server-published
 * belief entropy (the charts never compute entropy themselves). */
export function entropyReading(view: ClientSessionView): number | null {
  return view.latestBelief ? view.latestBelief.entropy : null;
}
