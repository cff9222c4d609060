/** Replay of server report artifacts into the client view.
 *
 * The server writes an online-batch report as JSON (with per-tick metric
 * curves) plus a flat metrics CSV. Replaying the curves through the normal
 * ingest path must reproduce the CSV values exactly — the charts perform no
 * transformation.
 */
import { Envelope, MetricsPayload } from "./protocol.js";
import { ClientSessionView } from "./view.js";

export interface MetricsCsvRow {
  seed: number;
  row: MetricsPayload;
}

/** Parse the server's `*_metrics.csv` (header + comma-separated numbers;
 * empty cells are nulls, e.g. tau before the first belief update). */
export function parseMetricsCsv(text: string): MetricsCsvRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) return [];
  const header = lines[0].split(",");
  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    const rec: Record<string, number | null> = {};
    header.forEach((name, i) => {
      rec[name] = cells[i] === "" ? null : Number(cells[i]);
    });
    const { seed, ...row } = rec;
    return { seed: seed as number, row: row as unknown as MetricsPayload };
  });
}

/** Feed one run's metric rows through a view, as if streamed live. */
export function replayMetrics(rows: MetricsPayload[],
                              view = new ClientSessionView()): ClientSessionView {
  rows.forEach((row, i) => {
    const msg: Envelope = { type: "metrics", seq: i,
                            payload: row as unknown as Record<string, unknown> };
    view.ingest(msg);
  });
  return view;
}
