import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { chartSet, entropyReading } from "../src/charts.js";
import { MetricsPayload } from "../src/protocol.js";
import { parseMetricsCsv, replayMetrics } from "../src/replay.js";
import { ClientSessionView } from "../src/view.js";

const fixtures = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

describe("chart values", () => {
  it("entropy chart reads 0.693 for a 0.5/0.5 belief", () => {
    const view = new ClientSessionView();
    view.ingest({ type: "belief", seq: 0,
                  payload: { posterior: [0.5, 0.5],
                             entropy: 0.6931471805599453,
                             rankings: [[6, -1, -5], [6, -5, -1]],
                             map_ranking: {} } });
    expect(entropyReading(view)).toBeCloseTo(0.693, 3);
    // The reading is the server's value verbatim, not a recomputation.
    expect(entropyReading(view)).toBe(0.6931471805599453);
  });

  it("plots uniform posteriors as six lines at 1/6", () => {
    const view = new ClientSessionView();
    const row: Record<string, unknown> = { tick: 1, entropy: Math.log(6),
                                           return: 0, tau: 1.0, n_updates: 0 };
    for (let i = 0; i < 6; i += 1) row[`p${i}`] = 1 / 6;
    view.ingest({ type: "metrics", seq: 0, payload: row });
    const charts = chartSet(view);
    expect(charts.posterior.length).toBe(6);
    charts.posterior.forEach((line) => expect(line[0].y).toBe(1 / 6));
  });

  it("drops tau points only where the server sent null", () => {
    const view = new ClientSessionView();
    view.ingest({ type: "metrics", seq: 0,
                  payload: { tick: 1, entropy: 1.79, return: 0,
                             tau: null, n_updates: 0 } });
    view.ingest({ type: "metrics", seq: 1,
                  payload: { tick: 2, entropy: 1.2, return: 6,
                             tau: 0.333, n_updates: 1 } });
    const charts = chartSet(view);
    expect(charts.tau).toEqual([{ x: 2, y: 0.333 }]);
    expect(charts.cumulativeReturn).toEqual([{ x: 1, y: 0 }, { x: 2, y: 6 }]);
  });
});

describe("report replay fidelity", () => {
  const report = JSON.parse(readFileSync(join(fixtures, "online.json"), "utf8"));
  const csvRows = parseMetricsCsv(
    readFileSync(join(fixtures, "online_metrics.csv"), "utf8"));

  it("replayed curves match the server CSV exactly, value for value", () => {
    expect(csvRows.length).toBeGreaterThan(0);
    report.runs.forEach((run: { seed: number }, i: number) => {
      const rows = report.curves[i] as MetricsPayload[];
      const view = replayMetrics(rows);
      const charts = chartSet(view);
      const expected = csvRows.filter((r) => r.seed === run.seed);
      expect(expected.length).toBe(rows.length);
      charts.entropy.forEach((pt, j) => {
        expect(pt.x).toBe(expected[j].row.tick);
        expect(pt.y).toBe(expected[j].row.entropy);
      });
      charts.cumulativeReturn.forEach((pt, j) => {
        expect(pt.y).toBe(expected[j].row.return);
      });
      charts.posterior.forEach((line, k) => {
        line.forEach((pt, j) => {
          expect(pt.y).toBe((expected[j].row as Record<string, unknown>)[`p${k}`]);
        });
      });
      const nonNull = expected.filter((r) => r.row.tau !== null);
      expect(charts.tau.map((pt) => pt.y)).toEqual(nonNull.map((r) => r.row.tau));
    });
  });
});
