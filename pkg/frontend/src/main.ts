/** Browser entry point: wires the protocol client to a canvas grid, four
 * chart canvases, gesture buttons, and keyboard shortcuts.
 *
 * Configuration comes from the URL query: ?host=127.0.0.1&port=8765
 */
import { chartSet, entropyReading, Point } from "./charts.js";
import { SessionClient } from "./client.js";
import { gridToText, renderWorld } from "./grid.js";
import { KEY_BINDINGS } from "./keys.js";
import { GESTURE_KINDS } from "./protocol.js";
import { ClientSessionView } from "./view.js";

function drawSeries(canvas: HTMLCanvasElement, lines: Point[][], label: string): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px sans-serif";
  ctx.fillText(label, 4, 12);
  const points = lines.flat();
  if (points.length === 0) return;
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs, Math.min(...xs) + 1)];
  const [y0, y1] = [Math.min(...ys, 0), Math.max(...ys, Math.min(...ys, 0) + 1e-9)];
  const px = (p: Point) => 4 + ((p.x - x0) / (x1 - x0)) * (canvas.width - 8);
  const py = (p: Point) => canvas.height - 4 - ((p.y - y0) / (y1 - y0)) * (canvas.height - 20);
  lines.forEach((line, i) => {
    ctx.strokeStyle = `hsl(${(i * 60) % 360}, 70%, 45%)`;
    ctx.beginPath();
    line.forEach((p, j) => (j === 0 ? ctx.moveTo(px(p), py(p)) : ctx.lineTo(px(p), py(p))));
    ctx.stroke();
  });
}

function render(view: ClientSessionView): void {
  const grid = document.getElementById("grid") as HTMLPreElement | null;
  if (grid && view.latestState) {
    const world = renderWorld(view.latestState);
    grid.textContent = gridToText(world);
    const status = document.getElementById("status");
    if (status) {
      const entropy = entropyReading(view);
      status.textContent =
        `tick ${world.tick}  score ${world.score}` +
        (entropy === null ? "" : `  entropy ${entropy.toFixed(3)}`) +
        (view.gapBanner ? "  [WARNING: dropped messages]" : "") +
        (view.finished ? "  [finished]" : view.paused ? "  [paused]" : "");
    }
  }
  const charts = chartSet(view);
  const byId = (id: string) => document.getElementById(id) as HTMLCanvasElement | null;
  const posterior = byId("chart-posterior");
  if (posterior) drawSeries(posterior, charts.posterior, "posterior per ranking");
  const entropy = byId("chart-entropy");
  if (entropy) drawSeries(entropy, [charts.entropy], "entropy");
  const ret = byId("chart-return");
  if (ret) drawSeries(ret, [charts.cumulativeReturn], "cumulative return");
  const tau = byId("chart-tau");
  if (tau) drawSeries(tau, [charts.tau], "running tau");
  for (const kind of GESTURE_KINDS) {
    const button = document.getElementById(`btn-${kind}`) as HTMLButtonElement | null;
    if (button) button.disabled = view.paused || view.connection !== "open";
  }
}

export function start(): SessionClient {
  const query = new URLSearchParams(window.location.search);
  const host = query.get("host") ?? "127.0.0.1";
  const port = query.get("port") ?? "8765";
  const socket = new WebSocket(`ws://${host}:${port}`);
  const client = new SessionClient(socket);

  let repaintQueued = false;
  client.onUpdate = (view) => {
    // Coalesce bursts: paint on the next animation frame after receipt.
    if (repaintQueued) return;
    repaintQueued = true;
    requestAnimationFrame(() => {
      repaintQueued = false;
      render(view);
    });
  };

  window.addEventListener("keydown", (ev) => {
    if (ev.key in KEY_BINDINGS) client.handleKey(ev.key);
  });
  for (const kind of GESTURE_KINDS) {
    document.getElementById(`btn-${kind}`)
      ?.addEventListener("click", () => client.sendGesture(kind));
  }
  document.getElementById("btn-start")
    ?.addEventListener("click", () => client.control("start"));
  document.getElementById("btn-pause")
    ?.addEventListener("click", () => client.control("pause"));
  document.getElementById("btn-reset")
    ?.addEventListener("click", () => client.control("reset"));
  return client;
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.addEventListener("DOMContentLoaded", () => start());
}
