/** Client-side session view: the single source for everything rendered.
 *
 * Values are stored exactly as received — no smoothing, interpolation, or
 * re-derivation. Sequence-number gaps are surfaced as a warning banner
 * rather than silently tolerated.
 */
import {
  BeliefPayload, Envelope, MetricsPayload, StatePayload,
} from "./protocol.js";
import { RingBuffer } from "./ring.js";

export type ConnectionState = "connecting" | "open" | "closed";

export interface SessionInfo {
  protocol: string;
  gestures: string[];
  seed: number;
}

export class ClientSessionView {
  connection: ConnectionState = "connecting";
  session: SessionInfo | null = null;
  latestState: StatePayload | null = null;
  latestBelief: BeliefPayload | null = null;
  paused = true;
  finished = false;
  warnings: string[] = [];
  errors: string[] = [];
  lastServerSeq = -1;
  seqGaps = 0;

  readonly beliefs: RingBuffer<BeliefPayload>;
  readonly metrics: RingBuffer<MetricsPayload>;

  constructor(capacity = 2048) {
    this.beliefs = new RingBuffer(capacity);
    this.metrics = new RingBuffer(capacity);
  }

  /** True when the seq-gap warning banner should be shown. */
  get gapBanner(): boolean {
    return this.seqGaps > 0;
  }

  ingest(msg: Envelope): void {
    if (this.lastServerSeq >= 0 && msg.seq !== this.lastServerSeq + 1) {
      this.seqGaps += 1;
      this.warnings.push(
        `sequence gap: expected ${this.lastServerSeq + 1}, got ${msg.seq}`);
    }
    this.lastServerSeq = msg.seq;

    switch (msg.type) {
      case "state":
        this.latestState = msg.payload as unknown as StatePayload;
        break;
      case "belief": {
        const belief = msg.payload as unknown as BeliefPayload;
        this.latestBelief = belief;
        this.beliefs.push(belief);
        break;
      }
      case "metrics":
        this.metrics.push(msg.payload as unknown as MetricsPayload);
        break;
      case "control":
        this.onControl(msg.payload);
        break;
      case "ack":
        if (msg.payload.command === "start") this.paused = false;
        if (msg.payload.command === "pause") this.paused = true;
        if (msg.payload.command === "reset" || msg.payload.command === "seed") {
          this.paused = true;
          this.finished = false;
        }
        break;
      case "error":
        this.errors.push(String(msg.payload.reason ?? "unknown server error"));
        break;
      default:
        break;
    }
  }

  private onControl(payload: Record<string, unknown>): void {
    if (payload.event === "hello") {
      this.session = {
        protocol: String(payload.protocol),
        gestures: (payload.gestures as string[]) ?? [],
        seed: Number(payload.seed),
      };
    } else if (payload.event === "finished") {
      this.finished = true;
      this.paused = true;
    }
  }
}
