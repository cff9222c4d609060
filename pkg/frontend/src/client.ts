/** Protocol client: owns the socket, the outgoing seq counter, and gesture
 * acknowledgement tracking (one retry on timeout, then a surfaced warning).
 *
 * The socket is injected through a browser-WebSocket-shaped interface so the
 * same client runs against the real service, the `ws` package in tests, or a
 * fake. Incoming messages update the view synchronously on receipt;
 * `onUpdate` fires afterwards so the UI can schedule a repaint in the same
 * animation frame.
 */
import { envelope, GestureKind, parseEnvelope, ProtocolError } from "./protocol.js";
import { gestureForKey } from "./keys.js";
import { ClientSessionView } from "./view.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  // Callback parameter types use `any` so both the browser WebSocket and
  // the `ws` package (whose event types differ) satisfy the interface.
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onmessage: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onclose: ((ev: any) => void) | null;
}

export interface ClientOptions {
  ackTimeoutMs?: number;
  now?: () => number;
}

interface PendingGesture {
  kind: GestureKind;
  clientTs: number;
  retried: boolean;
  timer: ReturnType<typeof setTimeout>;
}

export class SessionClient {
  readonly view: ClientSessionView;
  onUpdate: ((view: ClientSessionView) => void) | null = null;

  private outSeq = 0;
  private readonly pending = new Map<number, PendingGesture>();
  private readonly ackTimeoutMs: number;
  private readonly now: () => number;

  constructor(private readonly socket: SocketLike,
              view?: ClientSessionView, options: ClientOptions = {}) {
    this.view = view ?? new ClientSessionView();
    this.ackTimeoutMs = options.ackTimeoutMs ?? 2000;
    this.now = options.now ?? (() => Date.now());
    socket.onopen = () => {
      this.view.connection = "open";
      this.notify();
    };
    socket.onclose = () => {
      this.view.connection = "closed";
      this.notify();
    };
    socket.onmessage = (ev) => this.receive(String(ev.data));
  }

  /** Emit a gesture reaction; no-op while paused or disconnected. */
  sendGesture(kind: GestureKind): boolean {
    if (this.view.paused || this.view.connection !== "open") {
      return false;
    }
    this.emitGesture(kind, this.now(), false);
    return true;
  }

  handleKey(key: string): boolean {
    const kind = gestureForKey(key);
    return kind === null ? false : this.sendGesture(kind);
  }

  control(command: "start" | "pause" | "reset" | "seed", value?: number): void {
    const payload: Record<string, unknown> = { command };
    if (value !== undefined) payload.value = value;
    this.send("control", payload);
  }

  close(): void {
    for (const p of this.pending.values()) clearTimeout(p.timer);
    this.pending.clear();
    this.socket.close();
  }

  private emitGesture(kind: GestureKind, clientTs: number, retried: boolean): void {
    const seq = this.send("gesture", { kind, client_ts: clientTs });
    const timer = setTimeout(() => this.onAckTimeout(seq), this.ackTimeoutMs);
    this.pending.set(seq, { kind, clientTs, retried, timer });
  }

  private onAckTimeout(seq: number): void {
    const p = this.pending.get(seq);
    if (!p) return;
    this.pending.delete(seq);
    if (!p.retried) {
      this.emitGesture(p.kind, p.clientTs, true);
    } else {
      this.view.warnings.push(`gesture ${p.kind} unacknowledged after retry`);
      this.notify();
    }
  }

  private send(type: "gesture" | "control", payload: Record<string, unknown>): number {
    const seq = this.outSeq;
    this.outSeq += 1;
    this.socket.send(envelope(type, seq, payload));
    return seq;
  }

  private receive(raw: string): void {
    try {
      const msg = parseEnvelope(raw);
      if (msg.type === "ack" && typeof msg.payload.of_seq === "number") {
        const p = this.pending.get(msg.payload.of_seq);
        if (p) {
          clearTimeout(p.timer);
          this.pending.delete(msg.payload.of_seq);
        }
      }
      this.view.ingest(msg);
    } catch (err) {
      if (err instanceof ProtocolError) {
        // Keep the last good frame; just surface the toast.
        this.view.errors.push(err.message);
      } else {
        throw err;
      }
    }
    this.notify();
  }

  private notify(): void {
    if (this.onUpdate) this.onUpdate(this.view);
  }
}
