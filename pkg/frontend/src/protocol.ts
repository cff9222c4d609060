/** Wire protocol types and validation for reaction-session/1.
 *
 * The dashboard consumes the session service exclusively through these
 * JSON envelopes; no package internals are reachable from here.
 */

export const PROTOCOL_VERSION = "reaction-session/1";

export const MESSAGE_TYPES = [
  "state", "belief", "metrics", "gesture", "control", "ack", "error",
] as const;

export type MessageType = (typeof MESSAGE_TYPES)[number];

export const GESTURE_KINDS = [
  "smile", "pout", "eyebrow_raise", "eyebrow_frown",
  "head_nod", "head_shake", "eye_roll",
] as const;

export type GestureKind = (typeof GESTURE_KINDS)[number];

export const OBJECT_KINDS = ["passenger", "roadblock", "parked_car"] as const;
export type ObjectKind = (typeof OBJECT_KINDS)[number];
export type Heading = "N" | "E" | "S" | "W";

export interface Envelope {
  type: MessageType;
  seq: number;
  payload: Record<string, unknown>;
}

export interface StatePayload {
  tick: number;
  agent: [number, number, Heading];
  objects: [number, number, ObjectKind][];
  score: number;
}

export interface BeliefPayload {
  posterior: number[];
  entropy: number;
  rankings: number[][];
  map_ranking: Record<string, number>;
}

export interface MetricsPayload {
  tick: number;
  entropy: number;
  return: number;
  tau: number | null;
  n_updates: number;
  [probe: `p${number}`]: number;
}

export class ProtocolError extends Error {}

/** Parse and validate one raw frame; throws ProtocolError on junk. */
export function parseEnvelope(raw: string): Envelope {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new ProtocolError(`malformed JSON frame: ${raw.slice(0, 80)}`);
  }
  if (typeof data !== "object" || data === null) {
    throw new ProtocolError("frame is not an object");
  }
  const obj = data as Record<string, unknown>;
  if (!MESSAGE_TYPES.includes(obj.type as MessageType)) {
    throw new ProtocolError(`unknown message type: ${String(obj.type)}`);
  }
  if (typeof obj.seq !== "number" || !Number.isInteger(obj.seq)) {
    throw new ProtocolError("missing integer seq");
  }
  if (typeof obj.payload !== "object" || obj.payload === null) {
    throw new ProtocolError("missing payload object");
  }
  return { type: obj.type as MessageType, seq: obj.seq,
           payload: obj.payload as Record<string, unknown> };
}

export function envelope(type: MessageType, seq: number,
                         payload: Record<string, unknown>): string {
  return JSON.stringify({ type, seq, payload });
}
