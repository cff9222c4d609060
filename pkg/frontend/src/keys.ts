/** Keyboard shortcuts for the 7 gesture reactions. */
import { GestureKind } from "./protocol.js";

export const KEY_BINDINGS: Record<string, GestureKind> = {
  s: "smile",
  p: "pout",
  r: "eyebrow_raise",
  f: "eyebrow_frown",
  n: "head_nod",
  h: "head_shake",
  e: "eye_roll",
};

export function gestureForKey(key: string): GestureKind | null {
  return KEY_BINDINGS[key.toLowerCase()] ?? null;
}
