/** Pure grid-view model for the 8x8 world; painting is a thin layer on top
 * so rendering is testable without a browser. */
import { Heading, ObjectKind, StatePayload } from "./protocol.js";

export const GRID_SIZE = 8;

export const HEADING_GLYPHS: Record<Heading, string> = {
  N: "▲", E: "▶", S: "▼", W: "◀",
};

export const OBJECT_GLYPHS: Record<ObjectKind, string> = {
  passenger: "☺",   // the thing worth picking up
  roadblock: "⚠",
  parked_car: "⛔",
};

export interface Cell {
  glyph: string;
  kind: ObjectKind | "agent" | "empty";
}

export interface GridView {
  tick: number;
  score: number;
  cells: Cell[][]; // [row][col]
  agent: { row: number; col: number; heading: Heading; glyph: string };
  counts: Record<ObjectKind, number>;
}

export function renderWorld(state: StatePayload): GridView {
  const cells: Cell[][] = Array.from({ length: GRID_SIZE }, () =>
    Array.from({ length: GRID_SIZE }, () => ({ glyph: "·", kind: "empty" as const })));
  const counts: Record<ObjectKind, number> = {
    passenger: 0, roadblock: 0, parked_car: 0,
  };
  for (const [row, col, kind] of state.objects) {
    cells[row][col] = { glyph: OBJECT_GLYPHS[kind], kind };
    counts[kind] += 1;
  }
  const [row, col, heading] = state.agent;
  const glyph = HEADING_GLYPHS[heading];
  cells[row][col] = { glyph, kind: "agent" };
  return { tick: state.tick, score: state.score, cells,
           agent: { row, col, heading, glyph }, counts };
}

export function gridToText(view: GridView): string {
  return view.cells.map((row) => row.map((c) => c.glyph).join(" ")).join("\n");
}
