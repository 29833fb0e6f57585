/**
 * Interval bookkeeping for the timeline panel: merging refetched rows,
 * validating edits before they hit the API, and clock-style formatting.
 */

import type { IntervalRow } from './api.js';

const MS_PER_DAY = 86_400_000;

export function sortRows(rows: IntervalRow[]): IntervalRow[] {
  return [...rows].sort((a, b) =>
    a.start_ms - b.start_ms || (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
}

/** Replace rows by id with their fetched versions, keeping unseen ones. */
export function mergeRows(current: IntervalRow[],
                          fetched: IntervalRow[]): IntervalRow[] {
  const byId = new Map(current.map((r) => [r.id, r]));
  for (const row of fetched) byId.set(row.id, row);
  return sortRows([...byId.values()]);
}

export function validInterval(startMs: number, endMs: number): boolean {
  return Number.isInteger(startMs) && Number.isInteger(endMs)
    && startMs >= 0 && endMs > startMs;
}

/** Millisecond timestamp to H:MM:SS time of day. */
export function fmtMs(ms: number): string {
  const tod = ((ms % MS_PER_DAY) + MS_PER_DAY) % MS_PER_DAY;
  const s = Math.floor(tod / 1000);
  const hh = Math.floor(s / 3600);
  const mm = Math.floor((s % 3600) / 60);
  const ss = s % 60;
  const pad = (n: number) => String(n).padStart(2, '0');
  return `${hh}:${pad(mm)}:${pad(ss)}`;
}

/** Parse H:MM:SS (or MM:SS, or plain seconds) into milliseconds. */
export function parseClock(text: string): number | null {
  const parts = text.trim().split(':');
  if (parts.length === 0 || parts.length > 3) return null;
  let total = 0;
  for (const part of parts) {
    if (!/^\d+$/.test(part)) return null;
    total = total * 60 + Number(part);
  }
  return total * 1000;
}

export function describeRow(row: IntervalRow): string {
  const span = `${fmtMs(row.start_ms)} - ${fmtMs(row.end_ms)}`;
  const edits = row.history && row.history.length > 0
    ? `, ${row.history.length} edit${row.history.length === 1 ? '' : 's'}`
    : '';
  return `${span} (${row.provenance}${edits})`;
}
