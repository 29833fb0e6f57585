/**
 * Recording indicator state derived from the probe schedule.
 *
 * The watch records during each probe window, so the indicator is on
 * exactly when the virtual clock sits inside an on-body probe: start
 * inclusive, end exclusive.
 */

import type { ProbeRow } from './api.js';

export function isRecording(probes: ProbeRow[], nowMs: number): boolean {
  for (const p of probes) {
    if (p.on_body && p.start_ms <= nowMs && nowMs < p.end_ms) return true;
  }
  return false;
}

/** Sorted instants inside [fromMs, toMs] where the indicator flips. */
export function toggleTimes(probes: ProbeRow[], fromMs: number,
                            toMs: number): number[] {
  const out: number[] = [];
  for (const p of probes) {
    if (!p.on_body) continue;
    if (p.start_ms >= fromMs && p.start_ms <= toMs) out.push(p.start_ms);
    if (p.end_ms >= fromMs && p.end_ms <= toMs) out.push(p.end_ms);
  }
  return out.sort((a, b) => a - b);
}
