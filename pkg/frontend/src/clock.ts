/** Replay control helpers shared by the controls panel and tests. */

import type { ClockState } from './api.js';

export const SPEED_STEPS = [1, 2, 5, 10, 30, 60, 300, 600] as const;

export function fmtSpeed(speed: number): string {
  return Number.isInteger(speed) ? `${speed}x` : `${speed.toFixed(2)}x`;
}

/** Position of the virtual clock inside the session, 0..100. */
export function progressPct(state: ClockState): number {
  const span = state.end_ms - state.start_ms;
  if (span <= 0) return 100;
  const frac = (state.virtual_ms - state.start_ms) / span;
  return Math.min(100, Math.max(0, frac * 100));
}

/**
 * Clamp a requested seek target to what the session accepts: never before
 * the session start and never behind the current clock.
 */
export function clampSeek(state: ClockState, targetMs: number): number {
  return Math.max(state.start_ms, state.virtual_ms, Math.floor(targetMs));
}
