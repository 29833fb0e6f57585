/**
 * Typed client for the annotation gateway HTTP API.
 *
 * All timestamps are integer milliseconds on the replay session's virtual
 * clock. The prompt stream is consumed by reading the fetch body directly
 * so the same code runs in the browser and under node-based tests.
 */

import { SseParser } from './sse.js';

export interface ClockState {
  virtual_ms: number;
  speed: number;
  playing: boolean;
  start_ms: number;
  end_ms: number;
}

export interface PromptRow {
  id: string;
  kind: string;
  issued_at: number;
  interval: [number, number];
  vibration_ms: number;
  response: Record<string, unknown> | null;
}

export interface IntervalRow {
  id: string;
  start_ms: number;
  end_ms: number;
  provenance: string;
  mode?: string | null;
  fs_fraction?: number | null;
  history?: { start_ms: number; end_ms: number; at: number }[];
  zero_delta?: boolean;
}

export interface ProbeRow {
  index: number;
  start_ms: number;
  end_ms: number;
  on_body: boolean;
}

export type ControlCommand = 'play' | 'pause' | 'set-speed' | 'seek';

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function asJson(res: Response): Promise<any> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return res.json();
}

export class GatewayClient {
  constructor(readonly baseUrl: string = '') {}

  private async get(path: string): Promise<any> {
    return asJson(await fetch(this.baseUrl + path));
  }

  private async send(method: string, path: string, body: unknown): Promise<any> {
    return asJson(await fetch(this.baseUrl + path, {
      method,
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    }));
  }

  clock(): Promise<ClockState> {
    return this.get('/api/replay/clock');
  }

  control(command: ControlCommand,
          extra: { speed?: number; target_ms?: number } = {}): Promise<ClockState> {
    return this.send('POST', '/api/replay/control', { command, ...extra });
  }

  async prompts(since: number, timeoutMs?: number):
      Promise<{ prompts: PromptRow[]; now: number }> {
    let path = `/api/prompts?since=${since}`;
    if (timeoutMs !== undefined) path += `&timeout_ms=${timeoutMs}`;
    return this.get(path);
  }

  async respond(promptId: string, record: Record<string, unknown>):
      Promise<{ prompt_id: string; stored: Record<string, unknown> }> {
    return this.send('POST', `/api/prompts/${promptId}/response`, record);
  }

  async addInteraction(startMs: number, endMs: number,
                       mode?: string): Promise<string> {
    const body: Record<string, unknown> = { start_ms: startMs, end_ms: endMs };
    if (mode !== undefined) body.mode = mode;
    const out = await this.send('POST', '/api/interactions', body);
    return out.id as string;
  }

  patchInteraction(id: string,
                   patch: { start_ms?: number; end_ms?: number; mode?: string }):
      Promise<IntervalRow> {
    return this.send('PATCH', `/api/interactions/${id}`, patch);
  }

  async segments(fromMs?: number, toMs?: number):
      Promise<{ segments: IntervalRow[]; now: number }> {
    const params = new URLSearchParams();
    if (fromMs !== undefined) params.set('from', String(fromMs));
    if (toMs !== undefined) params.set('to', String(toMs));
    const qs = params.toString();
    return this.get('/api/segments' + (qs ? `?${qs}` : ''));
  }

  async probes(fromMs: number, toMs: number): Promise<ProbeRow[]> {
    const out = await this.get(`/api/probes?from=${fromMs}&to=${toMs}`);
    return out.probes as ProbeRow[];
  }

  /**
   * Subscribe to the prompt stream; resolves when the stream ends or the
   * signal aborts. Each complete event is parsed as a prompt row.
   */
  async streamPrompts(since: number, onPrompt: (row: PromptRow) => void,
                      signal?: AbortSignal): Promise<void> {
    const res = await fetch(`${this.baseUrl}/api/prompts/stream?since=${since}`,
                            { signal });
    if (!res.ok || res.body === null) {
      throw new ApiError(res.status, 'prompt stream unavailable');
    }
    const reader = res.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
          onPrompt(JSON.parse(event.data) as PromptRow);
        }
      }
    } catch (err) {
      if (!(signal && signal.aborted)) throw err;
    }
  }
}
