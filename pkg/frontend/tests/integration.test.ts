/**
 * End-to-end round trip against a real gateway process. A scripted driver
 * stands in for the rendered page: it uses the same client, answer flow,
 * and indicator helpers main.ts wires to the DOM, so everything the UI
 * would send or show is exercised over plain HTTP and SSE.
 */

import { execFileSync, spawn } from 'node:child_process';
import type { ChildProcess } from 'node:child_process';
import * as fs from 'node:fs';
import * as net from 'node:net';
import * as os from 'node:os';
import * as path from 'node:path';

import { afterAll, beforeAll, expect, test } from 'vitest';

import { GatewayClient } from '../src/api.js';
import type { ClockState, ProbeRow, PromptRow } from '../src/api.js';
import { isRecording, toggleTimes } from '../src/indicator.js';
import {
  FOLLOW_UPS,
  answerStep,
  chooseAnswer,
  currentStep,
  flowRecord,
  startFlow,
} from '../src/prompts.js';
import type { Answer } from '../src/prompts.js';

const NINE_AM = 32_400_000;
const DURATION = 600_000;
// one plant per window keeps each detection a single 15 s probe
const PLANTS = [1, 3, 5].map((i) => ({
  start_ms: NINE_AM + i * 90_000,
  end_ms: NINE_AM + i * 90_000 + 15_000,
}));

let workDir = '';
let scenarioDir = '';
let server: ChildProcess | null = null;
let client: GatewayClient;
let probes: ProbeRow[] = [];

const streamed: PromptRow[] = [];
const streamCtl = new AbortController();
let streamDone: Promise<void> = Promise.resolve();

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.once('error', reject);
    srv.listen(0, '127.0.0.1', () => {
      const port = (srv.address() as net.AddressInfo).port;
      srv.close(() => resolve(port));
    });
  });
}

async function waitFor(cond: () => boolean, timeoutMs: number,
                       what: string): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 100));
  }
}

beforeAll(async () => {
  workDir = fs.mkdtempSync(path.join(os.tmpdir(), 'console-e2e-'));
  scenarioDir = path.join(workDir, 'scenario');
  const specPath = path.join(workDir, 'spec.json');
  fs.writeFileSync(specPath, JSON.stringify({
    duration_ms: DURATION,
    epoch_ms: NINE_AM,
    seed: 5,
    interactions: PLANTS,
  }));
  execFileSync('python3', ['-m', 'socialsense.cli', 'synth',
                           '--spec', specPath, '--out', scenarioDir]);

  const port = await freePort();
  server = spawn('python3', ['-m', 'socialsense.cli', 'serve',
                             '--port', String(port), '--replay', scenarioDir],
                 { stdio: ['ignore', 'inherit', 'inherit'] });
  client = new GatewayClient(`http://127.0.0.1:${port}`);

  const deadline = Date.now() + 60_000;
  for (;;) {
    try {
      await client.clock();
      break;
    } catch {
      if (Date.now() > deadline) throw new Error('gateway never came up');
      await new Promise((r) => setTimeout(r, 250));
    }
  }
}, 120_000);

afterAll(async () => {
  streamCtl.abort();
  await streamDone.catch(() => {});
  if (server !== null) {
    const gone = new Promise((resolve) => server!.once('exit', resolve));
    server.kill('SIGINT');
    await gone;
  }
  fs.rmSync(workDir, { recursive: true, force: true });
}, 30_000);

test('gateway comes up paused at the session start', async () => {
  const clock = await client.clock();
  expect(clock).toEqual({
    virtual_ms: NINE_AM, speed: 1, playing: false,
    start_ms: NINE_AM, end_ms: NINE_AM + DURATION,
  });
  probes = await client.probes(clock.start_ms, clock.end_ms);
  expect(probes).toHaveLength(7);
  expect(probes.map((p) => p.start_ms)).toEqual(
    [0, 1, 2, 3, 4, 5, 6].map((i) => NINE_AM + i * 90_000));
  expect(probes.every((p) => p.end_ms - p.start_ms === 15_000)).toBe(true);
  expect(probes.every((p) => p.on_body)).toBe(true);
}, 30_000);

test('recording indicator follows probe boundaries through seeks', async () => {
  const flips = toggleTimes(probes, NINE_AM, NINE_AM + DURATION);
  expect(flips).toHaveLength(14);

  const offsets = [5_000, 20_000, 95_000, 106_000];
  const want = [true, false, true, false];
  const seen: boolean[] = [];
  for (const off of offsets) {
    const state: ClockState = await client.control('seek', {
      target_ms: NINE_AM + off,
    });
    expect(state.virtual_ms).toBe(NINE_AM + off);
    seen.push(isRecording(probes, state.virtual_ms));
  }
  expect(seen).toEqual(want);
}, 30_000);

test('three detected prompts stream in while playing', async () => {
  streamDone = client.streamPrompts(-1, (row) => streamed.push(row),
                                    streamCtl.signal).catch(() => {});
  await client.control('set-speed', { speed: 600 });
  await client.control('play');
  await waitFor(() => streamed.length >= 3, 45_000, 'three prompts');
  await client.control('pause');

  const rows = [...streamed].sort((a, b) => a.issued_at - b.issued_at);
  expect(rows).toHaveLength(3);
  expect(rows.every((r) => r.kind === 'detected-interaction')).toBe(true);
  // each plant closes at the end of the following probe window
  expect(rows.map((r) => r.issued_at)).toEqual([
    NINE_AM + 195_000, NINE_AM + 375_000, NINE_AM + 555_000,
  ]);
  expect(rows.map((r) => r.interval)).toEqual(PLANTS.map(
    (p) => [p.start_ms, p.end_ms]));
}, 60_000);

test('answering yes, no, and maybe costs the same number of steps', async () => {
  const rows = [...streamed].sort((a, b) => a.issued_at - b.issued_at);
  const script: [Answer, string[]][] = [
    ['yes', ['2', 'in-person', '4']],
    ['no', ['time-wrong', 'no', 'yes']],
    ['maybe', ['?', 'virtual', '?']],
  ];
  const stepCounts: number[] = [];
  for (let i = 0; i < rows.length; i++) {
    const [answer, inputs] = script[i];
    let flow = chooseAnswer(startFlow(rows[i].id), answer);
    let steps = 0;
    while (!flow.complete) {
      expect(currentStep(flow)).not.toBeNull();
      flow = answerStep(flow, inputs[steps]);
      steps += 1;
    }
    stepCounts.push(steps);
    const out = await client.respond(rows[i].id, flowRecord(flow));
    expect(out.prompt_id).toBe(rows[i].id);
    expect(out.stored.answer).toBe(answer);
  }
  expect(stepCounts).toEqual([3, 3, 3]);
  expect(new Set(Object.values(FOLLOW_UPS).map((f) => f.length)).size).toBe(1);

  const fetched = await client.prompts(-1, 0);
  const byId = new Map(fetched.prompts.map((p) => [p.id, p]));
  expect(fetched.prompts).toHaveLength(3);
  for (let i = 0; i < rows.length; i++) {
    const row = byId.get(rows[i].id)!;
    expect(row.response).not.toBeNull();
    expect(row.response!.answer).toBe(script[i][0]);
  }
}, 30_000);

test('one added and one edited interaction land in the store', async () => {
  const id = await client.addInteraction(NINE_AM + 200_000, NINE_AM + 260_000,
                                         'in-person');
  expect(id).toBe('user-00001');
  const patched = await client.patchInteraction(id, {
    end_ms: NINE_AM + 290_000,
  });
  expect(patched.start_ms).toBe(NINE_AM + 200_000);
  expect(patched.end_ms).toBe(NINE_AM + 290_000);
  expect(patched.history).toHaveLength(1);

  const out = await client.segments();
  const added = out.segments.filter((r) => r.provenance === 'user-add');
  const auto = out.segments.filter((r) => r.provenance === 'auto');
  expect(added).toHaveLength(1);
  expect(added[0].id).toBe(id);
  expect(added[0].end_ms).toBe(NINE_AM + 290_000);
  expect(auto.map((r) => [r.start_ms, r.end_ms])).toEqual(PLANTS.map(
    (p) => [p.start_ms, p.end_ms]));
}, 30_000);

test('every mutation is durable in the gateway log', () => {
  const logPath = path.join(scenarioDir, 'annotations', 'events.jsonl');
  const kinds = fs.readFileSync(logPath, 'utf-8')
    .split('\n')
    .filter((line) => line.trim() !== '')
    .map((line) => JSON.parse(line).type as string);
  const count = (k: string) => kinds.filter((t) => t === k).length;
  expect(count('response')).toBe(3);
  expect(count('interaction-add')).toBe(1);
  expect(count('interaction-edit')).toBe(1);
  expect(count('prompt')).toBe(3);
  expect(count('segment')).toBe(3);
});
