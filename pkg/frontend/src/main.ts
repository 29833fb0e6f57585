/**
 * Console wiring: prompt feed with the answer flow, interaction timeline
 * with add/edit, replay controls, and the recording indicator.
 */

import { GatewayClient } from './api.js';
import type { ClockState, IntervalRow, PromptRow, ProbeRow } from './api.js';
import { SPEED_STEPS, fmtSpeed, progressPct, clampSeek } from './clock.js';
import { isRecording } from './indicator.js';
import {
  FOLLOW_UPS,
  MODES,
  SubmitQueue,
  answerStep,
  chooseAnswer,
  currentStep,
  flowRecord,
  startFlow,
} from './prompts.js';
import type { Answer, PromptFlow } from './prompts.js';
import { describeRow, fmtMs, mergeRows, parseClock, validInterval } from './timeline.js';

const promptList = () => document.getElementById('prompt-list')!;
const activeCard = () => document.getElementById('active-card')!;
const cardTitle = () => document.getElementById('card-title')!;
const answerRow = () => document.getElementById('answer-buttons')!;
const followupBox = () => document.getElementById('followup')!;
const followupLabel = () => document.getElementById('followup-label')!;
const followupInput = () => document.getElementById('followup-input') as HTMLInputElement;
const followupNext = () => document.getElementById('followup-next')!;
const followupError = () => document.getElementById('followup-error')!;
const timelineList = () => document.getElementById('timeline-list')!;
const addStart = () => document.getElementById('add-start') as HTMLInputElement;
const addEnd = () => document.getElementById('add-end') as HTMLInputElement;
const addMode = () => document.getElementById('add-mode') as HTMLSelectElement;
const addBtn = () => document.getElementById('add-btn')!;
const editForm = () => document.getElementById('edit-form')!;
const editIdSpan = () => document.getElementById('edit-id')!;
const editStart = () => document.getElementById('edit-start') as HTMLInputElement;
const editEnd = () => document.getElementById('edit-end') as HTMLInputElement;
const editSave = () => document.getElementById('edit-save')!;
const editCancel = () => document.getElementById('edit-cancel')!;
const playPauseBtn = () => document.getElementById('play-pause')!;
const speedSelect = () => document.getElementById('speed') as HTMLSelectElement;
const seekInput = () => document.getElementById('seek-input') as HTMLInputElement;
const seekBtn = () => document.getElementById('seek-btn')!;
const clockDisplay = () => document.getElementById('clock-display')!;
const progressBar = () => document.getElementById('progress') as HTMLProgressElement;
const recDot = () => document.getElementById('rec-dot')!;
const recLabel = () => document.getElementById('rec-label')!;
const statusLine = () => document.getElementById('status')!;

const api = new GatewayClient('');
const queue = new SubmitQueue((item) => {
  setStatus(`response for ${item.promptId} was rejected by the server`);
});

let prompts = new Map<string, PromptRow>();
let rows: IntervalRow[] = [];
let probes: ProbeRow[] = [];
let clock: ClockState | null = null;
let flow: PromptFlow | null = null;
let editingId: string | null = null;

function setStatus(text: string): void {
  statusLine().textContent = text;
}

// -- prompt feed -----------------------------------------------------------

function upsertPrompt(row: PromptRow): void {
  prompts.set(row.id, row);
  renderPrompts();
}

function renderPrompts(): void {
  const box = promptList();
  box.innerHTML = '';
  const ordered = [...prompts.values()].sort((a, b) => b.issued_at - a.issued_at);
  for (const p of ordered) {
    const div = document.createElement('div');
    div.className = 'prompt-row';
    const answered = p.response !== null;
    const span = `${fmtMs(p.interval[0])} - ${fmtMs(p.interval[1])}`;
    div.textContent = `${p.kind === 'missed-query' ? 'anything since' : 'interaction'} ${span}`
      + (answered ? ` [${(p.response as { answer?: string }).answer}]` : '');
    if (!answered) {
      const btn = document.createElement('button');
      btn.textContent = 'answer';
      btn.onclick = () => openCard(p);
      div.appendChild(btn);
    }
    box.appendChild(div);
  }
}

function openCard(p: PromptRow): void {
  flow = startFlow(p.id);
  cardTitle().textContent = p.kind === 'missed-query'
    ? `Any interaction between ${fmtMs(p.interval[0])} and ${fmtMs(p.interval[1])}?`
    : `Were you in an interaction around ${fmtMs(p.interval[0])}?`;
  activeCard().classList.remove('hidden');
  answerRow().classList.remove('hidden');
  followupBox().classList.add('hidden');
  followupError().textContent = '';
}

function pickAnswer(answer: Answer): void {
  if (flow === null) return;
  flow = chooseAnswer(flow, answer);
  answerRow().classList.add('hidden');
  showStep();
}

function showStep(): void {
  if (flow === null) return;
  const step = currentStep(flow);
  if (step === null) {
    finishFlow();
    return;
  }
  followupBox().classList.remove('hidden');
  followupLabel().textContent = step.label;
  followupInput().value = '';
  followupInput().focus();
}

function submitStep(): void {
  if (flow === null) return;
  try {
    flow = answerStep(flow, followupInput().value);
    followupError().textContent = '';
  } catch (err) {
    followupError().textContent = (err as Error).message;
    return;
  }
  showStep();
}

function finishFlow(): void {
  if (flow === null || !flow.complete) return;
  const item = { promptId: flow.promptId, record: flowRecord(flow) };
  flow = null;
  activeCard().classList.add('hidden');
  queue.push(item);
  void drainQueue();
}

async function drainQueue(): Promise<void> {
  const leftover = await queue.drain(async (item) => {
    await api.respond(item.promptId, item.record);
  });
  if (leftover > 0) {
    setStatus(`${leftover} response(s) queued, retrying`);
  } else {
    setStatus('');
    await refreshPrompts();
  }
}

async function refreshPrompts(): Promise<void> {
  const out = await api.prompts(-1, 0);
  prompts = new Map(out.prompts.map((p) => [p.id, p]));
  renderPrompts();
}

// -- timeline ---------------------------------------------------------------

function renderTimeline(): void {
  const box = timelineList();
  box.innerHTML = '';
  for (const row of rows) {
    const div = document.createElement('div');
    div.className = 'timeline-row';
    div.textContent = describeRow(row);
    const btn = document.createElement('button');
    btn.textContent = 'edit';
    btn.onclick = () => {
      editingId = row.id;
      editIdSpan().textContent = row.id;
      editStart().value = fmtMs(row.start_ms);
      editEnd().value = fmtMs(row.end_ms);
      editForm().classList.remove('hidden');
    };
    div.appendChild(btn);
    box.appendChild(div);
  }
}

async function refreshTimeline(): Promise<void> {
  const out = await api.segments();
  rows = mergeRows(rows, out.segments);
  renderTimeline();
}

function dayBase(): number {
  if (clock === null) return 0;
  return clock.start_ms - (clock.start_ms % 86_400_000);
}

async function submitAdd(): Promise<void> {
  const start = parseClock(addStart().value);
  const end = parseClock(addEnd().value);
  if (start === null || end === null || !validInterval(dayBase() + start, dayBase() + end)) {
    setStatus('add: enter a valid H:MM:SS range');
    return;
  }
  await api.addInteraction(dayBase() + start, dayBase() + end, addMode().value);
  await refreshTimeline();
  setStatus('interaction added');
}

async function submitEdit(): Promise<void> {
  if (editingId === null) return;
  const start = parseClock(editStart().value);
  const end = parseClock(editEnd().value);
  if (start === null || end === null || !validInterval(dayBase() + start, dayBase() + end)) {
    setStatus('edit: enter a valid H:MM:SS range');
    return;
  }
  await api.patchInteraction(editingId, {
    start_ms: dayBase() + start,
    end_ms: dayBase() + end,
  });
  editingId = null;
  editForm().classList.add('hidden');
  await refreshTimeline();
  setStatus('interaction updated');
}

// -- replay controls and indicator -------------------------------------------

function renderClock(): void {
  if (clock === null) return;
  clockDisplay().textContent = `${fmtMs(clock.virtual_ms)} @ ${fmtSpeed(clock.speed)}`;
  progressBar().value = progressPct(clock);
  playPauseBtn().textContent = clock.playing ? 'pause' : 'play';
  const recording = isRecording(probes, clock.virtual_ms);
  recDot().className = recording ? 'on' : 'off';
  recLabel().textContent = recording ? 'recording' : 'idle';
}

async function togglePlay(): Promise<void> {
  if (clock === null) return;
  clock = await api.control(clock.playing ? 'pause' : 'play');
  renderClock();
}

async function applySpeed(): Promise<void> {
  clock = await api.control('set-speed', { speed: Number(speedSelect().value) });
  renderClock();
}

async function applySeek(): Promise<void> {
  if (clock === null) return;
  const tod = parseClock(seekInput().value);
  if (tod === null) {
    setStatus('seek: enter H:MM:SS');
    return;
  }
  clock = await api.control('seek', {
    target_ms: clampSeek(clock, dayBase() + tod),
  });
  renderClock();
  await refreshTimeline();
}

async function pollClock(): Promise<void> {
  clock = await api.clock();
  renderClock();
}

// -- startup -----------------------------------------------------------------

async function streamLoop(): Promise<void> {
  for (;;) {
    try {
      await api.streamPrompts(-1, upsertPrompt);
    } catch {
      setStatus('prompt stream dropped, reconnecting');
    }
    await new Promise((r) => setTimeout(r, 1_000));
  }
}

async function init(): Promise<void> {
  for (const s of SPEED_STEPS) {
    const opt = document.createElement('option');
    opt.value = String(s);
    opt.textContent = fmtSpeed(s);
    speedSelect().appendChild(opt);
  }
  for (const m of MODES) {
    const opt = document.createElement('option');
    opt.value = m;
    opt.textContent = m;
    addMode().appendChild(opt);
  }
  if (FOLLOW_UPS.yes.length !== FOLLOW_UPS.no.length
      || FOLLOW_UPS.no.length !== FOLLOW_UPS.maybe.length) {
    throw new Error('follow-up branches must stay the same length');
  }

  playPauseBtn().onclick = () => void togglePlay();
  speedSelect().onchange = () => void applySpeed();
  seekBtn().onclick = () => void applySeek();
  addBtn().onclick = () => void submitAdd();
  editSave().onclick = () => void submitEdit();
  editCancel().onclick = () => {
    editingId = null;
    editForm().classList.add('hidden');
  };
  (document.getElementById('answer-yes')!).onclick = () => pickAnswer('yes');
  (document.getElementById('answer-no')!).onclick = () => pickAnswer('no');
  (document.getElementById('answer-maybe')!).onclick = () => pickAnswer('maybe');
  followupNext().onclick = () => submitStep();
  followupInput().onkeydown = (ev) => {
    if (ev.key === 'Enter') submitStep();
  };

  clock = await api.clock();
  probes = await api.probes(clock.start_ms, clock.end_ms);
  await refreshTimeline();
  await refreshPrompts();
  renderClock();

  void streamLoop();
  setInterval(() => void pollClock(), 250);
  setInterval(() => {
    if (queue.length > 0) void drainQueue();
  }, 3_000);
  setInterval(() => void refreshTimeline(), 5_000);
}

void init();
