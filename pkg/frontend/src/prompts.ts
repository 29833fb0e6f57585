/**
 * Answer flow for a prompt card.
 *
 * Picking yes, no, or maybe starts a fixed sequence of follow-up steps;
 * every branch has the same number of steps so no answer is cheaper to
 * give than another. Values are validated as they are entered and the
 * finished flow serializes to the response record the gateway expects.
 */

export type Answer = 'yes' | 'no' | 'maybe';

export type FieldKind = 'people' | 'mode' | 'rating' | 'reason' | 'speech';

export interface FollowUp {
  field: string;
  kind: FieldKind;
  label: string;
}

export const MODES = ['in-person', 'virtual', 'hybrid'] as const;
export const NO_REASONS = ['time-wrong', 'no-interaction'] as const;

export const FOLLOW_UPS: Record<Answer, FollowUp[]> = {
  yes: [
    { field: 'people_count', kind: 'people', label: 'How many people? (or ?)' },
    { field: 'mode', kind: 'mode', label: 'In person, virtual, or hybrid?' },
    { field: 'rating', kind: 'rating', label: 'Rate it 1-5 (or ?)' },
  ],
  maybe: [
    { field: 'people_count', kind: 'people', label: 'How many people? (or ?)' },
    { field: 'mode', kind: 'mode', label: 'In person, virtual, or hybrid?' },
    { field: 'rating', kind: 'rating', label: 'Rate it 1-5 (or ?)' },
  ],
  no: [
    { field: 'reason', kind: 'reason', label: 'Wrong time, or no interaction?' },
    { field: 'device_speech', kind: 'speech', label: 'Speech from a device? (yes/no)' },
    { field: 'nearby_speech', kind: 'speech', label: 'People talking nearby? (yes/no)' },
  ],
};

export interface PromptFlow {
  promptId: string;
  answer: Answer | null;
  step: number;
  values: Record<string, unknown>;
  complete: boolean;
}

export function startFlow(promptId: string): PromptFlow {
  return { promptId, answer: null, step: 0, values: {}, complete: false };
}

export function chooseAnswer(flow: PromptFlow, answer: Answer): PromptFlow {
  if (flow.answer !== null) throw new Error('answer already chosen');
  return { ...flow, answer };
}

export function currentStep(flow: PromptFlow): FollowUp | null {
  if (flow.answer === null || flow.complete) return null;
  return FOLLOW_UPS[flow.answer][flow.step];
}

function parseValue(kind: FieldKind, raw: string): unknown {
  const text = raw.trim();
  switch (kind) {
    case 'people': {
      if (text === '?') return '?';
      const n = Number(text);
      if (!Number.isInteger(n) || n < 1) {
        throw new Error('enter a whole number of people, at least 1, or ?');
      }
      return n;
    }
    case 'rating': {
      if (text === '?') return '?';
      const n = Number(text);
      if (!Number.isInteger(n) || n < 1 || n > 5) {
        throw new Error('enter a rating from 1 to 5, or ?');
      }
      return n;
    }
    case 'mode': {
      if (!(MODES as readonly string[]).includes(text)) {
        throw new Error(`mode must be one of ${MODES.join(', ')}`);
      }
      return text;
    }
    case 'reason': {
      if (!(NO_REASONS as readonly string[]).includes(text)) {
        throw new Error(`reason must be one of ${NO_REASONS.join(', ')}`);
      }
      return text;
    }
    case 'speech': {
      if (text === 'yes' || text === 'true') return true;
      if (text === 'no' || text === 'false') return false;
      throw new Error('answer yes or no');
    }
  }
}

export function answerStep(flow: PromptFlow, raw: string): PromptFlow {
  const step = currentStep(flow);
  if (step === null) throw new Error('no follow-up pending');
  const values = { ...flow.values, [step.field]: parseValue(step.kind, raw) };
  const steps = FOLLOW_UPS[flow.answer as Answer];
  const next = flow.step + 1;
  return { ...flow, values, step: next, complete: next >= steps.length };
}

export function flowRecord(flow: PromptFlow): Record<string, unknown> {
  if (!flow.complete || flow.answer === null) {
    throw new Error('flow is not finished');
  }
  return { answer: flow.answer, ...flow.values };
}

/**
 * Holds finished responses that failed to send (server down, network blip)
 * and retries them in order. Items that fail again stay queued; items the
 * server rejects outright (4xx) are dropped through the onReject callback
 * since retrying cannot fix them.
 */
export interface QueuedResponse {
  promptId: string;
  record: Record<string, unknown>;
}

export class SubmitQueue {
  private items: QueuedResponse[] = [];

  constructor(private readonly onReject?: (item: QueuedResponse, err: unknown) => void) {}

  get length(): number {
    return this.items.length;
  }

  push(item: QueuedResponse): void {
    this.items.push(item);
  }

  async drain(send: (item: QueuedResponse) => Promise<void>): Promise<number> {
    const pending = this.items;
    this.items = [];
    for (let i = 0; i < pending.length; i++) {
      const item = pending[i];
      try {
        await send(item);
      } catch (err) {
        const status = (err as { status?: number }).status;
        if (status !== undefined && status >= 400 && status < 500) {
          if (this.onReject) this.onReject(item, err);
          continue;
        }
        // transient failure: keep this and the rest for the next drain
        this.items = pending.slice(i).concat(this.items);
        break;
      }
    }
    return this.items.length;
  }
}
