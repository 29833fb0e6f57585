import { expect, test } from 'vitest';

import { SseParser } from '../src/sse.js';

test('single event in one chunk', () => {
  const p = new SseParser();
  const out = p.feed('id: prompt-00001\ndata: {"a":1}\n\n');
  expect(out).toEqual([{ id: 'prompt-00001', data: '{"a":1}' }]);
});

test('events split at arbitrary chunk boundaries', () => {
  const raw = ': connected\n\nid: a\ndata: one\n\nid: b\ndata: two\n\n';
  for (let cut = 1; cut < raw.length - 1; cut++) {
    const p = new SseParser();
    const out = [...p.feed(raw.slice(0, cut)), ...p.feed(raw.slice(cut))];
    expect(out).toEqual([
      { id: 'a', data: 'one' },
      { id: 'b', data: 'two' },
    ]);
  }
});

test('byte at a time', () => {
  const raw = 'data: x\n\ndata: y\n\n';
  const p = new SseParser();
  const out: { id: string | null; data: string }[] = [];
  for (const ch of raw) out.push(...p.feed(ch));
  expect(out).toEqual([{ id: null, data: 'x' }, { id: null, data: 'y' }]);
});

test('crlf lines are handled', () => {
  const p = new SseParser();
  const out = p.feed('id: 7\r\ndata: hi\r\n\r\n');
  expect(out).toEqual([{ id: '7', data: 'hi' }]);
});

test('comment lines and unknown fields are ignored', () => {
  const p = new SseParser();
  const out = p.feed(': keepalive\nretry: 1000\nevent: prompt\ndata: v\n\n');
  expect(out).toEqual([{ id: null, data: 'v' }]);
});

test('blank line without data emits nothing', () => {
  const p = new SseParser();
  expect(p.feed(': connected\n\n')).toEqual([]);
  expect(p.feed('id: only-an-id\n\n')).toEqual([]);
});

test('multi-line data joins with newline and id resets per event', () => {
  const p = new SseParser();
  const out = p.feed('id: 1\ndata: a\ndata: b\n\ndata: c\n\n');
  expect(out).toEqual([
    { id: '1', data: 'a\nb' },
    { id: null, data: 'c' },
  ]);
});

test('field without space after colon', () => {
  const p = new SseParser();
  expect(p.feed('data:tight\n\n')).toEqual([{ id: null, data: 'tight' }]);
});

test('incomplete tail stays buffered', () => {
  const p = new SseParser();
  expect(p.feed('data: partial')).toEqual([]);
  expect(p.feed(' line\n\n')).toEqual([{ id: null, data: 'partial line' }]);
});
