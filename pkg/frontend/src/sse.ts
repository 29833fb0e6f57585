/**
 * Incremental parser for text/event-stream bodies read over fetch.
 *
 * Feed it decoded chunks in arrival order; it returns every event whose
 * terminating blank line has arrived. Comment lines (leading ":") and
 * unknown fields are ignored, and an event without a data field is dropped.
 */

export interface SseEvent {
  id: string | null;
  data: string;
}

export class SseParser {
  private buffer = '';
  private id: string | null = null;
  private data: string[] = [];

  feed(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const out: SseEvent[] = [];
    for (;;) {
      const nl = this.buffer.indexOf('\n');
      if (nl < 0) break;
      let line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      if (line.endsWith('\r')) line = line.slice(0, -1);

      if (line === '') {
        if (this.data.length > 0) {
          out.push({ id: this.id, data: this.data.join('\n') });
        }
        this.id = null;
        this.data = [];
        continue;
      }
      if (line.startsWith(':')) continue;

      const colon = line.indexOf(':');
      const field = colon < 0 ? line : line.slice(0, colon);
      let value = colon < 0 ? '' : line.slice(colon + 1);
      if (value.startsWith(' ')) value = value.slice(1);

      if (field === 'id') this.id = value;
      else if (field === 'data') this.data.push(value);
    }
    return out;
  }
}
