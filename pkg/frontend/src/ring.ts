/** Bounded trace buffer; null entries mark connection gaps. */

export class TraceRing {
  private buffer: (number | null)[] = [];

  constructor(readonly capacity: number) {
    if (capacity <= 0) throw new Error("capacity must be positive");
  }

  push(value: number | null): void {
    // collapse consecutive gap markers so reconnect loops cannot fill the ring
    if (value === null && this.buffer[this.buffer.length - 1] === null) return;
    this.buffer.push(value);
    if (this.buffer.length > this.capacity) this.buffer.shift();
  }

  get length(): number {
    return this.buffer.length;
  }

  values(): readonly (number | null)[] {
    return this.buffer;
  }

  last(): number | null {
    return this.buffer.length ? this.buffer[this.buffer.length - 1] ?? null : null;
  }
}
