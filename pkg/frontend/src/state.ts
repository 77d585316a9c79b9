/** Console state: latest frame, metric traces, connection and error status.
 *
 * One instance is fed by the socket handler (single-threaded event loop)
 * and read by the render loop through the frame mailbox. A schema-mismatch
 * message raises the banner and keeps the last good frame on screen; it
 * never throws out of the handler.
 */

import { Mailbox } from "./mailbox.js";
import { droppedCount, SchemaMismatch, validateFrame } from "./schema.js";
import { TraceRing } from "./ring.js";
import { ServerMessage, WireAck, WireFrame, WireHello } from "./types.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

const TRACE_CAPACITY = 300;

export interface ConsoleStats {
  framesReceived: number;
  framesRendered: number;
  schemaErrors: number;
  serviceDrops: number;
  staleIgnored: number;
}

export class ConsoleState {
  latest: WireFrame | null = null;
  hello: WireHello | null = null;
  connection: ConnectionStatus = "connecting";
  banner: string | null = null;
  readonly mailbox = new Mailbox<WireFrame>();
  readonly fidelity = new TraceRing(TRACE_CAPACITY);
  readonly purity = new TraceRing(TRACE_CAPACITY);
  readonly concurrence = new TraceRing(TRACE_CAPACITY);
  readonly stats: ConsoleStats = {
    framesReceived: 0,
    framesRendered: 0,
    schemaErrors: 0,
    serviceDrops: 0,
    staleIgnored: 0,
  };

  constructor(private readonly onAck?: (ack: WireAck) => void) {}

  /** Handle one socket message; never throws. */
  handleMessage(raw: string): void {
    let payload: unknown;
    try {
      payload = JSON.parse(raw);
    } catch {
      this.banner = "unparseable message from service";
      this.stats.schemaErrors += 1;
      return;
    }
    const type = (payload as Record<string, unknown> | null)?.type;
    if (type === "hello") {
      this.hello = payload as WireHello;
      return;
    }
    if (type === "ack") {
      this.onAck?.(payload as WireAck);
      return;
    }
    try {
      const frame = validateFrame(payload);
      this.acceptFrame(frame);
    } catch (err) {
      if (err instanceof SchemaMismatch) {
        this.banner = `schema mismatch: ${err.message}`;
        this.stats.schemaErrors += 1;
        return;
      }
      throw err;
    }
  }

  private acceptFrame(frame: WireFrame): void {
    if (this.latest !== null && frame.seq <= this.latest.seq) {
      // never move backwards: a stale frame is ignored, not displayed
      this.stats.staleIgnored += 1;
      return;
    }
    this.latest = frame;
    this.stats.framesReceived += 1;
    this.stats.serviceDrops += droppedCount(frame);
    this.banner = null;
    this.fidelity.push(frame.fidelity);
    this.purity.push(frame.purity);
    this.concurrence.push(frame.concurrence);
    this.mailbox.put(frame);
  }

  /** The render loop calls this once per animation tick. */
  takeForRender(): WireFrame | null {
    const frame = this.mailbox.take();
    if (frame !== null) this.stats.framesRendered += 1;
    return frame;
  }

  setConnection(status: ConnectionStatus): void {
    const wasOpen = this.connection === "open";
    this.connection = status;
    if (status === "open") {
      this.banner = null;
    } else if (wasOpen) {
      // mark the gap once so traces show the outage
      this.fidelity.push(null);
      this.purity.push(null);
      this.concurrence.push(null);
    }
  }
}
