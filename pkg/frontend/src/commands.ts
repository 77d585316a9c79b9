/** Steering commands: optimistic controls, throttling, ack reconciliation.
 *
 * Control changes apply optimistically to the UI and are sent at most ten
 * per second per control (trailing edge keeps the newest value). A success
 * ack confirms the value; an error ack or a 2 s timeout snaps the control
 * back to its last confirmed value and raises a toast. Time is injected by
 * the caller so the logic is exactly testable.
 */

import { CommandName, WireAck, WireCommand } from "./types.js";

export const THROTTLE_MS = 100; // <= 10 commands/s per control
export const ACK_TIMEOUT_MS = 2000;

export type ControlValue = number | string | null;

interface PendingCommand {
  reqId: string;
  cmd: CommandName;
  value: ControlValue;
  sentAt: number;
}

interface ControlSlot {
  confirmed: ControlValue;
  optimistic: ControlValue | null;
  queued: ControlValue | null; // newest value waiting for the throttle window
  lastSentAt: number;
}

export interface SnapbackEvent {
  cmd: CommandName;
  value: ControlValue; // the confirmed value to display again
  reason: string;
}

export class CommandManager {
  private slots = new Map<CommandName, ControlSlot>();
  private pending = new Map<string, PendingCommand>();
  private counter = 0;

  constructor(
    private readonly send: (command: WireCommand) => void,
    private readonly onSnapback: (event: SnapbackEvent) => void = () => {},
    private readonly onToast: (message: string) => void = () => {},
  ) {}

  /** The value the UI should currently display for a control. */
  displayValue(cmd: CommandName): ControlValue {
    const slot = this.slots.get(cmd);
    if (!slot) return null;
    return slot.queued ?? slot.optimistic ?? slot.confirmed;
  }

  pendingCount(): number {
    return this.pending.size;
  }

  /** Seed the confirmed value (from the hello config echo). */
  confirm(cmd: CommandName, value: ControlValue): void {
    const slot = this.ensureSlot(cmd);
    slot.confirmed = value;
  }

  private ensureSlot(cmd: CommandName): ControlSlot {
    let slot = this.slots.get(cmd);
    if (!slot) {
      slot = { confirmed: null, optimistic: null, queued: null, lastSentAt: -Infinity };
      this.slots.set(cmd, slot);
    }
    return slot;
  }

  /** A control event (slider drag step, button press) at time `now` (ms). */
  setControl(cmd: CommandName, value: ControlValue, now: number): void {
    const slot = this.ensureSlot(cmd);
    if (now - slot.lastSentAt >= THROTTLE_MS) {
      this.dispatch(cmd, value, now);
    } else {
      slot.queued = value; // trailing edge; newest value wins
    }
  }

  private dispatch(cmd: CommandName, value: ControlValue, now: number): void {
    const slot = this.ensureSlot(cmd);
    const reqId = `c${++this.counter}`;
    slot.optimistic = value;
    slot.queued = null;
    slot.lastSentAt = now;
    this.pending.set(reqId, { reqId, cmd, value, sentAt: now });
    const command: WireCommand = { cmd, req_id: reqId };
    if (value !== null) command.value = value;
    this.send(command);
  }

  handleAck(ack: WireAck): void {
    const reqId = ack.req_id;
    if (!reqId) {
      if (ack.error) this.onToast(`service: ${ack.error}`);
      return;
    }
    const entry = this.pending.get(reqId);
    if (!entry) return;
    this.pending.delete(reqId);
    const slot = this.ensureSlot(entry.cmd);
    if (ack.error !== undefined) {
      slot.optimistic = null;
      slot.queued = null;
      this.onToast(`${entry.cmd} rejected: ${ack.error}`);
      this.onSnapback({ cmd: entry.cmd, value: slot.confirmed, reason: ack.error });
      return;
    }
    slot.confirmed = entry.value;
    if (slot.optimistic === entry.value) slot.optimistic = null;
  }

  /** Drive throttling and timeouts; call a few times per second. */
  tick(now: number): void {
    for (const [cmd, slot] of this.slots) {
      if (slot.queued !== null && now - slot.lastSentAt >= THROTTLE_MS) {
        this.dispatch(cmd, slot.queued, now);
      }
    }
    for (const [reqId, entry] of [...this.pending]) {
      if (now - entry.sentAt >= ACK_TIMEOUT_MS) {
        this.pending.delete(reqId);
        const slot = this.ensureSlot(entry.cmd);
        slot.optimistic = null;
        this.onToast(`${entry.cmd} timed out waiting for the service`);
        this.onSnapback({ cmd: entry.cmd, value: slot.confirmed, reason: "timeout" });
      }
    }
  }
}
