/** WebSocket wrapper with reconnect backoff; the socket factory is
 * injectable so the whole console can run against a fake in tests. */

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SocketHandlers {
  onMessage(text: string): void;
  onStatus(status: "connecting" | "open" | "closed"): void;
}

const BACKOFF_MS = [500, 1000, 2000, 4000, 8000];

export class ConsoleSocket {
  private socket: SocketLike | null = null;
  private attempts = 0;
  private closed = false;

  constructor(
    private readonly url: string,
    private readonly handlers: SocketHandlers,
    private readonly factory: SocketFactory = (url) => new WebSocket(url) as unknown as SocketLike,
    private readonly schedule: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  connect(): void {
    if (this.closed) return;
    this.handlers.onStatus("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.handlers.onStatus("open");
    };
    socket.onmessage = (event) => {
      if (typeof event.data === "string") this.handlers.onMessage(event.data);
    };
    const onDown = () => {
      if (socket !== this.socket) return; // superseded connection
      this.socket = null;
      this.handlers.onStatus("closed");
      this.scheduleReconnect();
    };
    socket.onclose = onDown;
    socket.onerror = onDown;
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    const delay = BACKOFF_MS[Math.min(this.attempts, BACKOFF_MS.length - 1)] ?? 8000;
    this.attempts += 1;
    this.schedule(() => this.connect(), delay);
  }

  send(text: string): boolean {
    if (this.socket === null) return false;
    try {
      this.socket.send(text);
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }
}
