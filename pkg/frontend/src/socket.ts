// Stream client: subscribes to the score socket, reconnects with capped
// backoff, and queues markers while disconnected so a tap is never lost.
// The socket and timer surfaces are injected for tests.

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface Scheduler {
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

export interface StreamClientOptions {
  factory?: SocketFactory;
  scheduler?: Scheduler;
  onMessage?: (raw: unknown) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
  maxBackoffMs?: number;
}

const DEFAULT_MAX_BACKOFF_MS = 4000; // reconnect well inside 5 s

export class StreamClient {
  private socket: SocketLike | null = null;
  private open = false;
  private attempts = 0;
  private queue: string[] = [];
  private closedByUser = false;
  private readonly factory: SocketFactory;
  private readonly scheduler: Scheduler;
  private readonly maxBackoff: number;

  constructor(private url: string, private opts: StreamClientOptions = {}) {
    this.factory =
      opts.factory ??
      ((u: string) => new WebSocket(u) as unknown as SocketLike);
    this.scheduler = opts.scheduler ?? {
      setTimeout: (fn, ms) => setTimeout(fn, ms),
      clearTimeout: (h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]),
    };
    this.maxBackoff = opts.maxBackoffMs ?? DEFAULT_MAX_BACKOFF_MS;
  }

  connect(): void {
    this.closedByUser = false;
    this.opts.onStatus?.("connecting");
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.attempts = 0;
      this.open = true;
      this.opts.onStatus?.("open");
      this.flush();
    };
    sock.onmessage = (ev) => {
      let doc: unknown;
      try {
        doc = JSON.parse(ev.data);
      } catch {
        doc = null; // the state layer counts the drop
      }
      this.opts.onMessage?.(doc);
    };
    sock.onclose = () => {
      this.socket = null;
      this.open = false;
      this.opts.onStatus?.("closed");
      if (!this.closedByUser) this.scheduleReconnect();
    };
    sock.onerror = () => {
      /* close follows */
    };
  }

  private scheduleReconnect(): void {
    const delay = Math.min(500 * 2 ** this.attempts, this.maxBackoff);
    this.attempts += 1;
    this.scheduler.setTimeout(() => this.connect(), delay);
  }

  private flush(): void {
    while (this.queue.length > 0 && this.socket !== null) {
      this.socket.send(this.queue.shift()!);
    }
  }

  private sendOrQueue(payload: string): void {
    if (this.socket !== null && this.open) {
      try {
        this.socket.send(payload);
        return;
      } catch {
        // fall through to the queue
      }
    }
    this.queue.push(payload);
  }

  mark(label: number | string): void {
    this.sendOrQueue(JSON.stringify({ type: "marker", label }));
  }

  sendAudio(fs: number, pcmBase64: string): void {
    this.sendOrQueue(JSON.stringify({ type: "audio", fs, pcm: pcmBase64 }));
  }

  queuedCount(): number {
    return this.queue.length;
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
  }
}
