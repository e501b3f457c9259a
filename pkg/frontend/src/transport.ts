// Session transport: REST lifecycle calls plus the full-duplex event stream.
//
// The stream carries every interaction event upstream and receives acks,
// notifications, and document patches. While disconnected, events are
// buffered for up to 30 s and flushed on reconnect; anything older is dropped
// and surfaced to the UI so it can show a banner. Reconnects back off
// exponentially and are idempotent.

import {
  AckMsg,
  DocKind,
  DocumentBody,
  EventKind,
  EventMsg,
  ServerMsg,
  SessionConfigBody,
  paths,
  streamUrl,
} from "./protocol.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: ((err: unknown) => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export type ConnectionState = "connecting" | "connected" | "offline";

export interface StatusEvent {
  state: ConnectionState;
  droppedEvents?: number;
}

export interface SessionClientOptions {
  baseUrl: string;
  docKind?: DocKind;
  config?: SessionConfigBody;
  recipient?: string;
  webSocketFactory?: WebSocketFactory;
  fetchFn?: typeof fetch;
  now?: () => number;
  bufferTtlMs?: number;
  maxReconnectDelayMs?: number;
  scheduler?: (fn: () => void, ms: number) => unknown;
}

const BUFFER_TTL_MS = 30_000;

interface BufferedEvent {
  wallTime: number;
  msg: EventMsg;
}

export class SessionClient {
  sessionId: string | null = null;
  state: ConnectionState = "offline";
  lastAckLatencyMs: number | null = null;
  acknowledgedThreshold: number | null = null;

  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private readonly wsFactory: WebSocketFactory;
  private readonly now: () => number;
  private readonly bufferTtl: number;
  private readonly maxReconnectDelay: number;
  private readonly schedule: (fn: () => void, ms: number) => unknown;

  private socket: WebSocketLike | null = null;
  private sessionEpoch = 0; // wall time at session creation; events stamp relative to it
  private buffer: BufferedEvent[] = [];
  private pendingAckTimes: number[] = [];
  private reconnectAttempts = 0;
  private closedByUser = false;
  private messageListeners: Array<(msg: ServerMsg) => void> = [];
  private statusListeners: Array<(status: StatusEvent) => void> = [];

  constructor(private readonly options: SessionClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.wsFactory =
      options.webSocketFactory ??
      ((url) => new WebSocket(url) as unknown as WebSocketLike);
    this.now = options.now ?? (() => Date.now());
    this.bufferTtl = options.bufferTtlMs ?? BUFFER_TTL_MS;
    this.maxReconnectDelay = options.maxReconnectDelayMs ?? 10_000;
    this.schedule = options.scheduler ?? ((fn, ms) => setTimeout(fn, ms));
  }

  onMessage(fn: (msg: ServerMsg) => void): void {
    this.messageListeners.push(fn);
  }

  onStatus(fn: (status: StatusEvent) => void): void {
    this.statusListeners.push(fn);
  }

  sessionNow(): number {
    return Math.max(0, Math.round(this.now() - this.sessionEpoch));
  }

  // -- REST lifecycle -------------------------------------------------------

  async createSession(): Promise<string> {
    const resp = await this.fetchFn(this.baseUrl + paths.sessions, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        config: this.options.config ?? {},
        doc_kind: this.options.docKind ?? "text",
        recipient: this.options.recipient ?? null,
      }),
    });
    if (!resp.ok) throw new Error(`create session failed: ${resp.status}`);
    const body = (await resp.json()) as { session_id: string };
    this.sessionId = body.session_id;
    this.sessionEpoch = this.now();
    return this.sessionId;
  }

  async updateDocument(doc: DocumentBody): Promise<{ length: number }> {
    return this.put(paths.document(this.requireSession()), doc);
  }

  async setThreshold(seconds: number): Promise<number> {
    const body = await this.put<{ idle_threshold_t: number }>(
      paths.threshold(this.requireSession()),
      { idle_threshold_t: seconds },
    );
    this.acknowledgedThreshold = body.idle_threshold_t;
    return body.idle_threshold_t;
  }

  async endSession(): Promise<unknown> {
    const resp = await this.fetchFn(this.baseUrl + paths.session(this.requireSession()), {
      method: "DELETE",
    });
    if (!resp.ok) throw new Error(`end session failed: ${resp.status}`);
    this.closedByUser = true;
    this.socket?.close();
    return resp.json();
  }

  private async put<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new Error(`PUT ${path} failed: ${resp.status}`);
    return (await resp.json()) as T;
  }

  private requireSession(): string {
    if (!this.sessionId) throw new Error("no session created yet");
    return this.sessionId;
  }

  // -- stream ----------------------------------------------------------------

  connect(): void {
    if (this.state !== "offline" || this.closedByUser) return;
    this.setState("connecting");
    const socket = this.wsFactory(streamUrl(this.baseUrl, this.requireSession()));
    this.socket = socket;
    socket.onopen = () => {
      this.reconnectAttempts = 0;
      this.setState("connected");
      this.flushBuffer();
    };
    socket.onmessage = (event) => {
      let msg: ServerMsg;
      try {
        msg = JSON.parse(String(event.data)) as ServerMsg;
      } catch {
        return;
      }
      if (msg.type === "ack") this.recordAck(msg);
      for (const fn of this.messageListeners) fn(msg);
    };
    socket.onclose = () => {
      if (this.socket !== socket) return; // stale handler from a replaced socket
      this.socket = null;
      this.pendingAckTimes = [];
      this.setState("offline");
      if (!this.closedByUser) this.scheduleReconnect();
    };
    socket.onerror = () => {
      // the close handler drives reconnect; nothing extra to do here
    };
  }

  disconnect(): void {
    this.closedByUser = true;
    this.socket?.close();
  }

  private scheduleReconnect(): void {
    const delay = Math.min(1000 * 2 ** this.reconnectAttempts, this.maxReconnectDelay);
    this.reconnectAttempts += 1;
    this.schedule(() => this.connect(), delay);
  }

  private recordAck(ack: AckMsg): void {
    const sentAt = this.pendingAckTimes.shift();
    if (sentAt !== undefined) this.lastAckLatencyMs = this.now() - sentAt;
  }

  // -- events ------------------------------------------------------------------

  sendEvent(kind: EventKind, charsDelta = 0): EventMsg {
    const msg: EventMsg = {
      type: "event",
      at: this.sessionNow(),
      kind,
      chars_delta: charsDelta,
    };
    if (this.state === "connected" && this.socket) {
      this.pendingAckTimes.push(this.now());
      this.socket.send(JSON.stringify(msg));
    } else {
      this.bufferEvent(msg);
    }
    return msg;
  }

  private bufferEvent(msg: EventMsg): void {
    this.buffer.push({ wallTime: this.now(), msg });
    this.pruneBuffer();
  }

  private pruneBuffer(): void {
    const cutoff = this.now() - this.bufferTtl;
    const kept = this.buffer.filter((b) => b.wallTime >= cutoff);
    const dropped = this.buffer.length - kept.length;
    this.buffer = kept;
    if (dropped > 0) {
      for (const fn of this.statusListeners) fn({ state: this.state, droppedEvents: dropped });
    }
  }

  private flushBuffer(): void {
    this.pruneBuffer();
    const toSend = this.buffer;
    this.buffer = [];
    for (const item of toSend) {
      this.pendingAckTimes.push(this.now());
      this.socket?.send(JSON.stringify(item.msg));
    }
  }

  bufferedEventCount(): number {
    return this.buffer.length;
  }

  private setState(state: ConnectionState): void {
    this.state = state;
    for (const fn of this.statusListeners) fn({ state });
  }
}
