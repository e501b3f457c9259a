import { SystemNotifier } from "../src/notify.js";
import { WebSocketLike } from "../src/transport.js";

export class FakeSocket implements WebSocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: ((err: unknown) => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  open(): void {
    this.onopen?.();
  }

  drop(): void {
    this.onclose?.();
  }

  push(msg: object): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }

  sentJson(): Array<Record<string, unknown>> {
    return this.sent.map((s) => JSON.parse(s));
  }
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

/** fetch stub: responds per path-suffix matcher, records everything. */
export function fakeFetch(
  routes: Record<string, (req: RecordedRequest) => unknown>,
): { fetchFn: typeof fetch; requests: RecordedRequest[] } {
  const requests: RecordedRequest[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const req: RecordedRequest = {
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    };
    requests.push(req);
    for (const [suffix, responder] of Object.entries(routes)) {
      if (url.includes(suffix)) {
        const payload = responder(req);
        return new Response(JSON.stringify(payload), {
          status: 200,
          headers: { "content-type": "application/json" },
        });
      }
    }
    return new Response("{}", { status: 404 });
  }) as typeof fetch;
  return { fetchFn, requests };
}

export class FakeSystemNotifier implements SystemNotifier {
  permission: NotificationPermission;
  shown: Array<{ title: string; body: string }> = [];
  failNext = false;

  constructor(permission: NotificationPermission = "granted") {
    this.permission = permission;
  }

  async requestPermission(): Promise<NotificationPermission> {
    if (this.permission === "default") this.permission = "granted";
    return this.permission;
  }

  show(title: string, body: string): void {
    if (this.failNext) {
      this.failNext = false;
      throw new Error("notification center unavailable");
    }
    this.shown.push({ title, body });
  }
}

export function setVisibility(doc: Document, state: "hidden" | "visible"): void {
  Object.defineProperty(doc, "visibilityState", {
    configurable: true,
    get: () => state,
  });
  doc.dispatchEvent(new Event("visibilitychange"));
}
