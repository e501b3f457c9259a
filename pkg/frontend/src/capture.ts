// Maps raw DOM activity onto the service's interaction event kinds.
//
// Every local edit both mutates the visible document and emits an event;
// character deltas come from edit diffs (new length minus old length), so a
// selection replaced by one character reports the net change. Pointer moves
// are throttled to at most one event per 500 ms; the server treats any
// arriving event as activity regardless.

import { EventKind } from "./protocol.js";

export interface EventSink {
  sendEvent(kind: EventKind, charsDelta?: number): unknown;
}

export const POINTER_THROTTLE_MS = 500;

export class InteractionCapture {
  private lastPointerMove = -Infinity;
  private detachFns: Array<() => void> = [];

  constructor(
    private readonly sink: EventSink,
    private readonly doc: Document,
    private readonly win: Window & typeof globalThis,
    private readonly now: () => number = () => Date.now(),
  ) {}

  emitKeyDelta(charsDelta: number): void {
    this.sink.sendEvent("key", charsDelta);
  }

  attach(): void {
    const on = (
      target: Document | Window,
      name: string,
      handler: (ev: Event) => void,
      options?: AddEventListenerOptions,
    ) => {
      target.addEventListener(name, handler, options);
      this.detachFns.push(() => target.removeEventListener(name, handler, options));
    };

    on(this.doc, "pointermove", () => this.onPointerMove(), { passive: true });
    on(this.doc, "mousemove", () => this.onPointerMove(), { passive: true });
    on(this.doc, "click", () => this.sink.sendEvent("click"), { capture: true, passive: true });
    on(this.doc, "scroll", () => this.sink.sendEvent("scroll"), { capture: true, passive: true });
    on(this.win, "focus", () => this.sink.sendEvent("focus"));
    on(this.win, "blur", () => this.sink.sendEvent("blur"));
    on(this.doc, "visibilitychange", () => {
      this.sink.sendEvent(this.doc.visibilityState === "hidden" ? "page_hidden" : "page_visible");
    });
  }

  detach(): void {
    for (const fn of this.detachFns) fn();
    this.detachFns = [];
  }

  private onPointerMove(): void {
    const t = this.now();
    if (t - this.lastPointerMove < POINTER_THROTTLE_MS) return;
    this.lastPointerMove = t;
    this.sink.sendEvent("pointer_move");
  }
}

/** Tracks an editable's content length and reports signed character deltas. */
export class EditDiffTracker {
  private lastLength: number;

  constructor(initial: string) {
    this.lastLength = initial.length;
  }

  diff(current: string): number {
    const delta = current.length - this.lastLength;
    this.lastLength = current.length;
    return delta;
  }
}
