// The editor view: a plain-text area or a slide outline, the generated-content
// side pane, the threshold slider, connection status, and the debug overlay.
//
// Two hard rules from the interaction design:
//   * generated content is only ever DISPLAYED (side pane, outline entry
//     marked "generated"); it is never written into the user's text
//   * the threshold slider shows the server-acknowledged value, not the
//     locally dragged one, so the UI can't lie about what is in force

import { EditDiffTracker, InteractionCapture } from "./capture.js";
import { Notifier, SystemNotifier } from "./notify.js";
import {
  DocumentBody,
  NotificationMsg,
  PatchMsg,
  ServerMsg,
  SlideShape,
} from "./protocol.js";
import { SessionClient, StatusEvent } from "./transport.js";

export type EditorMode = "text" | "slides";

export interface EditorOptions {
  root: HTMLElement;
  client: SessionClient;
  systemNotifier: SystemNotifier | null;
  mode: EditorMode;
  documentDebounceMs?: number;
}

export class EditorView {
  readonly root: HTMLElement;
  readonly client: SessionClient;
  readonly capture: InteractionCapture;

  textarea!: HTMLTextAreaElement;
  outlineList!: HTMLOListElement;
  sidePane!: HTMLElement;
  banner!: HTMLElement;
  latencyOverlay!: HTMLElement;
  statusDot!: HTMLElement;
  slider!: HTMLInputElement;
  sliderLabel!: HTMLElement;
  toastArea!: HTMLElement;

  pendingNotification: NotificationMsg | null = null;
  slides: SlideShape[] = [];
  notifier!: Notifier;

  private readonly systemNotifier: SystemNotifier | null;
  private readonly mode: EditorMode;
  private readonly debounceMs: number;
  private tracker = new EditDiffTracker("");
  private pushTimer: ReturnType<typeof setTimeout> | null = null;
  private documentDirty = false;
  private inflightPush: Promise<unknown> = Promise.resolve();

  constructor(options: EditorOptions) {
    this.root = options.root;
    this.client = options.client;
    this.systemNotifier = options.systemNotifier;
    this.mode = options.mode;
    this.debounceMs = options.documentDebounceMs ?? 800;
    const doc = this.root.ownerDocument;
    const win = doc.defaultView as Window & typeof globalThis;
    this.capture = new InteractionCapture(this.client, doc, win);
  }

  mount(): void {
    const doc = this.root.ownerDocument;
    this.root.innerHTML = `
      <header class="bar">
        <span class="status-dot" data-state="offline"></span>
        <span class="latency" title="round-trip ack latency"></span>
        <label class="threshold">
          quiet time before a nudge: <span class="threshold-value">45</span>s
          <input type="range" min="10" max="120" step="5" value="45">
        </label>
      </header>
      <div class="banner" hidden></div>
      <main class="work">
        <section class="document">
          <textarea class="editor-text" placeholder="Start writing..." hidden></textarea>
          <div class="outline" hidden>
            <ol class="slides"></ol>
            <button type="button" class="add-slide">+ slide</button>
          </div>
        </section>
        <aside class="pane" hidden>
          <h2 class="pane-title"></h2>
          <div class="pane-body"></div>
        </aside>
      </main>
      <div class="toasts"></div>
    `;
    this.textarea = this.root.querySelector(".editor-text") as HTMLTextAreaElement;
    this.outlineList = this.root.querySelector(".slides") as HTMLOListElement;
    this.sidePane = this.root.querySelector(".pane") as HTMLElement;
    this.banner = this.root.querySelector(".banner") as HTMLElement;
    this.latencyOverlay = this.root.querySelector(".latency") as HTMLElement;
    this.statusDot = this.root.querySelector(".status-dot") as HTMLElement;
    this.slider = this.root.querySelector("input[type=range]") as HTMLInputElement;
    this.sliderLabel = this.root.querySelector(".threshold-value") as HTMLElement;
    this.toastArea = this.root.querySelector(".toasts") as HTMLElement;
    this.notifier = new Notifier(this.toastArea, this.systemNotifier);

    if (this.mode === "text") {
      this.textarea.hidden = false;
      this.textarea.addEventListener("input", () => this.onTextEdited());
    } else {
      (this.root.querySelector(".outline") as HTMLElement).hidden = false;
      const addButton = this.root.querySelector(".add-slide") as HTMLButtonElement;
      addButton.addEventListener("click", () => {
        this.appendSlide({ title: "", body_items: [] }, false);
        this.markDirty();
      });
    }

    this.slider.addEventListener("change", () => this.onSliderChanged());
    this.capture.attach();
    this.root.ownerDocument.addEventListener("visibilitychange", () => {
      // push the latest content before the worker disappears
      if (this.root.ownerDocument.visibilityState === "hidden") {
        void this.flushPendingDocument();
      }
    });
    this.client.onMessage((msg) => this.handleMessage(msg));
    this.client.onStatus((status) => this.handleStatus(status));
    doc.defaultView?.addEventListener("beforeunload", () => this.capture.detach());
  }

  // -- user edits -------------------------------------------------------------

  private onTextEdited(): void {
    const delta = this.tracker.diff(this.textarea.value);
    this.capture.emitKeyDelta(delta);
    this.markDirty();
  }

  private markDirty(): void {
    this.documentDirty = true;
    if (this.pushTimer !== null) clearTimeout(this.pushTimer);
    this.pushTimer = setTimeout(() => void this.flushPendingDocument(), this.debounceMs);
  }

  documentBody(): DocumentBody {
    if (this.mode === "text") {
      return { doc_kind: "text", text: this.textarea.value };
    }
    return { doc_kind: "slide_deck", slides: this.collectSlides() };
  }

  async flushPendingDocument(): Promise<void> {
    if (this.pushTimer !== null) {
      clearTimeout(this.pushTimer);
      this.pushTimer = null;
    }
    if (!this.documentDirty) {
      await this.inflightPush;
      return;
    }
    this.documentDirty = false;
    this.inflightPush = this.client
      .updateDocument(this.documentBody())
      .catch((err) => {
        console.warn("document push failed", err);
        this.documentDirty = true;
      });
    await this.inflightPush;
  }

  private onSliderChanged(): void {
    const requested = Number(this.slider.value);
    this.client
      .setThreshold(requested)
      .then((acked) => {
        this.slider.value = String(acked);
        this.sliderLabel.textContent = String(acked);
      })
      .catch(() => {
        const fallback = this.client.acknowledgedThreshold ?? 45;
        this.slider.value = String(fallback);
        this.sliderLabel.textContent = String(fallback);
        this.showBanner("threshold change failed; keeping the server value");
      });
  }

  // -- server messages -----------------------------------------------------------

  handleMessage(msg: ServerMsg): void {
    switch (msg.type) {
      case "ack":
        if (this.client.lastAckLatencyMs !== null) {
          this.latencyOverlay.textContent = `${this.client.lastAckLatencyMs} ms`;
        }
        break;
      case "notification":
        this.pendingNotification = msg;
        this.notifier.show(msg.headline, msg.body);
        if (msg.payload_kind === "continuation") {
          // display only: the worker's own content is never modified
          this.showPane("Generated continuation", msg.body);
        }
        break;
      case "patch":
        this.applyPatch(msg);
        break;
      case "error":
        this.showBanner(`${msg.error}${msg.detail ? `: ${msg.detail}` : ""}`);
        break;
      case "pong":
        break;
    }
  }

  private applyPatch(msg: PatchMsg): void {
    if (this.mode !== "slides") return;
    this.appendSlide(msg.slide, msg.generated);
    const preview = [msg.slide.title, ...msg.slide.body_items.map((b) => `- ${b}`)]
      .concat(msg.slide.image_caption ? [`[Image: ${msg.slide.image_caption}]`] : [])
      .join("\n");
    this.showPane("Generated slide", preview);
  }

  handleStatus(status: StatusEvent): void {
    this.statusDot.dataset.state = status.state;
    if (status.droppedEvents) {
      this.showBanner(
        `${status.droppedEvents} event(s) were older than 30 s and were dropped while offline`,
      );
    }
  }

  // -- outline -------------------------------------------------------------------

  appendSlide(slide: SlideShape, generated: boolean): void {
    this.slides.push(slide);
    const doc = this.root.ownerDocument;
    const item = doc.createElement("li");
    item.className = generated ? "slide generated" : "slide";
    const title = doc.createElement("input");
    title.className = "slide-title";
    title.value = slide.title;
    const bullets = doc.createElement("textarea");
    bullets.className = "slide-bullets";
    bullets.value = slide.body_items.join("\n");
    item.appendChild(title);
    item.appendChild(bullets);
    if (generated) {
      const badge = doc.createElement("span");
      badge.className = "badge";
      badge.textContent = "generated";
      item.appendChild(badge);
    }
    if (slide.image_caption) {
      const caption = doc.createElement("div");
      caption.className = "slide-caption";
      caption.textContent = `[Image: ${slide.image_caption}]`;
      item.appendChild(caption);
    }
    const titleTracker = new EditDiffTracker(title.value);
    title.addEventListener("input", () => {
      this.capture.emitKeyDelta(titleTracker.diff(title.value));
      this.markDirty();
    });
    const bulletTracker = new EditDiffTracker(bullets.value);
    bullets.addEventListener("input", () => {
      this.capture.emitKeyDelta(bulletTracker.diff(bullets.value));
      this.markDirty();
    });
    this.outlineList.appendChild(item);
  }

  collectSlides(): SlideShape[] {
    const out: SlideShape[] = [];
    this.outlineList.querySelectorAll("li.slide").forEach((item, i) => {
      const title = (item.querySelector(".slide-title") as HTMLInputElement).value;
      const bullets = (item.querySelector(".slide-bullets") as HTMLTextAreaElement).value;
      const original = this.slides[i];
      out.push({
        title,
        body_items: bullets ? bullets.split("\n") : [],
        image_caption: original?.image_caption,
      });
    });
    return out;
  }

  // -- chrome ----------------------------------------------------------------------

  private showPane(title: string, body: string): void {
    this.sidePane.hidden = false;
    (this.sidePane.querySelector(".pane-title") as HTMLElement).textContent = title;
    (this.sidePane.querySelector(".pane-body") as HTMLElement).textContent = body;
  }

  showBanner(text: string): void {
    this.banner.hidden = false;
    this.banner.textContent = text;
  }
}
