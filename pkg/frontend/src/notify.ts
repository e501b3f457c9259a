// System notifications with an in-page toast fallback.
//
// The browser Notification API needs permission; when it is missing or
// denied we fall back to toast-only mode and note it once. The title is
// always the server-sent headline (the opening of the generated content).

export interface SystemNotifier {
  permission: NotificationPermission;
  requestPermission(): Promise<NotificationPermission>;
  show(title: string, body: string): void;
}

export function browserNotifier(): SystemNotifier | null {
  if (typeof Notification === "undefined") return null;
  return {
    get permission() {
      return Notification.permission;
    },
    requestPermission: () => Notification.requestPermission(),
    show: (title, body) => {
      new Notification(title, { body });
    },
  };
}

export class Notifier {
  toastOnly = false;

  constructor(
    private readonly toastArea: HTMLElement,
    private readonly system: SystemNotifier | null,
    private readonly toastTtlMs = 6000,
  ) {}

  async init(): Promise<void> {
    if (this.system === null) {
      this.toastOnly = true;
      return;
    }
    if (this.system.permission === "default") {
      await this.system.requestPermission();
    }
    if (this.system.permission !== "granted") {
      this.toastOnly = true;
      console.info("notification permission not granted; toast-only mode");
    }
  }

  show(headline: string, body: string): void {
    if (!this.toastOnly && this.system) {
      try {
        this.system.show(headline, body);
        return;
      } catch (err) {
        console.warn("system notification failed, falling back to toast", err);
        this.toastOnly = true;
      }
    }
    this.toast(headline);
  }

  private toast(headline: string): void {
    const el = this.toastArea.ownerDocument.createElement("div");
    el.className = "toast";
    el.textContent = headline;
    this.toastArea.appendChild(el);
    setTimeout(() => el.remove(), this.toastTtlMs);
  }
}
