/**
 * Browser bootstrap: owns the polling loop and funnels every mutation
 * through one action queue so user clicks serialise.  Server rejections are
 * rendered verbatim in the error banner; mutations are never retried
 * silently.
 */

import { ActionQueue, ApiError, SessionApi } from "./api.js";
import { buildViewModel, labelTargets } from "./viewmodel.js";
import { renderDashboard, renderErrorBanner, renderWhatIfOverlay } from "./render.js";

export interface AppConfig {
  base: string;
  sessionId: string;
  pollMs?: number;
}

export class DashboardApp {
  private api: SessionApi;
  private queue = new ActionQueue();
  private pendingLambda: number | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private root: HTMLElement, private config: AppConfig) {
    this.api = new SessionApi(config.base);
  }

  start(): void {
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.config.pollMs ?? 2000);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
  }

  async refresh(): Promise<void> {
    try {
      const state = await this.api.state(this.config.sessionId);
      const vm = buildViewModel(state, this.pendingLambda);
      this.root.innerHTML = renderDashboard(vm);
      this.wire();
    } catch (err) {
      this.showError(err);
    }
  }

  private wire(): void {
    const on = (id: string, handler: () => void) => {
      const el = this.root.querySelector<HTMLElement>(`#${id}`);
      if (el) el.addEventListener("click", handler);
    };
    on("step-1", () => this.mutate(() => this.api.advance(this.config.sessionId, 1)));
    on("step-10", () => this.mutate(() => this.api.advance(this.config.sessionId, 10)));
    on("lambda-apply", () => {
      const slider = this.root.querySelector<HTMLInputElement>("#lambda-slider");
      if (!slider) return;
      const lam = Number(slider.value);
      this.pendingLambda = lam;
      this.mutate(() => this.api.setLambda(this.config.sessionId, lam));
    });
    on("whatif", () => void this.preview());
    on("finalize", () => this.mutate(() => this.api.finalize(this.config.sessionId)));
    this.root.querySelectorAll<HTMLTableRowElement>("table.screened tr[data-handle]").forEach((row) => {
      row.addEventListener("dblclick", () => {
        const handle = row.dataset.handle;
        if (!handle) return;
        const raw = window.prompt(`label for ${handle.slice(0, 8)}`);
        if (raw === null) return;
        this.mutate(() => this.api.injectLabel(this.config.sessionId, handle, Number(raw)));
      });
    });
  }

  private mutate(action: () => Promise<unknown>): void {
    void this.queue
      .enqueue(action)
      .then(() => this.refresh())
      .catch((err) => this.showError(err));
  }

  private async preview(): Promise<void> {
    try {
      const out = await this.api.whatIf(this.config.sessionId, [0, 0.3, 1]);
      const overlay = document.createElement("div");
      overlay.innerHTML = renderWhatIfOverlay(out.previews);
      overlay.addEventListener("click", () => overlay.remove());
      this.root.appendChild(overlay);
    } catch (err) {
      this.showError(err);
    }
  }

  private showError(err: unknown): void {
    const message = err instanceof ApiError ? err.detail : String(err);
    const banner = document.createElement("div");
    banner.innerHTML = renderErrorBanner(message);
    this.root.prepend(banner);
    setTimeout(() => banner.remove(), 6000);
  }
}

export { labelTargets };
