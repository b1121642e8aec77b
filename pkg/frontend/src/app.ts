/**
 * DOM wiring: renders the session dashboard and the current task, drives the
 * load -> edit -> validate -> submit -> auto-load-next workflow, and handles
 * keyboard-first labeling (digits pick a label, arrows move the cursor,
 * Enter submits).
 */

import { ApiClient } from "./api.js";
import { Dashboard } from "./dashboard.js";
import { TaskEditor } from "./taskEditor.js";

export interface AppOptions {
  /** Entity types to always offer in the label picker. */
  entityTypes?: readonly string[];
  /** Dashboard poll interval in ms (0 disables the timer; poll manually). */
  pollIntervalMs?: number;
}

export class AnnotatorApp {
  readonly dashboard = new Dashboard();
  editor: TaskEditor | null = null;
  /** True while the batch is exhausted and the server is retraining. */
  waiting = false;
  message = "";

  private readonly dashboardEl: HTMLElement;
  private readonly taskEl: HTMLElement;
  private readonly messageEl: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly opts: AppOptions = {},
  ) {
    const doc = root.ownerDocument;
    this.dashboardEl = doc.createElement("section");
    this.dashboardEl.className = "dashboard";
    this.taskEl = doc.createElement("section");
    this.taskEl.className = "task";
    this.messageEl = doc.createElement("p");
    this.messageEl.className = "message";
    root.replaceChildren(this.dashboardEl, this.taskEl, this.messageEl);
  }

  async start(): Promise<void> {
    await this.dashboard.poll(this.api);
    await this.loadNext();
    const interval = this.opts.pollIntervalMs ?? 2000;
    if (interval > 0) {
      this.timer = setInterval(() => void this.refresh(), interval);
    }
    this.render();
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  /** One poll tick: refresh status and, when waiting, try for a new batch. */
  async refresh(): Promise<void> {
    await this.dashboard.poll(this.api);
    if (this.editor === null) {
      await this.loadNext();
    }
    this.render();
  }

  async loadNext(): Promise<void> {
    const task = await this.api.nextTask();
    if (task === null) {
      this.editor = null;
      this.waiting = true;
      this.message = this.dashboard.status?.finished
        ? "Session finished."
        : "No open tasks — retraining, next batch on its way.";
    } else {
      this.editor = new TaskEditor(task, this.opts.entityTypes ?? []);
      this.waiting = false;
      this.message = "";
    }
    this.render();
  }

  async submit(): Promise<void> {
    const editor = this.editor;
    if (editor === null) return;
    const check = editor.validation();
    if (!check.valid) {
      this.message = check.reason;
      this.render();
      return;
    }
    const outcome = await this.api.submit(editor.taskId, editor.tags);
    if (outcome.accepted) {
      await this.dashboard.poll(this.api);
      await this.loadNext();
      return;
    }
    editor.serverRejection = {
      reason: outcome.reason ?? `rejected (${outcome.status})`,
      position: outcome.position ?? null,
    };
    this.message = editor.serverRejection.reason;
    this.render();
  }

  handleKey(event: KeyboardEvent): void {
    const editor = this.editor;
    if (editor === null) return;
    if (event.key === "Enter") {
      event.preventDefault();
      void this.submit();
      return;
    }
    if (editor.handleKey(event.key)) {
      event.preventDefault();
      this.render();
    }
  }

  attachKeyboard(target: EventTarget): void {
    target.addEventListener("keydown", (e) => this.handleKey(e as KeyboardEvent));
  }

  render(): void {
    this.renderDashboard();
    this.renderTask();
    this.messageEl.textContent = this.message;
  }

  private renderDashboard(): void {
    const doc = this.root.ownerDocument;
    const s = this.dashboard.status;
    const parts: HTMLElement[] = [];
    if (this.dashboard.stale) {
      const banner = doc.createElement("div");
      banner.className = "banner stale";
      banner.textContent = "Session unavailable — reconnecting…";
      parts.push(banner);
    }
    if (s !== null) {
      const info = doc.createElement("dl");
      info.className = "session-info";
      const row = (label: string, value: string) => {
        const dt = doc.createElement("dt");
        dt.textContent = label;
        const dd = doc.createElement("dd");
        dd.textContent = value;
        info.append(dt, dd);
      };
      row("iteration", String(s.iteration));
      row("labeled", String(s.n_labeled));
      row("pool", String(s.n_pool));
      row("open tasks", String(s.open_tasks));
      row("strategy", s.strategy);
      if (s.finished) row("state", "finished");
      parts.push(info);
      const curve = doc.createElement("ol");
      curve.className = "curve";
      for (const p of this.dashboard.curve) {
        const li = doc.createElement("li");
        li.textContent =
          `iter ${p.iteration}: token-F1 ${p.token_f1.toFixed(4)}, ` +
          `sentence-acc ${p.sentence_accuracy.toFixed(4)}`;
        curve.appendChild(li);
      }
      parts.push(curve);
    }
    this.dashboardEl.replaceChildren(...parts);
  }

  private renderTask(): void {
    const doc = this.root.ownerDocument;
    const editor = this.editor;
    if (editor === null) {
      const note = doc.createElement("p");
      note.className = this.waiting ? "waiting" : "idle";
      note.textContent = this.waiting ? "Waiting for the next batch…" : "";
      this.taskEl.replaceChildren(note);
      return;
    }
    const list = doc.createElement("div");
    list.className = "tokens";
    const lowest = editor.lowestProbIndex();
    editor.tokens.forEach((token, i) => {
      const cell = doc.createElement("span");
      cell.className = "token";
      if (i === editor.cursor) cell.classList.add("cursor");
      if (i === lowest) cell.classList.add("uncertain");
      if (editor.serverRejection?.position === i) cell.classList.add("rejected");
      const word = doc.createElement("span");
      word.className = "word";
      word.textContent = token;
      const tag = doc.createElement("span");
      tag.className = "tag";
      tag.textContent = editor.tags[i] ?? "";
      cell.append(word, tag);
      if (editor.probs) {
        const prob = doc.createElement("span");
        prob.className = "prob";
        prob.textContent = (editor.probs[i] ?? 0).toFixed(3);
        cell.appendChild(prob);
      }
      list.appendChild(cell);
    });
    const picker = doc.createElement("ol");
    picker.className = "label-picker";
    editor.labels.forEach((label, i) => {
      const li = doc.createElement("li");
      li.textContent = `${(i + 1) % 10}: ${label}`;
      picker.appendChild(li);
    });
    const button = doc.createElement("button");
    button.className = "submit";
    button.textContent = "Submit (Enter)";
    button.disabled = !editor.canSubmit();
    button.addEventListener("click", () => void this.submit());
    const check = editor.validation();
    const inline = doc.createElement("p");
    inline.className = "validation";
    inline.textContent = check.valid ? "" : check.reason;
    this.taskEl.replaceChildren(list, picker, button, inline);
  }
}

export function mount(root: HTMLElement, baseUrl = ""): AnnotatorApp {
  const app = new AnnotatorApp(root, new ApiClient(baseUrl));
  app.attachKeyboard(root.ownerDocument);
  void app.start();
  return app;
}
