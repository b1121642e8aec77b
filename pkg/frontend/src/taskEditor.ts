/**
 * Editing state for one annotation task: a token cursor, per-token tag edits,
 * keyboard-first label selection, and client-side validation gating submit.
 */

import type { AnnotationTask } from "./api.js";
import { entityTypes, validateBio, type BioResult } from "./bio.js";

export interface ServerRejection {
  reason: string;
  position: number | null;
}

/** Label options for the digit-key picker: O first, then B-X/I-X per type. */
export function labelOptions(types: readonly string[]): string[] {
  const out = ["O"];
  for (const t of types) {
    out.push(`B-${t}`, `I-${t}`);
  }
  return out;
}

export class TaskEditor {
  readonly taskId: string;
  readonly tokens: readonly string[];
  readonly probs: readonly number[] | null;
  readonly labels: readonly string[];
  tags: string[];
  cursor = 0;
  serverRejection: ServerRejection | null = null;

  constructor(task: AnnotationTask, knownTypes: readonly string[] = []) {
    this.taskId = task.task_id;
    this.tokens = task.tokens;
    this.tags = [...task.proposed_tags];
    this.probs = task.token_probs;
    const types = [...knownTypes];
    for (const t of entityTypes(task.proposed_tags)) {
      if (!types.includes(t)) types.push(t);
    }
    this.labels = labelOptions(types);
  }

  /** Index of the token the model is least sure about; null without probs. */
  lowestProbIndex(): number | null {
    if (!this.probs || this.probs.length === 0) return null;
    let best = 0;
    for (let i = 1; i < this.probs.length; i++) {
      if ((this.probs[i] as number) < (this.probs[best] as number)) best = i;
    }
    return best;
  }

  moveCursor(delta: number): void {
    const n = this.tokens.length;
    this.cursor = Math.min(n - 1, Math.max(0, this.cursor + delta));
  }

  setLabel(index: number): boolean {
    const label = this.labels[index];
    if (label === undefined) return false;
    this.tags[this.cursor] = label;
    this.serverRejection = null;
    return true;
  }

  /**
   * Keyboard protocol: ArrowLeft/ArrowRight move the cursor; digit keys pick
   * a label (1 = first option, ..., 9 = ninth, 0 = tenth). Returns whether
   * the key was consumed.
   */
  handleKey(key: string): boolean {
    if (key === "ArrowLeft") {
      this.moveCursor(-1);
      return true;
    }
    if (key === "ArrowRight") {
      this.moveCursor(1);
      return true;
    }
    if (/^[0-9]$/.test(key)) {
      const index = key === "0" ? 9 : Number(key) - 1;
      return this.setLabel(index);
    }
    return false;
  }

  validation(): BioResult {
    return validateBio(this.tags);
  }

  canSubmit(): boolean {
    return this.validation().valid;
  }
}
