import { describe, expect, it } from "vitest";
import type { AnnotationTask } from "../src/api.js";
import { labelOptions, TaskEditor } from "../src/taskEditor.js";

function task(overrides: Partial<AnnotationTask> = {}): AnnotationTask {
  return {
    task_id: "1-7",
    sentence_id: 7,
    tokens: ["Ada", "visited", "Paris"],
    proposed_tags: ["B-PER", "O", "B-LOC"],
    token_probs: [0.9, 0.95, 0.4],
    status: "leased",
    ...overrides,
  };
}

describe("label picker", () => {
  it("offers O plus B/I per type", () => {
    expect(labelOptions(["PER", "LOC"])).toEqual([
      "O",
      "B-PER",
      "I-PER",
      "B-LOC",
      "I-LOC",
    ]);
  });

  it("merges configured types with types from the proposal", () => {
    const editor = new TaskEditor(task(), ["ORG"]);
    expect(editor.labels).toEqual([
      "O",
      "B-ORG",
      "I-ORG",
      "B-PER",
      "I-PER",
      "B-LOC",
      "I-LOC",
    ]);
  });
});

describe("keyboard editing", () => {
  it("arrows move the cursor and clamp at the ends", () => {
    const editor = new TaskEditor(task());
    expect(editor.cursor).toBe(0);
    editor.handleKey("ArrowLeft");
    expect(editor.cursor).toBe(0);
    editor.handleKey("ArrowRight");
    editor.handleKey("ArrowRight");
    editor.handleKey("ArrowRight");
    expect(editor.cursor).toBe(2);
  });

  it("digit keys assign the corresponding label at the cursor", () => {
    const editor = new TaskEditor(task());
    editor.handleKey("ArrowRight");
    expect(editor.handleKey("2")).toBe(true); // B-PER
    expect(editor.tags).toEqual(["B-PER", "B-PER", "B-LOC"]);
    expect(editor.handleKey("1")).toBe(true); // O
    expect(editor.tags[1]).toBe("O");
  });

  it("digit beyond the option list is ignored", () => {
    const editor = new TaskEditor(task());
    expect(editor.handleKey("9")).toBe(false);
    expect(editor.tags).toEqual(["B-PER", "O", "B-LOC"]);
  });

  it("unrelated keys are not consumed", () => {
    const editor = new TaskEditor(task());
    expect(editor.handleKey("x")).toBe(false);
  });
});

describe("validation gating", () => {
  it("pre-annotations are submittable unchanged", () => {
    expect(new TaskEditor(task()).canSubmit()).toBe(true);
  });

  it("I-X after O disables submit with the offending position", () => {
    const editor = new TaskEditor(task());
    editor.cursor = 1;
    expect(editor.tags[0]).toBe("B-PER");
    editor.setLabel(editor.labels.indexOf("I-LOC"));
    expect(editor.canSubmit()).toBe(false);
    const check = editor.validation();
    expect(check.valid).toBe(false);
    if (!check.valid) expect(check.position).toBe(1);
  });

  it("fixing the tag re-enables submit and clears server rejections", () => {
    const editor = new TaskEditor(task());
    editor.serverRejection = { reason: "stale", position: 0 };
    editor.cursor = 1;
    editor.setLabel(editor.labels.indexOf("I-PER"));
    expect(editor.canSubmit()).toBe(true);
    expect(editor.serverRejection).toBeNull();
  });
});

describe("model confidence display", () => {
  it("highlights the lowest-probability token", () => {
    expect(new TaskEditor(task()).lowestProbIndex()).toBe(2);
  });

  it("returns null when the service sends no probabilities", () => {
    expect(new TaskEditor(task({ token_probs: null })).lowestProbIndex()).toBeNull();
  });

  it("ties resolve to the first token", () => {
    const editor = new TaskEditor(task({ token_probs: [0.4, 0.4, 0.9] }));
    expect(editor.lowestProbIndex()).toBe(0);
  });
});
