/**
 * Typed client for the annotation service's JSON/HTTP endpoints. All numbers
 * shown in the UI come from these payloads; the client computes nothing.
 */

export interface AnnotationTask {
  task_id: string;
  sentence_id: number;
  tokens: string[];
  proposed_tags: string[];
  token_probs: number[] | null;
  status: string;
}

export interface LatestMetrics {
  token_f1: number;
  entity_f1: number;
  sentence_accuracy: number;
}

export interface SessionStatus {
  iteration: number;
  n_labeled: number;
  n_pool: number;
  open_tasks: number;
  strategy: string;
  latest_metrics: LatestMetrics | null;
  finished: boolean;
  error: string | null;
}

export interface SubmitOutcome {
  status: number;
  accepted: boolean;
  reason?: string;
  position?: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

function defaultRequestId(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return `req-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = (...args) => fetch(...args),
    private readonly newRequestId: () => string = defaultRequestId,
    private readonly maxRetries: number = 2,
  ) {}

  /** null when no session exists yet (404). */
  async status(): Promise<SessionStatus | null> {
    const res = await this.fetchImpl(`${this.baseUrl}/session/status`);
    if (res.status === 404) return null;
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as SessionStatus;
  }

  /** null when no task is open (204). */
  async nextTask(): Promise<AnnotationTask | null> {
    const res = await this.fetchImpl(`${this.baseUrl}/tasks/next`);
    if (res.status === 204) return null;
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as AnnotationTask;
  }

  /**
   * Submit labels for a task. Network failures are retried with the same
   * x-request-id, so a retry after a lost response cannot double-apply.
   */
  async submit(taskId: string, tags: readonly string[]): Promise<SubmitOutcome> {
    const requestId = this.newRequestId();
    let lastError: unknown = null;
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      let res: Response;
      try {
        res = await this.fetchImpl(
          `${this.baseUrl}/tasks/${encodeURIComponent(taskId)}/labels`,
          {
            method: "POST",
            headers: {
              "content-type": "application/json",
              "x-request-id": requestId,
            },
            body: JSON.stringify({ tags }),
          },
        );
      } catch (err) {
        lastError = err;
        continue;
      }
      const body = (await res.json()) as {
        accepted?: boolean;
        reason?: string;
        position?: number;
      };
      return {
        status: res.status,
        accepted: body.accepted === true,
        reason: body.reason,
        position: body.position,
      };
    }
    throw lastError instanceof Error
      ? lastError
      : new Error(`submit failed after ${this.maxRetries + 1} attempts`);
  }
}
