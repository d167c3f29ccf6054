// Thin fetch wrappers over the decomposition service, plus a gate that keeps
// a single decomposition in flight (later requests either cancel the current
// one or queue behind it, per user setting).

import type {
  ApiErrorBody,
  DecomposeRequest,
  DecomposeResponse,
  HealthResponse,
  ScenesResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly field?: string;

  constructor(status: number, body: ApiErrorBody) {
    super(body.error);
    this.status = status;
    this.field = body.field;
  }
}

async function readJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let body: ApiErrorBody;
    try {
      body = (await resp.json()) as ApiErrorBody;
    } catch {
      body = { error: `${resp.status} ${resp.statusText}` };
    }
    throw new ApiError(resp.status, body);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl = "") {}

  async health(): Promise<HealthResponse> {
    return readJson(await fetch(`${this.baseUrl}/api/health`));
  }

  async scenes(n: number, seed?: number): Promise<ScenesResponse> {
    const q = seed === undefined ? `n=${n}` : `n=${n}&seed=${seed}`;
    return readJson(await fetch(`${this.baseUrl}/api/scenes?${q}`));
  }

  async decompose(req: DecomposeRequest, signal?: AbortSignal): Promise<DecomposeResponse> {
    const resp = await fetch(`${this.baseUrl}/api/decompose`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
      signal,
    });
    return readJson(resp);
  }
}

export type OverlapPolicy = "cancel" | "queue";

// Serializes decompositions: at most one request is on the wire. With the
// cancel policy a new submission aborts the in-flight request; with queue it
// waits. Either way only the newest pending submission survives.
export class DecomposeGate {
  private controller: AbortController | null = null;
  private tail: Promise<unknown> = Promise.resolve();
  private pendingTicket = 0;

  constructor(
    private readonly client: ApiClient,
    public policy: OverlapPolicy = "cancel",
  ) {}

  get busy(): boolean {
    return this.controller !== null;
  }

  async submit(req: DecomposeRequest): Promise<DecomposeResponse | null> {
    const ticket = ++this.pendingTicket;
    if (this.policy === "cancel") {
      this.controller?.abort();
    }
    const previous = this.tail;
    let release!: () => void;
    this.tail = new Promise<void>((r) => {
      release = r;
    });
    await previous.catch(() => undefined);
    if (ticket !== this.pendingTicket) {
      release();
      return null; // a newer submission superseded this one while queued
    }
    const controller = new AbortController();
    this.controller = controller;
    try {
      return await this.client.decompose(req, controller.signal);
    } catch (err) {
      if (controller.signal.aborted) return null;
      throw err;
    } finally {
      if (this.controller === controller) this.controller = null;
      release();
    }
  }
}
