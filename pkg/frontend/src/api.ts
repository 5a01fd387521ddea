import type { ActionName, DecisionResponse, Recommendation, SessionView, Summary } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface CreateSessionOptions {
  advisor?: string;
  seed?: number;
  config?: Record<string, unknown>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed wrapper over the exercise service endpoints. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, "network_error", String(err));
    }
    if (response.status === 204) {
      return undefined as T;
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const code = body?.code ?? "http_error";
      const message = body?.message ?? `HTTP ${response.status}`;
      throw new ApiError(response.status, code, message);
    }
    return body as T;
  }

  createSession(options: CreateSessionOptions = {}): Promise<SessionView> {
    return this.request<SessionView>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(options),
    });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${id}`);
  }

  getRecommendation(id: string): Promise<Recommendation> {
    return this.request<Recommendation>(`/sessions/${id}/recommendation`);
  }

  postDecision(id: string, action: ActionName, cursor: number): Promise<DecisionResponse> {
    return this.request<DecisionResponse>(`/sessions/${id}/decision`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ action, cursor }),
    });
  }

  getSummary(id: string): Promise<Summary> {
    return this.request<Summary>(`/sessions/${id}/summary`);
  }

  deleteSession(id: string): Promise<void> {
    return this.request<void>(`/sessions/${id}`, { method: "DELETE" });
  }
}
