/** Typed client for the rpslab session service. All game values come from the
 * server; the client never computes payoffs or bot moves. */

export interface CreateSessionResponse {
  session_id: string;
  T: number;
  rules: string;
}

export interface MoveResponse {
  round: number;
  ego: number;
  opp: number;
  reward: number;
  outcome: "win" | "tie" | "loss";
  tally: number;
  progress: number;
  complete: boolean;
}

export type ExportedRound = [number, number, number, number];

export interface ExportedGame {
  game_id: string;
  agent_label: string;
  bot_id: number | null;
  rounds: ExportedRound[];
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface CreateSessionOptions {
  bot_id?: number;
  seed?: number;
  rounds?: number;
}

export class RpsApi {
  constructor(
    public readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = typeof body?.detail === "string" ? body.detail : resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  createSession(options: CreateSessionOptions = {}): Promise<CreateSessionResponse> {
    return this.request<CreateSessionResponse>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(options),
    });
  }

  submitMove(sessionId: string, action: number): Promise<MoveResponse> {
    return this.request<MoveResponse>(`/sessions/${sessionId}/move`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ action }),
    });
  }

  exportGame(sessionId: string): Promise<ExportedGame> {
    return this.request<ExportedGame>(`/sessions/${sessionId}/export`);
  }
}
