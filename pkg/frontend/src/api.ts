// Typed client for the prefsearch HTTP API. All knowledge about wire
// shapes lives here; the rest of the client only consumes these types.

export interface TurnEvent {
  turn: number;
  user_text: string | null;
  confidence: number | null;
  system_text: string;
  system_act: { type: string; slot?: string; items?: string[] };
}

export interface ItemCard {
  id: string;
  name: string;
  values: Record<string, unknown>;
}

export interface StateDoc {
  session_id: string;
  kb_id: string;
  created: string;
  turn: number;
  closed: boolean;
  belief: Record<string, Record<string, number>>;
  constraints: string[];
  preferences: string[];
  result: { size: number; facets: Record<string, Record<string, number>> };
  buckets: {
    sizes: number[];
    first_bucket: ItemCard[];
    scores: Record<string, number>;
    wins: Record<string, number>;
  };
  history: TurnEvent[];
}

export interface TurnResponse {
  system_text: string;
  system_act: { type: string };
  delta: {
    constraints_added: string[];
    preferences_added: string[];
    result_size: number;
    bucket_sizes: number[];
  };
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  try {
    const body = await resp.json();
    return new ApiError(resp.status, body.error?.code ?? 'error',
      body.error?.message ?? resp.statusText);
  } catch {
    return new ApiError(resp.status, 'error', resp.statusText);
  }
}

export class Client {
  constructor(private baseUrl: string = '') {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    if (resp.status === 204) return undefined as T;
    return resp.json() as Promise<T>;
  }

  createSession(kbId: string): Promise<{ session_id: string; greeting: string }> {
    return this.request('POST', '/sessions', { kb_id: kbId });
  }

  postTurn(sessionId: string, text: string, confidence?: number): Promise<TurnResponse> {
    const body: Record<string, unknown> = { text };
    if (confidence !== undefined) body.confidence = confidence;
    return this.request('POST', `/sessions/${sessionId}/turns`, body);
  }

  getState(sessionId: string): Promise<StateDoc> {
    return this.request('GET', `/sessions/${sessionId}/state`);
  }

  deleteSession(sessionId: string): Promise<void> {
    return this.request('DELETE', `/sessions/${sessionId}`);
  }
}
