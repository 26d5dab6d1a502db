import { AnswerPayload, SessionView, validateSessionView } from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly detail: unknown = null,
  ) {
    super(message);
  }
}

async function parseResponse(res: Response): Promise<SessionView> {
  const body = await res.json().catch(() => null);
  if (!res.ok) {
    const detail = body && typeof body === 'object' ? (body as { detail?: unknown }).detail : null;
    throw new ApiError(res.status, `request failed: ${res.status}`, detail ?? body);
  }
  return validateSessionView(body);
}

export class ApiClient {
  constructor(readonly baseUrl: string = '') {}

  async categories(): Promise<string[]> {
    const res = await fetch(`${this.baseUrl}/categories`);
    if (!res.ok) throw new ApiError(res.status, `request failed: ${res.status}`);
    const body = (await res.json()) as { categories: string[] };
    return body.categories;
  }

  async createSession(category: string): Promise<SessionView> {
    const res = await fetch(`${this.baseUrl}/sessions`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ category }),
    });
    return parseResponse(res);
  }

  async submitAnswers(sessionId: string, answers: AnswerPayload[]): Promise<SessionView> {
    const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/answers`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ answers }),
    });
    return parseResponse(res);
  }

  async closeSession(sessionId: string): Promise<void> {
    await fetch(`${this.baseUrl}/sessions/${sessionId}`, { method: 'DELETE' });
  }
}
