// Typed client for the groundkit service. Every method returns the parsed
// server response; non-2xx responses throw ApiError with the server's code.

import type {
  GroundResponse,
  HealthResponse,
  HistoryResponse,
  NormBox,
  ProposalResponse,
  SceneResponse,
  SessionResponse,
  TrialResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail?: string,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, body?: unknown, method = 'POST'): Promise<T> {
  const resp = await fetch(`${base}${path}`, {
    method,
    headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  const text = await resp.text();
  const parsed = text ? JSON.parse(text) : {};
  if (!resp.ok) {
    const err = parsed?.error ?? {};
    throw new ApiError(resp.status, err.code ?? 'unknown', err.message ?? resp.statusText, err.detail);
  }
  return parsed as T;
}

export class GroundkitClient {
  constructor(public base: string) {}

  health(): Promise<HealthResponse> {
    return request(this.base, '/health', undefined, 'GET');
  }

  createSession(seed?: number): Promise<SessionResponse> {
    return request(this.base, '/sessions', seed === undefined ? {} : { seed });
  }

  setScene(sessionId: string, family: string, seed: number, params?: object): Promise<SceneResponse> {
    return request(this.base, `/sessions/${sessionId}/scene`, { family, seed, params });
  }

  ground(sessionId: string, box: NormBox, text: string): Promise<GroundResponse> {
    return request(this.base, `/sessions/${sessionId}/ground`, { box, text });
  }

  pointToBox(sessionId: string, imagePngB64: string, text: string): Promise<ProposalResponse> {
    return request(this.base, `/sessions/${sessionId}/point-to-box`, {
      image_png_b64: imagePngB64,
      text,
    });
  }

  confirm(sessionId: string, box?: NormBox, text?: string): Promise<GroundResponse> {
    return request(this.base, `/sessions/${sessionId}/confirm`, box ? { box, text } : {});
  }

  trial(sessionId: string, policy: 'grounded'): Promise<TrialResponse>;
  trial(sessionId: string, policy: 'text', instructionText: string): Promise<TrialResponse>;
  trial(sessionId: string, policy: 'text' | 'grounded', instructionText?: string): Promise<TrialResponse> {
    const body =
      policy === 'text' ? { policy, instruction_text: instructionText } : { policy };
    return request(this.base, `/sessions/${sessionId}/trial`, body);
  }

  history(sessionId: string): Promise<HistoryResponse> {
    return request(this.base, `/sessions/${sessionId}/history`, undefined, 'GET');
  }
}
