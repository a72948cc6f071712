import type { QueryResponse, SchemaResponse } from './types';

/**
 * Client for the search service API. The base URL defaults to same-origin
 * and can be overridden at runtime via `window.SPELUNKER_API_BASE`.
 */

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(detail);
  }
}

export function defaultBaseUrl(): string {
  const w = globalThis as { SPELUNKER_API_BASE?: string };
  return w.SPELUNKER_API_BASE ?? '';
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let detail = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { detail?: string; error?: string };
    detail = body.detail ?? body.error ?? detail;
  } catch {
    // non-JSON error body: keep the generic message
  }
  throw new ApiError(response.status, detail);
}

export class SearchClient {
  constructor(
    private readonly baseUrl: string = defaultBaseUrl(),
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(body),
        signal,
      });
    } catch (err) {
      if (err instanceof DOMException && err.name === 'AbortError') {
        throw err;
      }
      throw new ApiError(0, 'service unreachable');
    }
    return parseOrThrow<T>(response);
  }

  /** Natural-language search: the service structures the text with its LLM. */
  query(text: string, k: number, rerank: boolean, signal?: AbortSignal): Promise<QueryResponse> {
    return this.post<QueryResponse>('/api/query', { text, k, rerank }, signal);
  }

  /** Structured search: field targets plus optional per-field weights. */
  search(
    structuredQuery: Record<string, string | number>,
    k: number,
    weights?: Record<string, number>,
    signal?: AbortSignal,
  ): Promise<QueryResponse> {
    const body: Record<string, unknown> = { structured_query: structuredQuery, k };
    if (weights && Object.keys(weights).length > 0) {
      body.weights = weights;
    }
    return this.post<QueryResponse>('/api/search', body, signal);
  }

  async schema(signal?: AbortSignal): Promise<SchemaResponse> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/api/schema`, { signal });
    } catch {
      throw new ApiError(0, 'service unreachable');
    }
    return parseOrThrow<SchemaResponse>(response);
  }
}
