/**
 * Latest-wins request tracking. Each submission takes a token; a response
 * is applied only if its token is still the newest, so a slow older request
 * can never overwrite newer results. The previous request is also aborted,
 * but the guard alone is sufficient for correctness.
 */
export class RequestSequencer {
  private seq = 0;
  private controller: AbortController | null = null;

  /** Start a new request: abort the previous one, return (token, signal). */
  begin(): { token: number; signal: AbortSignal } {
    this.controller?.abort();
    this.controller = new AbortController();
    this.seq += 1;
    return { token: this.seq, signal: this.controller.signal };
  }

  /** True when the token belongs to the most recent request. */
  isCurrent(token: number): boolean {
    return token === this.seq;
  }
}
