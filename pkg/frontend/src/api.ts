/** Thin typed client for the session service HTTP API. */

import type { JobDoc, JobRequest, LayoutDocument, SessionState } from './types';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(`HTTP ${status}: ${typeof detail === 'string' ? detail : JSON.stringify(detail)}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  constructor(
    public readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail: unknown;
      try {
        detail = await response.json();
      } catch {
        detail = await response.text().catch(() => '');
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    return (await this.request(path, init)).json() as Promise<T>;
  }

  async createSession(layout: LayoutDocument): Promise<string> {
    const doc = await this.json<{ id: string }>('/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(layout),
    });
    return doc.id;
  }

  getSession(id: string): Promise<SessionState> {
    return this.json(`/sessions/${id}`);
  }

  /** Previews are always server-rendered; the cache-bust tag lets the UI
   * force a refetch after commits without any client-side geometry. */
  previewUrl(id: string, kind: 'depth' | 'masks', bust?: string): string {
    const tag = bust ? `&t=${encodeURIComponent(bust)}` : '';
    return `${this.baseUrl}/sessions/${id}/preview?kind=${kind}${tag}`;
  }

  async fetchPreview(id: string, kind: 'depth' | 'masks'): Promise<ArrayBuffer> {
    return (await this.request(`/sessions/${id}/preview?kind=${kind}`)).arrayBuffer();
  }

  async submitJob(id: string, request: JobRequest): Promise<string> {
    const doc = await this.json<{ job_id: string }>(`/sessions/${id}/jobs`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(request),
    });
    return doc.job_id;
  }

  getJob(jobId: string): Promise<JobDoc> {
    return this.json(`/jobs/${jobId}`);
  }

  imageUrl(previewUrl: string): string {
    return `${this.baseUrl}${previewUrl}`;
  }

  async fetchImage(previewUrl: string): Promise<ArrayBuffer> {
    return (await this.request(previewUrl)).arrayBuffer();
  }
}
