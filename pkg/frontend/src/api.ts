import type {
  ClassCode,
  FinalizeResponse,
  Progress,
  QueueItem,
  Thumb,
  VerdictKind,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class NetworkError extends Error {}

/** Thin typed wrapper over the review-service HTTP API. */
export class ApiClient {
  constructor(private base = '') {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.base + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const message =
        typeof body === 'object' && body !== null && 'error' in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new ApiError(resp.status, message);
    }
    return body as T;
  }

  async fetchQueue(cls: ClassCode, limit?: number): Promise<QueueItem[]> {
    const suffix = limit === undefined ? '' : `&limit=${limit}`;
    const body = await this.request<{ items: QueueItem[] }>(
      `/api/queue?class=${cls}${suffix}`,
    );
    return body.items;
  }

  review(
    videoId: string,
    verdict: VerdictKind,
    reviewer: string,
    reassignTo?: number,
  ): Promise<Progress> {
    const payload: Record<string, unknown> = {
      video_id: videoId,
      verdict,
      reviewer,
    };
    if (verdict === 'reassign') {
      payload.reassign_to = reassignTo;
    }
    return this.request<Progress>('/api/review', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  fetchProgress(): Promise<Progress> {
    return this.request<Progress>('/api/progress');
  }

  finalize(force = false): Promise<FinalizeResponse> {
    return this.request<FinalizeResponse>('/api/finalize', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ force }),
    });
  }

  fetchThumb(videoId: string, frame: number): Promise<Thumb> {
    return this.request<Thumb>(`/api/thumb/${videoId}/${frame}`);
  }
}
