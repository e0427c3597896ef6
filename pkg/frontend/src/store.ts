import { ApiClient, ApiError, NetworkError } from './api.js';
import type {
  ClassCode,
  FinalizeResponse,
  Progress,
  QueueItem,
  VerdictKind,
} from './types.js';

export interface AppState {
  activeClass: ClassCode;
  queues: Record<ClassCode, QueueItem[]>;
  progress: Progress | null;
  banner: string | null;
  toast: string | null;
  finalized: FinalizeResponse | null;
}

export function initialState(): AppState {
  return {
    activeClass: 0,
    queues: { 0: [], 1: [], 2: [] },
    progress: null,
    banner: null,
    toast: null,
    finalized: null,
  };
}

export interface Removal {
  item: QueueItem;
  index: number;
}

/** Pure optimistic removal; returns the removal so it can be rolled back. */
export function removeFromQueue(
  queue: QueueItem[],
  videoId: string,
): { queue: QueueItem[]; removal: Removal | null } {
  const index = queue.findIndex((it) => it.video_id === videoId);
  if (index < 0) {
    return { queue, removal: null };
  }
  const next = queue.slice();
  const [item] = next.splice(index, 1);
  return { queue: next, removal: { item, index } };
}

/** Pure rollback of an optimistic removal, restoring queue order. */
export function restoreToQueue(queue: QueueItem[], removal: Removal): QueueItem[] {
  const next = queue.slice();
  next.splice(Math.min(removal.index, next.length), 0, removal.item);
  return next;
}

export function canFinalize(progress: Progress | null): boolean {
  return progress !== null && progress.pending_total === 0;
}

export function keyToVerdict(
  key: string,
): { verdict: VerdictKind; reassignTo?: number } | null {
  switch (key.toLowerCase()) {
    case 'a':
      return { verdict: 'accept' };
    case 'r':
      return { verdict: 'reject' };
    case '1':
      return { verdict: 'reassign', reassignTo: 0 };
    case '2':
      return { verdict: 'reassign', reassignTo: 1 };
    case '3':
      return { verdict: 'reassign', reassignTo: 2 };
    default:
      return null;
  }
}

/**
 * DOM-free controller: every mutation round-trips through the server,
 * with optimistic queue removal that rolls back on failure.  State is
 * always reproducible from fresh fetches (no client persistence).
 */
export class ReviewController {
  state: AppState = initialState();

  constructor(
    private api: ApiClient,
    public reviewer: string,
    private onChange: (state: AppState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  async refreshQueue(cls: ClassCode): Promise<void> {
    this.state.queues[cls] = await this.api.fetchQueue(cls);
  }

  async refreshAll(): Promise<void> {
    try {
      for (const cls of [0, 1, 2] as ClassCode[]) {
        await this.refreshQueue(cls);
      }
      this.state.progress = await this.api.fetchProgress();
      this.state.banner = null;
    } catch (err) {
      if (err instanceof NetworkError) {
        this.state.banner = 'service unreachable';
      } else {
        throw err;
      }
    }
    this.emit();
  }

  setActiveClass(cls: ClassCode): void {
    this.state.activeClass = cls;
    this.emit();
  }

  /** Verdict for the top (most anomalous) item of the active queue. */
  submitTop(verdict: VerdictKind, reassignTo?: number): Promise<void> {
    const queue = this.state.queues[this.state.activeClass];
    if (queue.length === 0) {
      return Promise.resolve();
    }
    return this.submitVerdict(queue[0].video_id, verdict, reassignTo);
  }

  async submitVerdict(
    videoId: string,
    verdict: VerdictKind,
    reassignTo?: number,
  ): Promise<void> {
    const cls = this.state.activeClass;
    const { queue, removal } = removeFromQueue(this.state.queues[cls], videoId);
    this.state.queues[cls] = queue;
    this.state.toast = null;
    this.emit();
    try {
      this.state.progress = await this.api.review(
        videoId,
        verdict,
        this.reviewer,
        reassignTo,
      );
      this.state.banner = null;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale view of the queue: the server wins, re-fetch it
        this.state.toast = `conflict: ${err.message}`;
        await this.refreshQueue(cls);
        this.state.progress = await this.api.fetchProgress();
      } else if (err instanceof ApiError) {
        if (removal) {
          this.state.queues[cls] = restoreToQueue(this.state.queues[cls], removal);
        }
        this.state.toast = `rejected: ${err.message}`;
      } else if (err instanceof NetworkError) {
        if (removal) {
          this.state.queues[cls] = restoreToQueue(this.state.queues[cls], removal);
        }
        this.state.banner = 'service unreachable';
      } else {
        throw err;
      }
    }
    this.emit();
  }

  async finalize(force = false): Promise<FinalizeResponse | null> {
    try {
      this.state.finalized = await this.api.finalize(force);
      this.state.toast = null;
    } catch (err) {
      if (err instanceof ApiError) {
        this.state.toast = `finalize refused: ${err.message}`;
      } else if (err instanceof NetworkError) {
        this.state.banner = 'service unreachable';
      } else {
        throw err;
      }
    }
    this.emit();
    return this.state.finalized;
  }
}
