/** Editor state store: the local scene mirror, gizmo edits, and job flow.
 *
 * The mirror is optimistic: gizmo edits update it immediately and queue a
 * transform edit for the server.  Committing posts the queue as one edit
 * job, polls it, and re-syncs the mirror from the server afterwards — so
 * after every committed job (or explicit refresh) the mirror deep-equals
 * the server scene.  Server rejections surface verbatim; validation
 * failures additionally roll the optimistic mirror back.
 */

import { ApiError, SessionApi } from './api';
import {
  GenerationConfigDoc,
  JobDoc,
  LayoutDocument,
  ObjectDoc,
  SceneEditDoc,
  wrapAngle,
} from './types';

export type GizmoTransform =
  | { kind: 'translate'; delta: [number, number, number] }
  | { kind: 'scale'; factor: [number, number, number] }
  | { kind: 'rotate-yaw'; delta: number };

export interface PreviewState {
  depthUrl: string | null;
  masksUrl: string | null;
  /** current generated image (served by hash), if any */
  imageUrl: string | null;
  /** previous generated image, kept for before/after comparison */
  previousImageUrl: string | null;
}

export interface EditorState {
  sessionId: string | null;
  layout: LayoutDocument | null;
  serverLayout: LayoutDocument | null;
  selectedId: string | null;
  pendingEdits: Map<string, SceneEditDoc>;
  previews: PreviewState;
  activeJob: JobDoc | null;
  lastJob: JobDoc | null;
  error: string | null;
}

export interface StoreOptions {
  /** preview refresh debounce; the editor default is 150 ms */
  debounceMs?: number;
  /** job poll interval */
  pollMs?: number;
}

type Listener = (state: EditorState) => void;

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

function deepCopy<T>(value: T): T {
  return JSON.parse(JSON.stringify(value)) as T;
}

export class EditorStore {
  readonly state: EditorState = {
    sessionId: null,
    layout: null,
    serverLayout: null,
    selectedId: null,
    pendingEdits: new Map(),
    previews: { depthUrl: null, masksUrl: null, imageUrl: null, previousImageUrl: null },
    activeJob: null,
    lastJob: null,
    error: null,
  };

  private readonly debounceMs: number;
  private readonly pollMs: number;
  private listeners: Listener[] = [];
  private previewTimer: ReturnType<typeof setTimeout> | null = null;
  previewRefreshes = 0;

  constructor(
    public readonly api: SessionApi,
    options: StoreOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? 150;
    this.pollMs = options.pollMs ?? 250;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  // -- load / refresh -----------------------------------------------------

  async loadSession(id: string): Promise<void> {
    try {
      const session = await this.api.getSession(id);
      this.state.sessionId = id;
      this.state.serverLayout = session.layout;
      this.state.layout = deepCopy(session.layout);
      this.state.pendingEdits.clear();
      this.state.error = null;
      this.syncFromSession(session);
      this.refreshPreviewUrls();
      this.emit();
    } catch (err) {
      // surfaced with a retry affordance; existing state is untouched
      this.state.error = err instanceof Error ? err.message : String(err);
      this.emit();
      throw err;
    }
  }

  async refresh(): Promise<void> {
    if (!this.state.sessionId) return;
    const session = await this.api.getSession(this.state.sessionId);
    this.state.serverLayout = session.layout;
    this.state.layout = deepCopy(session.layout);
    this.syncFromSession(session);
    this.refreshPreviewUrls();
    this.emit();
  }

  private syncFromSession(session: { jobs: JobDoc[] }): void {
    const done = [...session.jobs].filter((j) => j.status === 'done');
    const latest = done[done.length - 1];
    if (latest?.result) {
      const url = `/images/${latest.result.preview_url.split('/').pop()}`;
      if (this.state.previews.imageUrl !== url) {
        this.state.previews.previousImageUrl = this.state.previews.imageUrl;
        this.state.previews.imageUrl = url;
      }
    }
  }

  private refreshPreviewUrls(): void {
    const id = this.state.sessionId;
    if (!id) return;
    const bust = String(Date.now());
    this.state.previews.depthUrl = this.api.previewUrl(id, 'depth', bust);
    this.state.previews.masksUrl = this.api.previewUrl(id, 'masks', bust);
    this.previewRefreshes += 1;
  }

  /** Debounced server-preview refresh (the client never rasterizes). */
  requestPreviewRefresh(): void {
    if (this.previewTimer) clearTimeout(this.previewTimer);
    this.previewTimer = setTimeout(() => {
      this.previewTimer = null;
      this.refreshPreviewUrls();
      this.emit();
    }, this.debounceMs);
  }

  // -- selection + gizmo edits ---------------------------------------------

  selectObject(id: string | null): void {
    this.state.selectedId = id;
    this.emit();
  }

  findObject(id: string): ObjectDoc | undefined {
    return this.state.layout?.objects.find((o) => o.id === id);
  }

  /** Apply a gizmo transform optimistically and queue the edit.
   * Returns false (mirror untouched) when the result would be invalid. */
  gizmoEdit(objectId: string, transform: GizmoTransform): boolean {
    const object = this.findObject(objectId);
    if (!object || !this.state.layout) return false;

    const box = {
      center: [...object.center] as [number, number, number],
      size: [...object.size] as [number, number, number],
      yaw: object.yaw,
    };
    if (transform.kind === 'translate') {
      box.center = box.center.map((c, i) => c + transform.delta[i]) as [number, number, number];
    } else if (transform.kind === 'scale') {
      box.size = box.size.map((s, i) => s * transform.factor[i]) as [number, number, number];
    } else {
      box.yaw = wrapAngle(box.yaw + transform.delta);
    }
    const finite = [...box.center, ...box.size, box.yaw].every(Number.isFinite);
    if (!finite || box.size.some((s) => s <= 0)) {
      return false; // client-side invariant guard: reject, mirror unchanged
    }

    object.center = box.center;
    object.size = box.size;
    object.yaw = box.yaw;
    this.state.pendingEdits.set(`transform:${objectId}`, { op: 'transform', id: objectId, box });
    this.requestPreviewRefresh();
    this.emit();
    return true;
  }

  queueCameraEdit(camera: LayoutDocument['camera']): void {
    if (!this.state.layout) return;
    this.state.layout.camera = deepCopy(camera);
    this.state.pendingEdits.set('set_camera', { op: 'set_camera', camera: deepCopy(camera) });
    this.requestPreviewRefresh();
    this.emit();
  }

  get pendingEditList(): SceneEditDoc[] {
    return [...this.state.pendingEdits.values()];
  }

  // -- jobs -----------------------------------------------------------------

  private async runJob(jobId: string): Promise<JobDoc> {
    for (;;) {
      const job = await this.api.getJob(jobId);
      this.state.activeJob = job;
      this.emit();
      if (job.status === 'done' || job.status === 'failed') {
        this.state.activeJob = null;
        this.state.lastJob = job;
        return job;
      }
      await sleep(this.pollMs);
    }
  }

  async generate(config?: GenerationConfigDoc): Promise<JobDoc> {
    if (!this.state.sessionId) throw new Error('no session loaded');
    const jobId = await this.api.submitJob(this.state.sessionId, { kind: 'generate', config });
    const job = await this.runJob(jobId);
    if (job.status === 'done') await this.refresh();
    this.emit();
    return job;
  }

  /** Commit the queued edits as one edit job and poll it to completion. */
  async commitEdits(config?: GenerationConfigDoc): Promise<JobDoc> {
    if (!this.state.sessionId) throw new Error('no session loaded');
    if (this.state.pendingEdits.size === 0) throw new Error('nothing to commit');
    if (this.state.activeJob) throw new Error('a job is already running');
    let jobId: string;
    try {
      jobId = await this.api.submitJob(this.state.sessionId, {
        kind: 'edit',
        edits: this.pendingEditList,
        config,
      });
    } catch (err) {
      if (err instanceof ApiError) {
        this.state.error = err.message; // surfaced verbatim
        if (err.status === 422) {
          // validation failure: roll the optimistic mirror back, drop the queue
          this.state.pendingEdits.clear();
          await this.refresh();
        }
        // 409 (job running) and 412 (generate first) retain the queue
        this.emit();
      }
      throw err;
    }
    const job = await this.runJob(jobId);
    if (job.status === 'done') {
      this.state.pendingEdits.clear();
      this.state.error = null;
      await this.refresh(); // mirror converges to the server scene
    } else {
      this.state.error = job.error ?? 'job failed';
    }
    this.emit();
    return job;
  }
}
