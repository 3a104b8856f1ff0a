/** Wire types mirroring the session service's layout and edit schemas. */

export interface CameraDoc {
  position: [number, number, number];
  yaw: number;
  pitch: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface ObjectDoc {
  id: string;
  prompt: string;
  center: [number, number, number];
  size: [number, number, number];
  yaw: number;
}

export interface LayoutDocument {
  schema_version: number;
  background_prompt: string;
  camera: CameraDoc;
  objects: ObjectDoc[];
}

export type SceneEditDoc =
  | { op: 'add'; object: ObjectDoc }
  | { op: 'remove'; id: string }
  | { op: 'replace'; id: string; prompt: string }
  | { op: 'transform'; id: string; box: { center: [number, number, number]; size: [number, number, number]; yaw: number } }
  | { op: 'set_camera'; camera: CameraDoc };

export interface SessionState {
  id: string;
  layout: LayoutDocument;
  latent_hash: string | null;
  jobs: JobDoc[];
  active_job: string | null;
}

export interface JobDoc {
  id: string;
  session_id?: string;
  kind: 'generate' | 'edit';
  status: 'queued' | 'running' | 'done' | 'failed';
  progress: { completed: number; total: number };
  result?: { latent_hash: string; preview_url: string };
  error?: string;
}

export interface GenerationConfigDoc {
  steps?: number;
  seed?: number;
  use_background_path?: boolean;
  two_stage?: boolean;
  mode?: 'parallel' | 'sequential-emulation';
}

export interface JobRequest {
  kind: 'generate' | 'edit';
  edits?: SceneEditDoc[];
  config?: GenerationConfigDoc;
  backend?: string;
}

export const TWO_PI = Math.PI * 2;

/** Wrap an angle to [-pi, pi), matching the server's normalization. */
export function wrapAngle(angle: number): number {
  const wrapped = ((angle + Math.PI) % TWO_PI + TWO_PI) % TWO_PI - Math.PI;
  return wrapped;
}
