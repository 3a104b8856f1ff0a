/** Editor app wiring: DOM events in, store state out. */

import { SessionApi } from './api';
import { EditorStore } from './state';
import { TopDownMap, drawOverlay } from './viewport';
import type { LayoutDocument } from './types';

const api = new SessionApi('');
const store = new EditorStore(api);

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

const sessionInput = el<HTMLInputElement>('session-id');
const statusBar = el<HTMLDivElement>('status');
const mapCanvas = el<HTMLCanvasElement>('map');
const overlayCanvas = el<HTMLCanvasElement>('overlay');
const depthImg = el<HTMLImageElement>('preview-depth');
const masksImg = el<HTMLImageElement>('preview-masks');
const beforeImg = el<HTMLImageElement>('image-before');
const afterImg = el<HTMLImageElement>('image-after');
const objectList = el<HTMLUListElement>('objects');
const queueInfo = el<HTMLSpanElement>('queue-info');

const map = new TopDownMap(mapCanvas);

function setStatus(text: string, isError = false): void {
  statusBar.textContent = text;
  statusBar.className = isError ? 'status error' : 'status';
}

function render(): void {
  const { layout, selectedId, previews, activeJob, error, pendingEdits } = store.state;
  if (error) setStatus(error, true);
  else if (activeJob) {
    setStatus(`${activeJob.kind} ${activeJob.status} ${activeJob.progress.completed}/${activeJob.progress.total}`);
  }
  queueInfo.textContent = `${pendingEdits.size} queued edit(s)`;
  if (previews.depthUrl) depthImg.src = previews.depthUrl;
  if (previews.masksUrl) masksImg.src = previews.masksUrl;
  if (previews.imageUrl) afterImg.src = previews.imageUrl;
  if (previews.previousImageUrl) beforeImg.src = previews.previousImageUrl;
  if (!layout) return;

  map.draw(layout, selectedId);
  drawOverlay(overlayCanvas, layout, selectedId);
  objectList.innerHTML = '';
  for (const object of layout.objects) {
    const item = document.createElement('li');
    item.textContent = `${object.id} — "${object.prompt}"`;
    item.className = object.id === selectedId ? 'selected' : '';
    item.onclick = () => store.selectObject(object.id);
    objectList.appendChild(item);
  }
}

store.subscribe(render);

// -- map dragging: translate in the XZ plane --------------------------------

let dragging: { id: string; lastX: number; lastY: number } | null = null;

mapCanvas.addEventListener('mousedown', (event) => {
  if (!store.state.layout) return;
  const rect = mapCanvas.getBoundingClientRect();
  const px = event.clientX - rect.left;
  const py = event.clientY - rect.top;
  const hit = map.hitTest(store.state.layout, px, py);
  store.selectObject(hit);
  if (hit) dragging = { id: hit, lastX: px, lastY: py };
});

mapCanvas.addEventListener('mousemove', (event) => {
  if (!dragging) return;
  const rect = mapCanvas.getBoundingClientRect();
  const px = event.clientX - rect.left;
  const py = event.clientY - rect.top;
  const [wx0, wz0] = map.toWorld(dragging.lastX, dragging.lastY);
  const [wx1, wz1] = map.toWorld(px, py);
  store.gizmoEdit(dragging.id, { kind: 'translate', delta: [wx1 - wx0, 0, wz1 - wz0] });
  dragging.lastX = px;
  dragging.lastY = py;
});

window.addEventListener('mouseup', () => {
  dragging = null;
});

// -- keyboard gizmos ---------------------------------------------------------

window.addEventListener('keydown', (event) => {
  const id = store.state.selectedId;
  if (!id) return;
  const step = event.shiftKey ? 0.5 : 0.1;
  const act: Record<string, () => unknown> = {
    ArrowLeft: () => store.gizmoEdit(id, { kind: 'translate', delta: [-step, 0, 0] }),
    ArrowRight: () => store.gizmoEdit(id, { kind: 'translate', delta: [step, 0, 0] }),
    ArrowUp: () => store.gizmoEdit(id, { kind: 'translate', delta: [0, 0, step] }),
    ArrowDown: () => store.gizmoEdit(id, { kind: 'translate', delta: [0, 0, -step] }),
    PageUp: () => store.gizmoEdit(id, { kind: 'translate', delta: [0, step, 0] }),
    PageDown: () => store.gizmoEdit(id, { kind: 'translate', delta: [0, -step, 0] }),
    '+': () => store.gizmoEdit(id, { kind: 'scale', factor: [1.1, 1.1, 1.1] }),
    '-': () => store.gizmoEdit(id, { kind: 'scale', factor: [1 / 1.1, 1 / 1.1, 1 / 1.1] }),
    q: () => store.gizmoEdit(id, { kind: 'rotate-yaw', delta: Math.PI / 16 }),
    e: () => store.gizmoEdit(id, { kind: 'rotate-yaw', delta: -Math.PI / 16 }),
  };
  if (act[event.key]) {
    event.preventDefault();
    act[event.key]();
  }
});

// -- camera form --------------------------------------------------------------

el<HTMLButtonElement>('camera-apply').onclick = () => {
  const layout = store.state.layout;
  if (!layout) return;
  const camera: LayoutDocument['camera'] = {
    ...layout.camera,
    position: [
      Number(el<HTMLInputElement>('cam-x').value),
      Number(el<HTMLInputElement>('cam-y').value),
      Number(el<HTMLInputElement>('cam-z').value),
    ],
    yaw: Number(el<HTMLInputElement>('cam-yaw').value),
    pitch: Number(el<HTMLInputElement>('cam-pitch').value),
  };
  store.queueCameraEdit(camera);
};

// -- session / job buttons -----------------------------------------------------

el<HTMLButtonElement>('load').onclick = async () => {
  try {
    await store.loadSession(sessionInput.value.trim());
    setStatus(`loaded session ${sessionInput.value.trim()}`);
  } catch {
    /* error already surfaced in state */
  }
};

el<HTMLButtonElement>('generate').onclick = async () => {
  try {
    const job = await store.generate({});
    setStatus(job.status === 'done' ? 'generation complete' : `failed: ${job.error}`, job.status !== 'done');
  } catch (err) {
    setStatus(String(err), true);
  }
};

el<HTMLButtonElement>('commit').onclick = async () => {
  try {
    const job = await store.commitEdits({});
    setStatus(job.status === 'done' ? 'edits committed' : `failed: ${job.error}`, job.status !== 'done');
  } catch (err) {
    setStatus(String(err), true);
  }
};

el<HTMLButtonElement>('refresh').onclick = () => store.refresh();

setStatus('enter a session id and press Load');
