/** Canvas views: a top-down XZ map for dragging boxes, and a wireframe
 * overlay drawn on top of the server-rendered preview image. */

import { wireframeEdges } from './geometry';
import type { LayoutDocument, ObjectDoc } from './types';

export interface MapViewConfig {
  metersAcross: number; // world meters mapped to the canvas width
}

export class TopDownMap {
  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly config: MapViewConfig = { metersAcross: 20 },
  ) {}

  toCanvas(x: number, z: number): [number, number] {
    const scale = this.canvas.width / this.config.metersAcross;
    return [this.canvas.width / 2 + x * scale, this.canvas.height - z * scale];
  }

  toWorld(px: number, py: number): [number, number] {
    const scale = this.canvas.width / this.config.metersAcross;
    return [(px - this.canvas.width / 2) / scale, (this.canvas.height - py) / scale];
  }

  hitTest(layout: LayoutDocument, px: number, py: number): string | null {
    const [wx, wz] = this.toWorld(px, py);
    for (const object of [...layout.objects].reverse()) {
      const dx = Math.abs(wx - object.center[0]);
      const dz = Math.abs(wz - object.center[2]);
      if (dx <= object.size[0] / 2 && dz <= object.size[2] / 2) return object.id;
    }
    return null;
  }

  draw(layout: LayoutDocument, selectedId: string | null): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) return;
    ctx.fillStyle = '#151820';
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    // camera marker with view direction
    const cam = layout.camera;
    const [cx, cz] = this.toCanvas(cam.position[0], cam.position[2]);
    ctx.strokeStyle = '#7fd4ff';
    ctx.fillStyle = '#7fd4ff';
    ctx.beginPath();
    ctx.arc(cx, cz, 5, 0, Math.PI * 2);
    ctx.fill();
    const [fx, fz] = this.toCanvas(
      cam.position[0] + 3 * Math.sin(cam.yaw),
      cam.position[2] + 3 * Math.cos(cam.yaw),
    );
    ctx.beginPath();
    ctx.moveTo(cx, cz);
    ctx.lineTo(fx, fz);
    ctx.stroke();

    for (const object of layout.objects) {
      this.drawBox(ctx, object, object.id === selectedId);
    }
  }

  private drawBox(ctx: CanvasRenderingContext2D, object: ObjectDoc, selected: boolean): void {
    const { center, size, yaw } = object;
    const corners: Array<[number, number]> = [];
    for (const [sx, sz] of [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]] as const) {
      const lx = sx * size[0];
      const lz = sz * size[2];
      const wx = center[0] + Math.cos(yaw) * lx + Math.sin(yaw) * lz;
      const wz = center[2] - Math.sin(yaw) * lx + Math.cos(yaw) * lz;
      corners.push(this.toCanvas(wx, wz));
    }
    ctx.beginPath();
    ctx.moveTo(corners[0][0], corners[0][1]);
    for (const [px, py] of corners.slice(1)) ctx.lineTo(px, py);
    ctx.closePath();
    ctx.strokeStyle = selected ? '#ffd166' : '#8a93a6';
    ctx.lineWidth = selected ? 2.5 : 1.5;
    ctx.stroke();
  }
}

/** Box wireframes drawn over the preview image (display only). */
export function drawOverlay(
  canvas: HTMLCanvasElement,
  layout: LayoutDocument,
  selectedId: string | null,
): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const scaleX = canvas.width / layout.camera.width;
  const scaleY = canvas.height / layout.camera.height;
  for (const object of layout.objects) {
    ctx.strokeStyle = object.id === selectedId ? '#ffd166' : 'rgba(170, 190, 220, 0.8)';
    ctx.lineWidth = object.id === selectedId ? 2 : 1;
    for (const [[ax, ay], [bx, by]] of wireframeEdges(layout.camera, object)) {
      ctx.beginPath();
      ctx.moveTo(ax * scaleX, ay * scaleY);
      ctx.lineTo(bx * scaleX, by * scaleY);
      ctx.stroke();
    }
  }
}
