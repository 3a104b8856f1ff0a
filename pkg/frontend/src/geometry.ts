/** Display-only pinhole math for gizmo overlays.
 *
 * This mirrors the server's camera conventions (right-handed, +Y up, camera
 * looks along +Z, v grows downward) purely to draw box wireframes and
 * handles on top of the server-rendered previews.  Depth/mask rasterization
 * stays server-side; nothing here feeds back into scene state.
 */

import type { CameraDoc, ObjectDoc } from './types';

export type Vec3 = [number, number, number];

function rotateYaw(p: Vec3, yaw: number): Vec3 {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  return [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]];
}

function cameraRotationT(yaw: number, pitch: number): (p: Vec3) => Vec3 {
  // world -> camera: transpose of R_y(yaw) @ R_x(-pitch)
  const cy = Math.cos(yaw), sy = Math.sin(yaw);
  const cp = Math.cos(pitch), sp = Math.sin(pitch);
  return (p) => {
    const a: Vec3 = [cy * p[0] - sy * p[2], p[1], sy * p[0] + cy * p[2]];
    return [a[0], cp * a[1] - sp * a[2], sp * a[1] + cp * a[2]];
  };
}

export function boxCorners(object: ObjectDoc): Vec3[] {
  const [w, h, d] = object.size;
  const corners: Vec3[] = [];
  for (const sx of [-0.5, 0.5]) {
    for (const sy of [-0.5, 0.5]) {
      for (const sz of [-0.5, 0.5]) {
        const local: Vec3 = [sx * w, sy * h, sz * d];
        const rotated = rotateYaw(local, object.yaw);
        corners.push([
          rotated[0] + object.center[0],
          rotated[1] + object.center[1],
          rotated[2] + object.center[2],
        ]);
      }
    }
  }
  return corners;
}

/** Project a world point; null when at/behind the camera plane. */
export function projectPoint(camera: CameraDoc, point: Vec3): [number, number] | null {
  const toCamera = cameraRotationT(camera.yaw, camera.pitch);
  const rel: Vec3 = [
    point[0] - camera.position[0],
    point[1] - camera.position[1],
    point[2] - camera.position[2],
  ];
  const cam = toCamera(rel);
  if (cam[2] <= 1e-6) return null;
  return [
    camera.cx + (camera.fx * cam[0]) / cam[2],
    camera.cy - (camera.fy * cam[1]) / cam[2],
  ];
}

/** The 12 wireframe edges of a box, as projected segments. */
export function wireframeEdges(camera: CameraDoc, object: ObjectDoc): Array<[[number, number], [number, number]]> {
  const corners = boxCorners(object).map((c) => projectPoint(camera, c));
  const pairs: Array<[number, number]> = [
    [0, 1], [2, 3], [4, 5], [6, 7],
    [0, 2], [1, 3], [4, 6], [5, 7],
    [0, 4], [1, 5], [2, 6], [3, 7],
  ];
  const edges: Array<[[number, number], [number, number]]> = [];
  for (const [a, b] of pairs) {
    const pa = corners[a];
    const pb = corners[b];
    if (pa && pb) edges.push([pa, pb]);
  }
  return edges;
}
