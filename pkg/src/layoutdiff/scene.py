"""Scene data model: oriented 3D boxes bound to prompts, plus a camera.

Conventions (fixed once, used by every downstream module):
  * World frame is right-handed with +Y up; lengths are meters, angles radians.
  * A box is axis-aligned in its own frame and rotated by a single yaw angle
    about the world up axis.
  * The camera is a pinhole at `position`, oriented by yaw (about +Y) and
    pitch (about its right axis, positive tilts the view up, roll is always
    zero).  At yaw = pitch = 0 it looks along world +Z with +X to image right.

Scenes are immutable values: every edit returns a new ``Scene``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace


TWO_PI = 2.0 * math.pi

SCHEMA_VERSION = 1


class SceneError(Exception):
    """Base class for scene-model failures."""


class EditError(SceneError):
    """An edit references a missing id, or would produce an invalid scene."""


class LayoutParseError(SceneError):
    """A layout document could not be parsed or fails schema checks."""


class LayoutWarning(UserWarning):
    """Non-fatal layout-document issue (e.g. unknown fields were ignored)."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [-pi, pi).  NaN passes through (caught by validation)."""
    if not math.isfinite(angle):
        return angle
    return (angle + math.pi) % TWO_PI - math.pi


def _vec3(value) -> tuple[float, float, float]:
    x, y, z = value
    return (float(x), float(y), float(z))


@dataclass(frozen=True)
class OrientedBox:
    """A 3D box: center + (width, height, depth) extents + yaw about world up."""

    id: str
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        object.__setattr__(self, "size", _vec3(self.size))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))


@dataclass(frozen=True)
class ObjectSpec:
    """A box paired with the text prompt describing what should fill it."""

    box: OrientedBox
    prompt: str


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    yaw: float
    pitch: float
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "pitch", float(self.pitch))
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def default(cls, width: int = 512, height: int = 512) -> "Camera":
        """Canonical camera: at the origin, level, fx = fy = width, centered pp."""
        return cls(
            position=(0.0, 0.0, 0.0),
            yaw=0.0,
            pitch=0.0,
            fx=float(width),
            fy=float(width),
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
        )


@dataclass(frozen=True)
class Scene:
    camera: Camera
    objects: tuple[ObjectSpec, ...]
    background_prompt: str

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def object_ids(self) -> list[str]:
        return [spec.box.id for spec in self.objects]

    def find(self, object_id: str) -> ObjectSpec | None:
        for spec in self.objects:
            if spec.box.id == object_id:
                return spec
        return None


# --- edits ---------------------------------------------------------------

@dataclass(frozen=True)
class AddObject:
    spec: ObjectSpec


@dataclass(frozen=True)
class RemoveObject:
    id: str


@dataclass(frozen=True)
class ReplaceObject:
    id: str
    prompt: str


@dataclass(frozen=True)
class TransformObject:
    id: str
    box: OrientedBox


@dataclass(frozen=True)
class SetCamera:
    camera: Camera


SceneEdit = AddObject | RemoveObject | ReplaceObject | TransformObject | SetCamera


# --- validation ----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    """One broken invariant: which field, and the rule it breaks."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _check_finite(report: list[Violation], path: str, values) -> None:
    for v in values:
        if not math.isfinite(v):
            report.append(Violation(path, "must be finite"))
            return


def validate_scene(scene: Scene) -> list[Violation]:
    """Check every invariant; returns an empty list iff the scene is valid."""
    report: list[Violation] = []
    cam = scene.camera
    _check_finite(report, "camera.position", cam.position)
    _check_finite(report, "camera", (cam.yaw, cam.pitch, cam.fx, cam.fy, cam.cx, cam.cy))
    if not (cam.fx > 0 and cam.fy > 0):
        report.append(Violation("camera.fx/fy", "focal lengths must be positive"))
    if cam.width <= 0 or cam.height <= 0:
        report.append(Violation("camera.width/height", "resolution must be positive"))
    else:
        if not (0 <= cam.cx < cam.width):
            report.append(Violation("camera.cx", "principal point must lie inside the image"))
        if not (0 <= cam.cy < cam.height):
            report.append(Violation("camera.cy", "principal point must lie inside the image"))
    if not (-math.pi / 2 < cam.pitch < math.pi / 2):
        report.append(Violation("camera.pitch", "pitch must lie in (-pi/2, pi/2)"))

    if not scene.background_prompt:
        report.append(Violation("background_prompt", "prompt must be non-empty"))

    seen: set[str] = set()
    for i, spec in enumerate(scene.objects):
        box = spec.box
        prefix = f"objects[{i}]"
        if not box.id:
            report.append(Violation(f"{prefix}.id", "id must be non-empty"))
        if box.id in seen:
            report.append(Violation(f"{prefix}.id", f"duplicate id {box.id!r}"))
        seen.add(box.id)
        if not spec.prompt:
            report.append(Violation(f"{prefix}.prompt", "prompt must be non-empty"))
        _check_finite(report, f"{prefix}.center", box.center)
        _check_finite(report, f"{prefix}.size", box.size)
        _check_finite(report, f"{prefix}.yaw", (box.yaw,))
        if any(not (s > 0) for s in box.size):
            report.append(Violation(f"{prefix}.size", "size must be positive"))
        if math.isfinite(box.yaw) and not (-math.pi <= box.yaw < math.pi):
            report.append(Violation(f"{prefix}.yaw", "yaw must be normalized to [-pi, pi)"))
    return report


# --- edits ---------------------------------------------------------------

def apply_edit(scene: Scene, edit: SceneEdit) -> Scene:
    """Apply one edit, returning a new scene.  The input is never mutated."""
    if isinstance(edit, AddObject):
        new_id = edit.spec.box.id
        if scene.find(new_id) is not None:
            raise EditError(f"duplicate id {new_id!r}")
        result = replace(scene, objects=scene.objects + (edit.spec,))
    elif isinstance(edit, RemoveObject):
        if scene.find(edit.id) is None:
            raise EditError(f"unknown id {edit.id!r}")
        result = replace(
            scene, objects=tuple(s for s in scene.objects if s.box.id != edit.id)
        )
    elif isinstance(edit, ReplaceObject):
        if scene.find(edit.id) is None:
            raise EditError(f"unknown id {edit.id!r}")
        result = replace(
            scene,
            objects=tuple(
                replace(s, prompt=edit.prompt) if s.box.id == edit.id else s
                for s in scene.objects
            ),
        )
    elif isinstance(edit, TransformObject):
        if scene.find(edit.id) is None:
            raise EditError(f"unknown id {edit.id!r}")
        if edit.box.id != edit.id:
            raise EditError(
                f"transform box id {edit.box.id!r} does not match target {edit.id!r}"
            )
        result = replace(
            scene,
            objects=tuple(
                replace(s, box=edit.box) if s.box.id == edit.id else s
                for s in scene.objects
            ),
        )
    elif isinstance(edit, SetCamera):
        result = replace(scene, camera=edit.camera)
    else:
        raise EditError(f"unsupported edit {edit!r}")

    violations = validate_scene(result)
    if violations:
        raise EditError(
            "edit produces an invalid scene: " + "; ".join(str(v) for v in violations)
        )
    return result


def apply_edits(scene: Scene, edits) -> Scene:
    for edit in edits:
        scene = apply_edit(scene, edit)
    return scene


def diff_scenes(old: Scene, new: Scene) -> list[SceneEdit]:
    """Edits that transform `old` into `new`.

    Moved/rescaled/rotated objects come back as TransformObject (never
    remove+add); prompt changes as ReplaceObject.  Raises if the scenes
    differ in a way no edit can express (background prompt).
    """
    if old.background_prompt != new.background_prompt:
        raise SceneError("background prompt differs; no edit variant expresses that")
    edits: list[SceneEdit] = []
    old_ids = set(old.object_ids())
    new_ids = set(new.object_ids())
    for object_id in old.object_ids():
        if object_id not in new_ids:
            edits.append(RemoveObject(object_id))
    for spec in new.objects:
        object_id = spec.box.id
        if object_id not in old_ids:
            continue
        old_spec = old.find(object_id)
        if old_spec.box != spec.box:
            edits.append(TransformObject(object_id, spec.box))
        if old_spec.prompt != spec.prompt:
            edits.append(ReplaceObject(object_id, spec.prompt))
    for spec in new.objects:
        if spec.box.id not in old_ids:
            edits.append(AddObject(spec))
    if old.camera != new.camera:
        edits.append(SetCamera(new.camera))
    return edits


# --- layout document (on-disk format) -------------------------------------

_CAMERA_FIELDS = {"position", "yaw", "pitch", "fx", "fy", "cx", "cy", "width", "height"}
_OBJECT_FIELDS = {"id", "prompt", "center", "size", "yaw"}
_TOP_FIELDS = {"schema_version", "background_prompt", "camera", "objects"}


def scene_to_dict(scene: Scene) -> dict:
    cam = scene.camera
    return {
        "schema_version": SCHEMA_VERSION,
        "background_prompt": scene.background_prompt,
        "camera": {
            "position": list(cam.position),
            "yaw": cam.yaw,
            "pitch": cam.pitch,
            "fx": cam.fx,
            "fy": cam.fy,
            "cx": cam.cx,
            "cy": cam.cy,
            "width": cam.width,
            "height": cam.height,
        },
        "objects": [
            {
                "id": spec.box.id,
                "prompt": spec.prompt,
                "center": list(spec.box.center),
                "size": list(spec.box.size),
                "yaw": spec.box.yaw,
            }
            for spec in scene.objects
        ],
    }


def _warn_unknown(fields, known, where: str) -> None:
    unknown = sorted(set(fields) - known)
    if unknown:
        warnings.warn(
            f"ignoring unknown field(s) {unknown} in {where}", LayoutWarning, stacklevel=3
        )


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise LayoutParseError("layout document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise LayoutParseError(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})"
        )
    _warn_unknown(doc, _TOP_FIELDS, "layout document")
    try:
        cam_doc = doc["camera"]
        _warn_unknown(cam_doc, _CAMERA_FIELDS, "camera")
        camera = Camera(
            position=_vec3(cam_doc["position"]),
            yaw=cam_doc["yaw"],
            pitch=cam_doc["pitch"],
            fx=cam_doc["fx"],
            fy=cam_doc["fy"],
            cx=cam_doc["cx"],
            cy=cam_doc["cy"],
            width=cam_doc["width"],
            height=cam_doc["height"],
        )
        objects = []
        for i, obj_doc in enumerate(doc.get("objects", [])):
            _warn_unknown(obj_doc, _OBJECT_FIELDS, f"objects[{i}]")
            objects.append(
                ObjectSpec(
                    box=OrientedBox(
                        id=obj_doc["id"],
                        center=_vec3(obj_doc["center"]),
                        size=_vec3(obj_doc["size"]),
                        yaw=obj_doc.get("yaw", 0.0),
                    ),
                    prompt=obj_doc["prompt"],
                )
            )
        return Scene(
            camera=camera,
            objects=tuple(objects),
            background_prompt=doc["background_prompt"],
        )
    except KeyError as exc:
        raise LayoutParseError(f"missing required field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise LayoutParseError(f"malformed field value: {exc}") from exc


def save_layout(scene: Scene) -> bytes:
    """Serialize to the layout document format (JSON, 64-bit exact floats)."""
    return json.dumps(scene_to_dict(scene), indent=2).encode("utf-8")


def load_layout(data: bytes | str) -> Scene:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise LayoutParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scene_from_dict(doc)


# --- edit wire format (shared by the HTTP API and the CLI) ----------------

def edit_to_dict(edit: SceneEdit) -> dict:
    if isinstance(edit, AddObject):
        return {
            "op": "add",
            "object": {
                "id": edit.spec.box.id,
                "prompt": edit.spec.prompt,
                "center": list(edit.spec.box.center),
                "size": list(edit.spec.box.size),
                "yaw": edit.spec.box.yaw,
            },
        }
    if isinstance(edit, RemoveObject):
        return {"op": "remove", "id": edit.id}
    if isinstance(edit, ReplaceObject):
        return {"op": "replace", "id": edit.id, "prompt": edit.prompt}
    if isinstance(edit, TransformObject):
        return {
            "op": "transform",
            "id": edit.id,
            "box": {"center": list(edit.box.center), "size": list(edit.box.size), "yaw": edit.box.yaw},
        }
    if isinstance(edit, SetCamera):
        cam = edit.camera
        return {
            "op": "set_camera",
            "camera": {
                "position": list(cam.position),
                "yaw": cam.yaw,
                "pitch": cam.pitch,
                "fx": cam.fx,
                "fy": cam.fy,
                "cx": cam.cx,
                "cy": cam.cy,
                "width": cam.width,
                "height": cam.height,
            },
        }
    raise SceneError(f"unsupported edit {edit!r}")


def edit_from_dict(doc: dict) -> SceneEdit:
    try:
        op = doc["op"]
        if op == "add":
            obj = doc["object"]
            return AddObject(
                ObjectSpec(
                    box=OrientedBox(obj["id"], _vec3(obj["center"]), _vec3(obj["size"]), obj.get("yaw", 0.0)),
                    prompt=obj["prompt"],
                )
            )
        if op == "remove":
            return RemoveObject(doc["id"])
        if op == "replace":
            return ReplaceObject(doc["id"], doc["prompt"])
        if op == "transform":
            box = doc["box"]
            return TransformObject(
                doc["id"],
                OrientedBox(doc["id"], _vec3(box["center"]), _vec3(box["size"]), box.get("yaw", 0.0)),
            )
        if op == "set_camera":
            cam = doc["camera"]
            return SetCamera(
                Camera(
                    position=_vec3(cam["position"]),
                    yaw=cam["yaw"],
                    pitch=cam["pitch"],
                    fx=cam["fx"],
                    fy=cam["fy"],
                    cx=cam["cx"],
                    cy=cam["cy"],
                    width=cam["width"],
                    height=cam["height"],
                )
            )
    except KeyError as exc:
        raise LayoutParseError(f"edit missing required field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise LayoutParseError(f"malformed edit field: {exc}") from exc
    raise LayoutParseError(f"unknown edit op {doc.get('op')!r}")
