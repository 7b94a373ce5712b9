"""Dataset manifests: JSON-lines entries plus a sibling class-name file.

A manifest at ``foo.jsonl`` has one JSON object per line:

    {"image_id": "img0", "image_path": "images/img0.png",
     "saliency_path": "...", "feature_path": "...",
     "dense_feature_path": "...", "gt_mask_path": "..."}

Only ``image_id`` and ``image_path`` are mandatory. Relative paths resolve
against the manifest's directory. Class names live in ``foo.classes.txt``
next to the manifest, one name per line, index 0 being the background; when
that file is absent the manifest carries the single class ["background"].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ManifestError

_PATH_KEYS = ("image_path", "saliency_path", "feature_path",
              "dense_feature_path", "gt_mask_path")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: Path
    saliency_path: Optional[Path] = None
    feature_path: Optional[Path] = None
    dense_feature_path: Optional[Path] = None
    gt_mask_path: Optional[Path] = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    class_names: tuple[str, ...] = ("background",)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self, image_id: str) -> ManifestEntry:
        for entry in self.entries:
            if entry.image_id == image_id:
                return entry
        raise KeyError(image_id)


def classes_path_for(manifest_path) -> Path:
    p = Path(manifest_path)
    return p.with_name(p.stem + ".classes.txt")


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    """Parse a JSON-lines manifest, preserving entry order.

    Raises ManifestError for malformed lines (with the line number),
    duplicate image ids, and, when ``check_paths`` is set, referenced files
    that do not exist.
    """
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed line ({exc})") from exc
            if not isinstance(raw, dict) or "image_id" not in raw or "image_path" not in raw:
                raise ManifestError(
                    f"{path}:{lineno}: entry needs image_id and image_path"
                )
            image_id = str(raw["image_id"])
            if image_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
            seen.add(image_id)
            paths = {}
            for key in _PATH_KEYS:
                value = raw.get(key)
                if value is None:
                    continue
                resolved = base / value if not Path(value).is_absolute() else Path(value)
                if check_paths and not resolved.exists():
                    raise ManifestError(
                        f"{path}:{lineno}: {image_id}: {key} {value!r} does not exist"
                    )
                paths[key] = resolved
            entries.append(ManifestEntry(image_id=image_id, **paths))
    class_names = ("background",)
    cls_file = classes_path_for(path)
    if cls_file.exists():
        names = [ln.strip() for ln in cls_file.read_text(encoding="utf-8").splitlines()
                 if ln.strip()]
        if names:
            class_names = tuple(names)
    return DatasetManifest(entries=tuple(entries), class_names=class_names)


def write_manifest(manifest: DatasetManifest, path, relative_to=None) -> None:
    """Serialize a manifest (and its class file) back to disk."""
    path = Path(path)
    rel = Path(relative_to) if relative_to is not None else None

    def fmt(p: Optional[Path]):
        if p is None:
            return None
        return str(p.relative_to(rel)) if rel is not None else str(p)

    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            rec = {"image_id": e.image_id, "image_path": fmt(e.image_path)}
            for key in _PATH_KEYS[1:]:
                value = fmt(getattr(e, key))
                if value is not None:
                    rec[key] = value
            fh.write(json.dumps(rec) + "\n")
    if manifest.class_names != ("background",):
        classes_path_for(path).write_text(
            "\n".join(manifest.class_names) + "\n", encoding="utf-8"
        )
