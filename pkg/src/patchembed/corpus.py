"""Image corpora: manifests, decoded images, and label maps.

Manifest format: one record per line, ``image_path<TAB>label_map_path`` with
the label path optional; ``#`` starts a comment. Paths are resolved relative
to the manifest's directory. Label maps are single-channel 16-bit PNGs where
the pixel value is the segment id.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DataError
from .validation import check_image_array, check_label_array


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel segment ids, optionally with a designated foreground id."""

    labels: np.ndarray  # H x W int32, >= 0
    foreground_label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", check_label_array(self.labels))
        self.labels.setflags(write=False)
        if self.foreground_label is not None:
            fg = int(self.foreground_label)
            if not (self.labels == fg).any():
                raise DataError(f"foreground label {fg} absent from label map")
            object.__setattr__(self, "foreground_label", fg)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    def ids(self):
        return np.unique(self.labels)

    def with_foreground(self, label):
        return LabelMap(self.labels, foreground_label=label)


@dataclass(frozen=True)
class ImageRecord:
    """A decoded corpus image plus optional ground-truth label map."""

    image_id: str
    pixels: np.ndarray  # H x W x 3 float32 in [0, 1]
    label_map: LabelMap | None = None
    label_map_ref: str | None = None
    source_path: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pixels", check_image_array(self.pixels, self.image_id))
        self.pixels.setflags(write=False)
        lm = self.label_map
        if lm is not None and (lm.height, lm.width) != (self.height, self.width):
            raise DataError(
                f"{self.image_id}: label map is {lm.height}x{lm.width}, "
                f"image is {self.height}x{self.width}"
            )

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def load_image(path):
    """Decode PNG/JPEG into float32 [0,1] RGB; grayscale is replicated."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise DataError(f"image not found: {path}") from None
    except OSError as exc:
        raise DataError(f"unreadable image {path}: {exc}") from None
    return arr


def save_image(pixels, path):
    arr = check_image_array(pixels)
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def load_label_map(path, foreground_label=None):
    """Read a 16-bit (or 8-bit) single-channel PNG of segment ids."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("I", "I;16", "L", "P"):
                raise DataError(f"label map {path}: unsupported mode {im.mode}")
            arr = np.asarray(im.convert("I"), dtype=np.int32)
    except FileNotFoundError:
        raise DataError(f"label map not found: {path}") from None
    except OSError as exc:
        raise DataError(f"unreadable label map {path}: {exc}") from None
    return LabelMap(arr, foreground_label=foreground_label)


def save_label_map(label_map, path):
    labels = label_map.labels if isinstance(label_map, LabelMap) else check_label_array(label_map)
    if labels.max() > np.iinfo(np.uint16).max:
        raise DataError("segment ids exceed 16-bit label PNG range")
    Image.fromarray(labels.astype(np.uint16), mode="I;16").save(path)


def parse_manifest(path):
    """Yield (line_no, image_path, label_path_or_None) without touching pixels."""
    if not os.path.isfile(path):
        raise DataError(f"manifest not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].rstrip("\n").strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                entries.append((line_no, parts[0], None))
            elif len(parts) == 2 and parts[0] and parts[1]:
                entries.append((line_no, parts[0], parts[1]))
            else:
                raise DataError(f"{path}:{line_no}: malformed manifest line: {raw.rstrip()!r}")
    return entries


def load_manifest(path, foreground_label=None):
    """Load every record in file order, validating label-map dimensions.

    ``foreground_label`` designates the foreground id on loaded label maps
    (for binary foreground/background ground truth it is conventionally 1).
    """
    base = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    for line_no, img_rel, lbl_rel in parse_manifest(path):
        image_id = img_rel
        if image_id in seen:
            raise DataError(f"{path}:{line_no}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        img_path = os.path.join(base, img_rel)
        pixels = load_image(img_path)
        label_map = None
        if lbl_rel is not None:
            fg = foreground_label
            lm = load_label_map(os.path.join(base, lbl_rel))
            if fg is not None and not (lm.labels == int(fg)).any():
                fg = None
            label_map = LabelMap(lm.labels, foreground_label=fg)
            if (label_map.height, label_map.width) != pixels.shape[:2]:
                raise DataError(
                    f"{image_id}: label map dimensions {label_map.height}x{label_map.width} "
                    f"do not match image {pixels.shape[0]}x{pixels.shape[1]}"
                )
        records.append(
            ImageRecord(
                image_id=image_id,
                pixels=pixels,
                label_map=label_map,
                label_map_ref=lbl_rel,
                source_path=img_path,
            )
        )
    return records


def write_manifest(entries, path):
    """Write (image_path, label_path_or_None) pairs as a manifest file."""
    with open(path, "w", encoding="utf-8") as fh:
        for img_rel, lbl_rel in entries:
            if lbl_rel is None:
                fh.write(f"{img_rel}\n")
            else:
                fh.write(f"{img_rel}\t{lbl_rel}\n")
