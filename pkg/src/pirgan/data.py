"""Few-shot datasets, the procedural two-domain toy set, and image grids."""

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, UnidentifiedImageError

from ._validation import InvalidArgumentError, as_image_batch, check_positive_int

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".gif", ".tif", ".tiff"}
SHAPES = ("circle", "square", "triangle")


@dataclass
class FewShotDataset:
    images: torch.Tensor
    domain_name: str
    manifest: list = field(default_factory=list)
    k_shot_indices: list = None

    def __len__(self):
        return self.images.shape[0]

    @property
    def resolution(self):
        return self.images.shape[-1]

    @property
    def k_shot_images(self):
        if self.k_shot_indices is None:
            return self.images
        return self.images[self.k_shot_indices]

    def content_labels(self):
        """(shape index, center x, center y) per image; toy datasets only."""
        shape = np.array([SHAPES.index(m["content"]["shape"]) for m in self.manifest])
        centers = np.array([[m["content"]["cx"], m["content"]["cy"]] for m in self.manifest])
        return shape, centers


def to_uint8(images):
    x = as_image_batch(images).detach().cpu().numpy()
    return np.clip(np.round((x + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_uint8(array):
    """(N, H, W, 3) or (H, W, 3) uint8 -> float tensor in [-1, 1], channels first."""
    a = np.asarray(array, dtype=np.float32)
    if a.ndim == 3:
        a = a[None]
    return torch.from_numpy(a.transpose(0, 3, 1, 2) / 127.5 - 1.0).contiguous()


def image_hash(image):
    return hashlib.sha256(to_uint8(image).tobytes()).hexdigest()


def _center_crop_resize(img, resolution):
    w, h = img.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    img = img.crop((left, top, left + side, top + side))
    if side != resolution:
        img = img.resize((resolution, resolution), Image.BICUBIC)
    return img


def load_dataset(path, resolution, domain_name=None, manifest_path=None):
    """Read every decodable image in ``path`` (sorted by name).

    Images are center-cropped, resized and scaled to [-1, 1]. A manifest of
    file names and content hashes is written to ``manifest_path`` (default
    ``<path>/manifest.json``; pass ``False`` to skip).
    """
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if path.is_dir() else []
    if not files:
        raise FileNotFoundError(f"no images found in {path}")
    images, manifest = [], []
    for p in files:
        try:
            with Image.open(p) as img:
                arr = np.asarray(_center_crop_resize(img.convert("RGB"), resolution))
        except (UnidentifiedImageError, OSError) as exc:
            warnings.warn(f"skipping undecodable image {p.name}: {exc}")
            continue
        images.append(arr)
        manifest.append({
            "index": len(manifest),
            "file": p.name,
            "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
        })
    if not images:
        raise InvalidArgumentError(f"no decodable images in {path}")
    ds = FewShotDataset(from_uint8(np.stack(images)), domain_name or path.name, manifest)
    if manifest_path is not False:
        write_manifest(ds, manifest_path or path / "manifest.json")
    return ds


def write_manifest(ds, path):
    doc = {"domain_name": ds.domain_name, "k_shot_indices": ds.k_shot_indices, "files": ds.manifest}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return path


def select_k_shot(ds, k, seed):
    """Choose a deterministic k-subset as a function of (manifest order, k, seed)."""
    k = check_positive_int(k, "k")
    if k > len(ds):
        raise InvalidArgumentError(f"k={k} exceeds dataset size {len(ds)}")
    rng = np.random.default_rng(seed)
    idx = sorted(int(i) for i in rng.choice(len(ds), size=k, replace=False))
    return replace(ds, k_shot_indices=idx)


@dataclass
class ToySpec:
    """Recipe for paired source/target shape images.

    Both domains render the same content (shape, center, size, rotation, tone).
    The source style is a filled shape on a dark gradient; the target style is
    a dark outline on a light textured background.
    """

    resolution: int = 32
    n_source: int = 2000
    n_target: int = 1000
    seed: int = 0
    supersample: int = 4


SOURCE_PALETTE = ((235, 120, 60), (240, 200, 70), (220, 80, 110), (250, 160, 120))
TARGET_PALETTE = ((20, 40, 120), (20, 100, 90), (70, 30, 110), (10, 10, 10))


def sample_content(rng):
    return {
        "shape": SHAPES[int(rng.integers(len(SHAPES)))],
        "cx": float(rng.uniform(0.3, 0.7)),
        "cy": float(rng.uniform(0.3, 0.7)),
        "size": float(rng.uniform(0.16, 0.3)),
        "rotation": float(rng.uniform(0.0, 2 * np.pi)),
        "tone": int(rng.integers(len(SOURCE_PALETTE))),
    }


def _polygon(content, scale):
    cx, cy = content["cx"] * scale, content["cy"] * scale
    r = content["size"] * scale
    n = 4 if content["shape"] == "square" else 3
    angles = content["rotation"] + 2 * np.pi * np.arange(n) / n
    return [(cx + r * np.cos(a), cy + r * np.sin(a)) for a in angles]


def _background(domain, side):
    t = np.linspace(0.0, 1.0, side)[:, None, None]
    if domain == "source":
        bg = (1 - t) * np.array([25, 30, 70]) + t * np.array([60, 90, 140])
        return np.broadcast_to(bg, (side, side, 3)).copy()
    yy, xx = np.mgrid[0:side, 0:side]
    texture = 6 * np.sin(xx * 0.35) * np.sin(yy * 0.27)
    return (np.full((side, side, 3), 235.0) + texture[..., None]).clip(0, 255)


def render(content, domain, resolution, supersample=4):
    """Draw one content record in ``domain`` ('source' or 'target') as uint8 HWC."""
    side = resolution * supersample
    img = Image.fromarray(_background(domain, side).astype(np.uint8))
    draw = ImageDraw.Draw(img)
    r = content["size"] * side
    cx, cy = content["cx"] * side, content["cy"] * side
    if domain == "source":
        fill, outline, width = SOURCE_PALETTE[content["tone"]], None, 0
    else:
        fill, outline, width = None, TARGET_PALETTE[content["tone"]], int(round(0.06 * side))
    if content["shape"] == "circle":
        draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=fill, outline=outline, width=width)
    else:
        pts = _polygon(content, side)
        if fill is not None:
            draw.polygon(pts, fill=fill)
        else:
            draw.line(pts + [pts[0], pts[1]], fill=outline, width=width, joint="curve")
    img = img.resize((resolution, resolution), Image.LANCZOS)
    return np.asarray(img)


def generate_toy_domains(spec=None):
    """Return paired (source, target) datasets; image i shares content across domains."""
    spec = spec or ToySpec()
    rng = np.random.default_rng(spec.seed)
    n = max(spec.n_source, spec.n_target)
    contents = [sample_content(rng) for _ in range(n)]
    out = []
    for domain, count in (("source", spec.n_source), ("target", spec.n_target)):
        arrays = np.stack([render(c, domain, spec.resolution, spec.supersample)
                           for c in contents[:count]])
        images = from_uint8(arrays)
        manifest = [
            {"index": i, "file": f"{domain}_{i:05d}", "sha256": hashlib.sha256(a.tobytes()).hexdigest(),
             "content": contents[i]}
            for i, a in enumerate(arrays)
        ]
        out.append(FewShotDataset(images, f"toy_{domain}", manifest))
    return out[0], out[1]


def emit_grid(images, rows, cols, path):
    """Tile images row-major into one PNG; [-1, 1] maps to [0, 255]."""
    if images is None or len(images) == 0:
        raise InvalidArgumentError("no images to tile")
    batch = to_uint8(images)
    n, _, r, _ = batch.shape
    if n > rows * cols:
        raise InvalidArgumentError(f"{n} images do not fit a {rows}x{cols} grid")
    canvas = np.zeros((rows * r, cols * r, 3), dtype=np.uint8)
    for i, img in enumerate(batch):
        row, col = divmod(i, cols)
        canvas[row * r:(row + 1) * r, col * r:(col + 1) * r] = img.transpose(1, 2, 0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas).save(path)
    return path


def read_grid_cell(path, row, col, resolution):
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"))
    cell = arr[row * resolution:(row + 1) * resolution, col * resolution:(col + 1) * resolution]
    return from_uint8(cell)[0]
