"""Per-frame embedding export.

Encoders map a stack of grayscale frames to one row per frame.  Two
built-in encoders are deterministic and dependency-light; the heavier
pretrained vision encoders load lazily and fail with a clear message
when their packages or weights are absent.  Exported rows are always
unit length.
"""

from pathlib import Path

import numpy as np

from vidprep.errors import PrepError
from vidprep.formats import (
    EmbeddingSheet,
    read_embedding_sheet,
    read_frame_archive,
    write_embedding_sheet,
)


def _encode_hist64(pixels: np.ndarray) -> np.ndarray:
    """64-bin intensity histogram of each frame."""
    rows = np.zeros((pixels.shape[0], 64), dtype=np.float64)
    for i in range(pixels.shape[0]):
        counts, _ = np.histogram(pixels[i], bins=64, range=(0, 256))
        rows[i] = counts
    return rows


def _encode_pool16(pixels: np.ndarray) -> np.ndarray:
    """Mean intensity over a 4x4 grid of each frame."""
    n, h, w = pixels.shape
    ys = np.linspace(0, h, 5).astype(int)
    xs = np.linspace(0, w, 5).astype(int)
    rows = np.zeros((n, 16), dtype=np.float64)
    for i in range(n):
        cell = 0
        for a in range(4):
            for b in range(4):
                block = pixels[i, ys[a]:ys[a + 1], xs[b]:xs[b + 1]]
                rows[i, cell] = block.mean(dtype=np.float64) if block.size else 0.0
                cell += 1
    return rows


def _pretrained_encoder(model_id: str):
    def encode(pixels: np.ndarray) -> np.ndarray:
        try:
            import torch
            from transformers import AutoImageProcessor, AutoModel
        except ImportError as exc:
            raise PrepError(
                f"encoder {model_id} needs torch and transformers installed"
            ) from exc
        try:
            processor = AutoImageProcessor.from_pretrained(model_id)
            model = AutoModel.from_pretrained(model_id)
        except OSError as exc:
            raise PrepError(
                f"weights for {model_id} are not available locally: {exc}"
            ) from exc
        model.eval()
        rgb = np.repeat(pixels[:, :, :, None], 3, axis=3)
        rows = []
        with torch.no_grad():
            for start in range(0, rgb.shape[0], 32):
                batch = [rgb[i] for i in range(start, min(start + 32, rgb.shape[0]))]
                inputs = processor(images=batch, return_tensors="pt")
                out = model(**inputs)
                rows.append(out.pooler_output.numpy())
        return np.concatenate(rows, axis=0).astype(np.float64)

    return encode


ENCODERS = {
    "hist64": _encode_hist64,
    "pool16": _encode_pool16,
    "clip-vit-b32": _pretrained_encoder("openai/clip-vit-base-patch32"),
    "dino-vits16": _pretrained_encoder("facebook/dino-vits16"),
}


def encode_frames(pixels: np.ndarray, encoder: str) -> EmbeddingSheet:
    """Run one encoder over a frame stack and unit-normalize the rows.

    Raises PrepError for unknown encoder names or when any frame maps
    to a zero vector, which cannot be normalized.
    """
    if encoder not in ENCODERS:
        known = ", ".join(sorted(ENCODERS))
        raise PrepError(f"unknown encoder {encoder!r}; available: {known}")
    rows = np.asarray(ENCODERS[encoder](np.asarray(pixels, dtype=np.uint8)))
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise PrepError(
            f"encoder {encoder} produced a zero embedding for frame {zero[0]}"
        )
    return EmbeddingSheet(rows=(rows / norms[:, None]).astype(np.float32), tag=encoder)


def export_embeddings(archive_path, out_path, encoder: str) -> EmbeddingSheet:
    """Embed every frame of an archive and write the sheet.

    Refuses to overwrite an existing sheet whose dimensionality
    differs, since downstream caches key on the stored shape.
    """
    clip = read_frame_archive(archive_path)
    if clip.pixels is None:
        raise PrepError(f"{archive_path} stores no pixels; re-extract with them")
    sheet = encode_frames(clip.pixels, encoder)
    out = Path(out_path)
    if out.exists():
        old = read_embedding_sheet(out)
        if old.rows.shape[1] != sheet.rows.shape[1]:
            raise PrepError(
                f"{out} already holds {old.rows.shape[1]}-d rows tagged "
                f"{old.tag!r}; refusing to overwrite with "
                f"{sheet.rows.shape[1]}-d rows"
            )
    write_embedding_sheet(sheet, out)
    return sheet
