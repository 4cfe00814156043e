"""Cut a watchable skim from a frame archive and a summary file."""

from pathlib import Path

from PIL import Image

from vidprep.errors import PrepError
from vidprep.formats import (
    FrameClip,
    clip_diffs,
    read_frame_archive,
    read_summary_file,
    write_frame_archive,
)


def cut_skim(archive_path, summary_path, out_path) -> dict:
    """Write the frames a summary selects as a .gif preview or a trimmed archive.

    The summary's intervals index the archive's frame grid, so both
    files must agree on the frame count.  Trimmed archives get a fresh
    difference series; the old one does not apply across cut points.

    Returns a stats dict with the selected frame count and duration.
    """
    clip = read_frame_archive(archive_path)
    if clip.pixels is None:
        raise PrepError(f"{archive_path} stores no pixels; re-extract with them")
    doc = read_summary_file(summary_path)
    if doc["n_frames"] != clip.count:
        raise PrepError(
            f"summary covers {doc['n_frames']} frames but archive has {clip.count}"
        )
    indices = [t for s, e in doc["intervals"] for t in range(s, e)]
    if not indices:
        raise PrepError(f"{summary_path} selects no frames")
    out = Path(out_path)
    frames = clip.pixels[indices]
    if out.suffix.lower() == ".gif":
        ms = max(10, round(1000 * clip.fps_den / clip.fps_num))
        images = [Image.fromarray(f, mode="L") for f in frames]
        out.parent.mkdir(parents=True, exist_ok=True)
        images[0].save(
            out, save_all=True, append_images=images[1:], duration=ms, loop=0,
        )
    elif out.suffix.lower() == ".psfr":
        trimmed = FrameClip(
            fps_num=clip.fps_num, fps_den=clip.fps_den,
            pixels=frames, diffs=clip_diffs(frames),
        )
        write_frame_archive(trimmed, out)
    else:
        raise PrepError(f"unsupported skim type {out.suffix!r}; use .gif or .psfr")
    return {
        "frames": len(indices),
        "seconds": len(indices) * clip.fps_den / clip.fps_num,
        "out": str(out),
    }
