"""File formats: float32 raw + JSON sidecars, PNG export, geometry config, CSV histograms.

Raw files are little-endian float32 in C order of the in-memory arrays,
so for volumes x varies fastest, then y, then z.  Every write goes through
a temporary file in the target directory followed by an atomic rename.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .core import PolarSpec, ProjImage, VoxelVolume
from .errors import FormatError, IoError
from .geometry import GEOMETRY_KEYS, Geometry
from .metrics import DisplayWindow, window_to_display

RAW_DTYPE = np.dtype("<f4")


def _file_mode() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


_FILE_MODE = _file_mode()


# --------------------------------------------------------------------------
# low-level helpers
# --------------------------------------------------------------------------


def sidecar_path(raw_path) -> Path:
    return Path(raw_path).with_suffix(".json")


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.chmod(tmp, _FILE_MODE)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, text.encode())


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise IoError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _raw_bytes(data: np.ndarray) -> bytes:
    return np.ascontiguousarray(data, dtype=RAW_DTYPE).tobytes()


def _read_raw(path, shape: tuple[int, ...]) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise IoError(f"missing raw file {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    expected = int(np.prod(shape)) * RAW_DTYPE.itemsize
    if len(buf) != expected:
        raise FormatError(f"{path}: {len(buf)} bytes on disk, sidecar implies {expected}")
    return np.frombuffer(buf, dtype=RAW_DTYPE).reshape(shape).astype(np.float32)


def _require_keys(meta: dict, keys, path) -> None:
    missing = [k for k in keys if k not in meta]
    if missing:
        raise FormatError(f"{path}: sidecar missing keys {missing}")


# --------------------------------------------------------------------------
# volumes
# --------------------------------------------------------------------------

VOLUME_KEYS = ("nx", "ny", "nz", "spacing_mm", "origin_mm")


def volume_sidecar(vol: VoxelVolume) -> dict:
    nx, ny, nz = vol.shape_xyz
    return {
        "nx": nx,
        "ny": ny,
        "nz": nz,
        "spacing_mm": list(vol.spacing),
        "origin_mm": list(vol.origin),
        "units": vol.units,
    }


def save_volume(path, vol: VoxelVolume) -> None:
    path = Path(path)
    atomic_write_bytes(path, _raw_bytes(vol.data))
    write_json(sidecar_path(path), volume_sidecar(vol))


def load_volume(path) -> VoxelVolume:
    """Read ``<name>.raw`` with its ``<name>.json`` sidecar."""
    path = Path(path)
    meta = read_json(sidecar_path(path))
    _require_keys(meta, VOLUME_KEYS, sidecar_path(path))
    try:
        shape = (int(meta["nz"]), int(meta["ny"]), int(meta["nx"]))
        spacing = meta["spacing_mm"]
        spacing = (float(spacing),) * 3 if np.isscalar(spacing) else tuple(float(s) for s in spacing)
        origin = tuple(float(o) for o in meta["origin_mm"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed sidecar values: {exc}") from exc
    data = _read_raw(path, shape)
    return VoxelVolume(data=data, spacing=spacing, origin=origin, units=meta.get("units", "hu"))


# --------------------------------------------------------------------------
# projection images
# --------------------------------------------------------------------------

IMAGE_KEYS = ("nu", "nv", "spacing_u", "spacing_v", "space", "view_angle_deg", "kind")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def image_sidecar(img: ProjImage) -> dict:
    return {
        "nu": img.nu,
        "nv": img.nv,
        "spacing_u": float(img.spacing_u),
        "spacing_v": float(img.spacing_v),
        "space": img.space,
        "view_angle_deg": float(img.view_angle),
        "kind": img.kind,
        "polar": img.polar.to_dict() if img.polar is not None else None,
        "meta": _jsonable(img.meta),
    }


def save_image(path, img: ProjImage) -> None:
    path = Path(path)
    atomic_write_bytes(path, _raw_bytes(img.data))
    write_json(sidecar_path(path), image_sidecar(img))


def load_image(path) -> ProjImage:
    path = Path(path)
    meta = read_json(sidecar_path(path))
    _require_keys(meta, IMAGE_KEYS, sidecar_path(path))
    data = _read_raw(path, (int(meta["nv"]), int(meta["nu"])))
    polar = PolarSpec.from_dict(meta["polar"]) if meta.get("polar") else None
    return ProjImage(
        data=data,
        spacing_u=float(meta["spacing_u"]),
        spacing_v=float(meta["spacing_v"]),
        space=meta["space"],
        view_angle=float(meta["view_angle_deg"]),
        kind=meta["kind"],
        polar=polar,
        meta=dict(meta.get("meta") or {}),
    )


# --------------------------------------------------------------------------
# PNG export
# --------------------------------------------------------------------------


def _to_uint8(data, window: DisplayWindow) -> np.ndarray:
    return np.rint(window_to_display(np.asarray(data, dtype=np.float64), window)).astype(np.uint8)


def png_bytes(array_u8: np.ndarray) -> bytes:
    buf = _io.BytesIO()
    Image.fromarray(array_u8).save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, img, window: DisplayWindow = DisplayWindow()) -> None:
    """8-bit grayscale PNG of a windowed image (ProjImage or 2D array)."""
    data = img.data if isinstance(img, ProjImage) else img
    atomic_write_bytes(path, png_bytes(_to_uint8(data, window)))


def save_png_rgb(path, channels: np.ndarray, window: DisplayWindow = DisplayWindow()) -> None:
    rgb = np.moveaxis(_to_uint8(channels, window), 0, -1)
    atomic_write_bytes(path, png_bytes(np.ascontiguousarray(rgb)))


def read_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im).copy()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# --------------------------------------------------------------------------
# stacks
# --------------------------------------------------------------------------


def stack_files(prefix) -> dict:
    prefix = Path(prefix)
    files = {f"ch{i}": prefix.with_name(f"{prefix.name}_ch{i}.raw") for i in range(3)}
    files["sidecar"] = prefix.with_name(prefix.name + ".json")
    files["png"] = prefix.with_name(prefix.name + ".png")
    return files


def save_stack(prefix, st, window: DisplayWindow = DisplayWindow()) -> dict:
    """Three float32 channel raws, a JSON sidecar and a windowed RGB PNG."""
    files = stack_files(prefix)
    for i in range(3):
        atomic_write_bytes(files[f"ch{i}"], _raw_bytes(st.channels[i]))
    side = {
        "combo": st.combo,
        "views_deg": [float(v) for v in st.views],
        "rows": int(st.channels.shape[1]),
        "cols": int(st.channels.shape[2]),
        "spacing_u": float(st.spacing_u),
        "spacing_v": float(st.spacing_v),
        "space": st.space,
        "polar": st.polar.to_dict() if st.polar is not None else None,
        "channels": [files[f"ch{i}"].name for i in range(3)],
        "png": files["png"].name,
        "window": [window.lo, window.hi],
        "meta": _jsonable(st.meta),
    }
    write_json(files["sidecar"], side)
    save_png_rgb(files["png"], st.channels, window)
    return files


def load_stack(prefix):
    from .views import ViewStack

    files = stack_files(prefix)
    side = read_json(files["sidecar"])
    _require_keys(side, ("combo", "rows", "cols", "spacing_u", "spacing_v", "space"), files["sidecar"])
    shape = (int(side["rows"]), int(side["cols"]))
    chans = np.stack([_read_raw(files[f"ch{i}"], shape) for i in range(3)])
    return ViewStack(
        channels=chans,
        combo=side["combo"],
        spacing_u=float(side["spacing_u"]),
        spacing_v=float(side["spacing_v"]),
        space=side["space"],
        views=tuple(side.get("views_deg", ())),
        polar=PolarSpec.from_dict(side["polar"]) if side.get("polar") else None,
        meta=dict(side.get("meta") or {}),
    )


# --------------------------------------------------------------------------
# geometry config
# --------------------------------------------------------------------------


def _format_value(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def geometry_text(geom: Geometry) -> str:
    cfg = geom.to_config()
    return "".join(f"{k} = {_format_value(cfg[k])}\n" for k in GEOMETRY_KEYS)


def save_geometry(path, geom: Geometry) -> None:
    atomic_write_bytes(path, geometry_text(geom).encode())


def parse_geometry(text: str, source: str = "<string>") -> Geometry:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{source}:{lineno}: expected 'key = value'")
        key = key.strip()
        if key not in GEOMETRY_KEYS:
            raise FormatError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            cfg[key] = int(value) if key in ("det_nu", "det_nv") else float(value)
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: bad value for {key}: {value.strip()!r}") from exc
    missing = [k for k in GEOMETRY_KEYS if k not in cfg]
    if missing:
        raise FormatError(f"{source}: missing keys {missing}")
    return Geometry.from_config(cfg)


def load_geometry(path) -> Geometry:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise IoError(f"missing geometry file {path}") from exc
    return parse_geometry(text, str(path))


# --------------------------------------------------------------------------
# analysis / metrics outputs
# --------------------------------------------------------------------------


def save_histograms(csv_path, hists) -> Path:
    """CSV of all histograms plus a summary JSON next to it; returns the JSON path."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "bin_lo", "bin_hi", "count"])
    for h in hists:
        for metric, lo, hi, count in h.rows():
            w.writerow([metric, repr(lo), repr(hi), count])
    atomic_write_bytes(csv_path, buf.getvalue().encode())
    summary_path = Path(csv_path).with_suffix(".summary.json")
    write_json(summary_path, {h.metric: h.summary for h in hists})
    return summary_path


def load_histogram_csv(path) -> dict:
    """metric -> (bin_edges, counts) from a histogram CSV."""
    rows: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["metric", "bin_lo", "bin_hi", "count"]:
            raise FormatError(f"{path}: unexpected header {reader.fieldnames}")
        for r in reader:
            rows.setdefault(r["metric"], []).append((float(r["bin_lo"]), float(r["bin_hi"]), int(r["count"])))
    out = {}
    for m, rs in rows.items():
        edges = np.array([r[0] for r in rs] + [rs[-1][1]])
        out[m] = (edges, np.array([r[2] for r in rs]))
    return out
