"""Dataset recipes, pair generation and resumable batch output."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .core import PolarSpec, ProjImage, VoxelVolume
from .errors import InvalidSpec, PerspDeformError
from .geometry import Geometry, rebin, virtual_detector
from .metrics import DisplayWindow
from .phantom import BeadPhantomSpec, generate, rotate_augment
from .projector import MU_WATER, cone_project, parallel_project
from .resample import to_log_polar, to_polar
from .views import COMBOS, ViewStack, flip_image, render_opbp, stack

MANIFEST = "manifest.json"
SPACES = ("cartesian", "polar", "logpolar")
AUGMENT_MODES = ("view", "rotate")

# combo -> views it needs besides 0
_COMBO_VIEWS = {
    "single": set(),
    "comp_dup": {180},
    "comp_diff": {180},
    "ortho_naive": {90},
    "ortho_opbp": {90},
    "triple": {90, 180},
}


# --------------------------------------------------------------------------
# geometry presets
# --------------------------------------------------------------------------

_FLAT_PANEL = dict(d_sd=1200.0, d_si=750.0, det_nu=1240, det_nv=960, s_u=0.308, s_v=0.308, p_u=619.5, p_v=479.5)

PRESETS = {
    # name: (physical geometry, default virtual grid (nu, nv, spacing) or None)
    "bead": (Geometry(**_FLAT_PANEL), (512, 512, 0.625)),
    "chest": (Geometry(**_FLAT_PANEL), (472, 352, 0.8)),
    "head": (Geometry(960.0, 600.0, 512, 512, 0.8, 0.8, 255.5, 255.5), None),
}


def preset(name: str) -> Geometry:
    """Virtual-detector geometry of a named preset."""
    try:
        geom, grid = PRESETS[name]
    except KeyError:
        raise InvalidSpec(f"unknown geometry preset {name!r}; choose from {sorted(PRESETS)}") from None
    if grid is None:
        return virtual_detector(geom)
    return rebin(geom, grid[0], grid[1], grid[2])


def resolve_geometry(value, grid=None) -> Geometry:
    """Geometry from a preset name, a config file path, a config dict or a Geometry."""
    if isinstance(value, Geometry):
        geom = value
    elif isinstance(value, dict):
        geom = Geometry.from_config(value)
    elif isinstance(value, str) and value in PRESETS:
        geom = preset(value) if grid is None else PRESETS[value][0]
    else:
        geom = io.load_geometry(value)
    if grid is not None:
        nu, nv, spacing = grid
        geom = rebin(geom, int(nu), int(nv), float(spacing))
    elif not geom.is_virtual:
        geom = virtual_detector(geom)
    return geom


# --------------------------------------------------------------------------
# recipe
# --------------------------------------------------------------------------


@dataclass
class DatasetRecipe:
    geometry: object = "bead"
    grid: tuple | None = None
    views: tuple = (0, 180)
    space: str = "cartesian"
    combo: str = "comp_dup"
    angles: tuple = (0, 15, 30, 45, 60, 75)
    window: DisplayWindow = field(default_factory=DisplayWindow)
    out_dir: str = "dataset"
    seed: int = 0
    phantom: dict = field(default_factory=dict)
    polar: dict = field(default_factory=dict)
    ortho_mode: str = "exact"
    mu_water: float = MU_WATER
    augment: str = "view"

    def __post_init__(self):
        if isinstance(self.window, (list, tuple)):
            self.window = DisplayWindow(*self.window)
        elif isinstance(self.window, str):
            self.window = DisplayWindow.parse(self.window)
        self.views = tuple(int(v) for v in self.views)
        self.angles = tuple(float(a) for a in self.angles)
        if self.grid is not None:
            self.grid = tuple(self.grid)
        self.validate()

    def validate(self) -> None:
        if self.combo not in COMBOS:
            raise InvalidSpec(f"unknown combo {self.combo!r}")
        if self.space not in SPACES:
            raise InvalidSpec(f"unknown space {self.space!r}")
        if self.augment not in AUGMENT_MODES:
            raise InvalidSpec(f"unknown augmentation mode {self.augment!r}")
        if self.ortho_mode not in ("exact", "paper_approx"):
            raise InvalidSpec(f"unknown orthogonal projection mode {self.ortho_mode!r}")
        vs = set(self.views)
        if not vs <= {0, 90, 180} or 0 not in vs:
            raise InvalidSpec(f"views must include 0 and be a subset of {{0, 90, 180}}, got {sorted(vs)}")
        need = _COMBO_VIEWS[self.combo]
        if not need <= vs:
            raise InvalidSpec(f"combo {self.combo!r} needs views {sorted(need | {0})}, recipe has {sorted(vs)}")
        if not self.angles:
            raise InvalidSpec("need at least one augmentation angle")
        if int(self.seed) < 0:
            raise InvalidSpec("seed must be non-negative")
        if self.space != "cartesian":
            self.polar_spec()
        if self.phantom:
            self.phantom_spec(0)

    def geometry_obj(self) -> Geometry:
        return resolve_geometry(self.geometry, self.grid)

    def polar_spec(self) -> PolarSpec:
        try:
            return PolarSpec(**self.polar)
        except TypeError as exc:
            raise InvalidSpec(f"bad polar parameters: {exc}") from exc

    def phantom_spec(self, seed: int) -> BeadPhantomSpec:
        kw = {}
        for k, v in self.phantom.items():
            kw[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
        try:
            spec = BeadPhantomSpec(**{**kw, "seed": int(seed)})
        except TypeError as exc:
            raise InvalidSpec(f"bad phantom parameters: {exc}") from exc
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["window"] = [self.window.lo, self.window.hi]
        d["views"] = list(self.views)
        d["angles"] = list(self.angles)
        d["grid"] = list(self.grid) if self.grid is not None else None
        if isinstance(self.geometry, Geometry):
            d["geometry"] = self.geometry.to_config()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecipe":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"unknown recipe keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "DatasetRecipe":
        return cls.from_dict(io.read_json(path))


# --------------------------------------------------------------------------
# pair generation
# --------------------------------------------------------------------------


def load_volume(path) -> VoxelVolume:
    return io.load_volume(path)


def _to_space(img: ProjImage, recipe: DatasetRecipe) -> ProjImage:
    if recipe.space == "polar":
        return to_polar(img, recipe.polar_spec())
    if recipe.space == "logpolar":
        return to_log_polar(img, recipe.polar_spec())
    return img


def generate_pair(vol: VoxelVolume, recipe: DatasetRecipe, view_angle: float,
                  geom: Geometry | None = None) -> tuple[ViewStack, ProjImage]:
    """Input stack and orthogonal target for one augmentation angle.

    With ``augment="view"`` the gantry is rotated by ``view_angle``; with
    ``"rotate"`` the volume is resampled instead and projected at 0/90/180.
    """
    geom = geom or recipe.geometry_obj()
    if recipe.augment == "rotate":
        vol = rotate_augment(vol, view_angle)
        base = 0.0
    else:
        base = float(view_angle)
    mu = recipe.mu_water

    def cone(offset):
        img = cone_project(vol, geom, base + offset, mu_water=mu)
        img.view_angle = float(offset)
        return img

    img0 = cone(0.0)
    target = parallel_project(vol, geom, base, recipe.ortho_mode, mu_water=mu)
    target.view_angle = 0.0
    aux = third = None
    if recipe.combo in ("comp_dup", "comp_diff"):
        aux = flip_image(cone(180.0), geom.p_u)
    elif recipe.combo == "ortho_naive":
        aux = cone(90.0)
    elif recipe.combo == "ortho_opbp":
        aux = render_opbp(cone(90.0), geom)
        aux.view_angle = 90.0
    elif recipe.combo == "triple":
        aux = cone(90.0)
        third = flip_image(cone(180.0), geom.p_u)
    conv = [_to_space(i, recipe) if i is not None else None for i in (img0, aux, third)]
    st = stack(conv[0], conv[1], recipe.combo, conv[2])
    st.meta["augment_angle_deg"] = float(view_angle)
    target = _to_space(target, recipe)
    target.meta["augment_angle_deg"] = float(view_angle)
    return st, target


# --------------------------------------------------------------------------
# batch generation
# --------------------------------------------------------------------------


def phantom_seed(seed: int, index: int) -> int:
    """Independent per-phantom seed derived from the recipe seed."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)[0])


def _pair_id(index: int, angle: float) -> str:
    a = f"{angle:g}".replace("-", "m").replace(".", "p")
    return f"ph{index:04d}_a{a}"


def _pair_files(pair_id: str) -> dict:
    names = {k: p.name for k, p in io.stack_files(Path(pair_id) / "input").items()}
    names = {k: f"{pair_id}/{v}" for k, v in names.items()}
    names["target_raw"] = f"{pair_id}/target.raw"
    names["target_sidecar"] = f"{pair_id}/target.json"
    names["target_png"] = f"{pair_id}/target.png"
    return names


def _write_pair(out: Path, pair_id: str, st: ViewStack, target: ProjImage, window: DisplayWindow) -> None:
    io.save_stack(out / pair_id / "input", st, window)
    io.save_image(out / pair_id / "target.raw", target)
    io.save_png(out / pair_id / "target.png", target, window)


def _entry_complete(out: Path, entry: dict | None, expect: dict) -> bool:
    if entry is None:
        return False
    for k in ("seed", "angle_deg", "combo", "space", "recipe_hash", "files"):
        if entry.get(k) != expect.get(k):
            return False
    return all((out / f).is_file() for f in entry["files"].values())


def _manifest_bytes(manifest: dict) -> bytes:
    return (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()


def recipe_hash(recipe: DatasetRecipe, geom: Geometry) -> str:
    """Fingerprint of everything that shapes a pair's content (not its angle or location)."""
    d = recipe.to_dict()
    for k in ("out_dir", "angles", "seed"):
        d.pop(k)
    d["geometry"] = geom.to_config()
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _source_label(src) -> str:
    if src is None:
        return "bead"
    return "volume" if isinstance(src, VoxelVolume) else str(src)


def plan_entries(recipe: DatasetRecipe, phantoms, geom: Geometry | None = None) -> list[dict]:
    """Manifest entries (one per phantom and augmentation angle) without rendering anything."""
    if isinstance(phantoms, (int, np.integer)):
        if phantoms < 0:
            raise InvalidSpec("phantom count must be non-negative")
        sources = [None] * int(phantoms)
    else:
        sources = list(phantoms)
    fingerprint = recipe_hash(recipe, geom or recipe.geometry_obj())
    entries = []
    for index, src in enumerate(sources):
        seed = phantom_seed(recipe.seed, index)
        for angle in recipe.angles:
            pid = _pair_id(index, angle)
            entries.append({
                "id": pid,
                "phantom_index": index,
                "phantom_source": _source_label(src),
                "seed": seed,
                "angle_deg": float(angle),
                "combo": recipe.combo,
                "space": recipe.space,
                "views_deg": list(recipe.views),
                "recipe_hash": fingerprint,
                "files": _pair_files(pid),
            })
    return entries


def batch_generate(recipe: DatasetRecipe, phantoms, out_dir=None, progress=None) -> dict:
    """Write every (phantom, angle) pair and a manifest; skips pairs already complete.

    ``phantoms`` is a phantom count (bead phantoms generated from the
    recipe seed) or a sequence of volumes / raw volume paths.
    """
    out = Path(out_dir if out_dir is not None else recipe.out_dir)
    geom = recipe.geometry_obj()
    man_path = out / MANIFEST
    previous = {}
    if man_path.is_file():
        try:
            old = io.read_json(man_path)
            previous = {e["id"]: e for e in old.get("entries", [])}
        except (PerspDeformError, KeyError, TypeError, AttributeError):
            previous = {}  # unreadable manifest: regenerate everything

    if not isinstance(phantoms, (int, np.integer)):
        phantoms = list(phantoms)
    entries = plan_entries(recipe, phantoms, geom)
    sources = phantoms if isinstance(phantoms, list) else [None] * int(phantoms)
    by_phantom: dict[int, list] = {}
    for entry in entries:
        if not _entry_complete(out, previous.get(entry["id"]), entry):
            by_phantom.setdefault(entry["phantom_index"], []).append(entry)

    for index, todo in by_phantom.items():
        src = sources[index]
        if src is None:
            vol = generate(recipe.phantom_spec(todo[0]["seed"]))
        elif isinstance(src, VoxelVolume):
            vol = src
        else:
            vol = load_volume(src)
        for entry in todo:
            st, target = generate_pair(vol, recipe, entry["angle_deg"], geom)
            _write_pair(out, entry["id"], st, target, recipe.window)
            if progress is not None:
                progress(entry)
        del vol

    _prune_stale(out, previous, entries)
    manifest = {
        "recipe": recipe.to_dict(),
        "geometry": geom.to_config(),
        "n_pairs": len(entries),
        "entries": entries,
    }
    payload = _manifest_bytes(manifest)
    if not man_path.is_file() or man_path.read_bytes() != payload:
        io.atomic_write_bytes(man_path, payload)
    return manifest


def _prune_stale(out: Path, previous: dict, entries: list) -> None:
    """Remove files of earlier entries that the current manifest no longer lists."""
    keep = set()
    for e in entries:
        keep.update(e["files"].values())
    for e in previous.values():
        for f in e.get("files", {}).values():
            if f not in keep and (out / f).is_file():
                (out / f).unlink()
        d = out / e.get("id", "")
        if d != out and d.is_dir() and not any(d.iterdir()):
            d.rmdir()


def manifest_files(manifest: dict) -> set[str]:
    files = {MANIFEST}
    for e in manifest["entries"]:
        files.update(e["files"].values())
    return files
