"""Manifests, the feature cache, and the synthetic coin corpus."""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from matplotlib.colors import hsv_to_rgb
from scipy import ndimage

from . import imaging
from .errors import MissingFile, ParseError, VersionMismatch
from .features import FEATURE_DIM, FEATURE_NAMES, LAYOUT_VERSION, SERVICES, FeatureModels

MIN_GRADE, MAX_GRADE = 50, 70
MANIFEST_COLUMNS = ("coin_id", "obverse_path", "reverse_path", "grade", "service")

# test-set support per grade of the reference 537-coin evaluation
REFERENCE_SUPPORTS = {50: 1, 55: 2, 57: 3, 58: 12, 60: 3, 61: 12, 62: 44, 63: 108,
                      64: 165, 65: 127, 66: 52, 67: 7, 68: 1}


@dataclass(frozen=True)
class ManifestEntry:
    coin_id: str
    obverse_path: Path
    reverse_path: Path
    grade: int
    service: str
    split: str | None = None


def load_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    """Parse and validate a manifest CSV; relative image paths resolve against its folder.

    Row numbers in errors are file line numbers (the header is row 1).
    """
    path = Path(path)
    base = path.parent
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(path) from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("manifest is empty; a header row is required", row=1) from None
    cols = list(MANIFEST_COLUMNS)
    if header not in (cols, cols + ["split"]):
        raise ParseError(f"header must be {', '.join(cols)}[, split]; got {', '.join(header)}", row=1)
    entries, seen = [], {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=row_no)
        rec = dict(zip(header, (c.strip() for c in row)))
        cid = rec["coin_id"]
        if not cid:
            raise ParseError("empty coin_id", row=row_no, column="coin_id")
        if cid in seen:
            raise ParseError(f"duplicate coin_id {cid!r} (first seen on row {seen[cid]})",
                             row=row_no, column="coin_id")
        seen[cid] = row_no
        try:
            grade = int(rec["grade"])
        except ValueError:
            raise ParseError(f"grade {rec['grade']!r} is not an integer", row=row_no, column="grade") from None
        if not MIN_GRADE <= grade <= MAX_GRADE:
            raise ParseError(f"grade {grade} outside supported range {MIN_GRADE}-{MAX_GRADE}",
                             row=row_no, column="grade")
        service = rec["service"].upper()
        if service not in SERVICES:
            raise ParseError(f"service {rec['service']!r} must be PCGS or NGC", row=row_no, column="service")
        split = rec.get("split") or None
        if split is not None and split not in ("train", "test"):
            raise ParseError(f"split {split!r} must be train or test", row=row_no, column="split")
        obv, rev = base / rec["obverse_path"], base / rec["reverse_path"]
        if obv == rev:
            raise ParseError("obverse and reverse paths are identical", row=row_no, column="reverse_path")
        if check_files:
            for p in (obv, rev):
                if not p.is_file():
                    raise MissingFile(p, row=row_no, coin_id=cid)
        entries.append(ManifestEntry(cid, obv, rev, grade, service, split))
    return entries


def write_manifest(path, entries) -> None:
    path = Path(path)
    base = path.parent
    with_split = any(e.split for e in entries)
    header = list(MANIFEST_COLUMNS) + (["split"] if with_split else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for e in entries:
        row = [e.coin_id, _rel(e.obverse_path, base), _rel(e.reverse_path, base), e.grade, e.service]
        if with_split:
            row.append(e.split or "")
        w.writerow(row)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _rel(p, base) -> str:
    p = Path(p)
    try:
        return p.relative_to(base).as_posix()
    except ValueError:
        return p.as_posix()


# -- feature cache -----------------------------------------------------------

CACHE_TAIL = ("grade", "obverse_path", "reverse_path", "split", "provenance", "pipeline_version")
CACHE_HEADER = ("coin_id",) + FEATURE_NAMES + CACHE_TAIL


@dataclass
class FeatureRecord:
    coin_id: str
    values: np.ndarray
    grade: int
    obverse_path: str = ""
    reverse_path: str = ""
    split: str = ""
    provenance: str = "original"
    version: str = LAYOUT_VERSION

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (self.coin_id == other.coin_id and np.array_equal(self.values, other.values)
                and self.grade == other.grade and self.obverse_path == other.obverse_path
                and self.reverse_path == other.reverse_path and self.split == other.split
                and self.provenance == other.provenance and self.version == other.version)


def _fmt(x: float) -> str:
    return repr(float(x))


def feature_cache_write(path, records) -> None:
    """Whole-file replace; values use shortest round-trip float formatting."""
    versions = {r.version for r in records}
    if len(versions) > 1:
        raise VersionMismatch(f"records mix layout versions {sorted(versions)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CACHE_HEADER)
    for r in records:
        if len(r.values) != FEATURE_DIM:
            raise ParseError(f"record {r.coin_id!r} has {len(r.values)} values, expected {FEATURE_DIM}")
        w.writerow([r.coin_id, *(_fmt(v) for v in r.values), r.grade, r.obverse_path,
                    r.reverse_path, r.split, r.provenance, r.version])
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue().encode("utf-8"))
    tmp.replace(path)


def feature_cache_read(path, expected_version: str = LAYOUT_VERSION) -> list[FeatureRecord]:
    data = Path(path).read_bytes()
    if not data:
        raise ParseError("feature cache is empty", offset=0)
    lines = data.split(b"\n")
    if lines[-1] != b"":
        bad = len(data) - len(lines[-1])
        raise ParseError("file does not end with a newline (truncated?)", row=len(lines), offset=bad)
    lines = lines[:-1]
    offset = 0
    records = []
    versions = set()
    width = len(CACHE_HEADER)
    for row_no, raw in enumerate(lines, start=1):
        start = offset
        offset += len(raw) + 1
        try:
            fields = next(csv.reader([raw.decode("utf-8")]))
        except (UnicodeDecodeError, StopIteration, csv.Error) as exc:
            raise ParseError(f"unreadable line: {exc}", row=row_no, offset=start) from None
        if row_no == 1:
            if tuple(fields) != CACHE_HEADER:
                raise ParseError("header does not match the feature layout", row=1, offset=0)
            continue
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, found {len(fields)}", row=row_no, offset=start)
        version = fields[-1]
        versions.add(version)
        if len(versions) > 1:
            raise VersionMismatch(f"row {row_no}: mixed layout versions {sorted(versions)}")
        if version != expected_version:
            raise VersionMismatch(f"row {row_no}: cache version {version!r}, expected {expected_version!r}")
        try:
            values = np.array([float(v) for v in fields[1:1 + FEATURE_DIM]], dtype=np.float64)
            grade = int(fields[1 + FEATURE_DIM])
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", row=row_no, offset=start) from None
        records.append(FeatureRecord(fields[0], values, grade, *fields[2 + FEATURE_DIM:]))
    return records


def models_path(cache_path) -> Path:
    p = Path(cache_path)
    return p.with_name(p.name + ".models.json")


def write_feature_models(cache_path, models: FeatureModels, extra: dict | None = None) -> None:
    body = {"feature_models": models.to_dict(), **(extra or {})}
    models_path(cache_path).write_text(json.dumps(body, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def read_feature_models(cache_path) -> FeatureModels:
    p = models_path(cache_path)
    if not p.is_file():
        raise MissingFile(p)
    body = json.loads(p.read_text(encoding="utf-8"))
    fm = body["feature_models"]
    if fm.get("layout_version") != LAYOUT_VERSION:
        raise VersionMismatch(f"feature models built for {fm.get('layout_version')!r}")
    return FeatureModels.from_dict(fm)


# -- synthetic corpus --------------------------------------------------------

@dataclass(frozen=True)
class WearModel:
    """Wear blur in pixels: ``sigma = base + slope * (68 - grade)``, clipped at ``base``.

    Scaled with image size relative to 256 px.
    """

    base: float = 0.5
    slope: float = 0.35

    def sigma(self, grade: float, image_size: int = 256) -> float:
        s = self.base + self.slope * max(0.0, 68.0 - grade)
        return s * image_size / 256.0


@dataclass(frozen=True)
class Nuisance:
    """Ranges of the per-coin variation that carries no grade information.

    Each side has one fixed design, like a real coin type, photographed at a
    random rotation.
    """

    hue: tuple[float, float] = (38.0, 54.0)
    saturation: tuple[float, float] = (0.45, 0.75)
    base_value: tuple[float, float] = (0.55, 0.75)
    gain: tuple[float, float] = (0.85, 1.15)
    rotation: tuple[float, float] = (0.0, 360.0)
    surface: float = 0.15
    marks: float = 16.0
    mark_depth: tuple[float, float] = (0.5, 2.0)
    cleaned: float = 0.0
    hairline_depth: tuple[float, float] = (0.6, 1.2)


def allocate_counts(shape: dict, n: int) -> dict:
    """Scale a grade histogram to ``n`` coins with largest-remainder rounding."""
    total = sum(shape.values())
    quotas = {g: n * c / total for g, c in shape.items()}
    counts = {g: int(math.floor(q)) for g, q in quotas.items()}
    left = n - sum(counts.values())
    order = sorted(shape, key=lambda g: (-(quotas[g] - counts[g]), g))
    for g in order[:left]:
        counts[g] += 1
    return counts


@dataclass(frozen=True)
class SynthSpec:
    n_coins: int = 500
    grade_distribution: dict | None = None
    wear: WearModel = WearModel()
    nuisance: Nuisance = Nuisance()
    image_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.n_coins < 0:
            raise ValueError("n_coins must be >= 0")
        if self.grade_distribution is not None:
            if any(c < 0 for c in self.grade_distribution.values()):
                raise ValueError("grade counts must be >= 0")
            if sum(1 for c in self.grade_distribution.values() if c > 0) < 2:
                raise ValueError("at least two grades need nonzero counts")
        if self.image_size < imaging.MIN_SIDE:
            raise ValueError(f"image_size must be >= {imaging.MIN_SIDE}")

    def counts(self) -> dict:
        if self.grade_distribution is not None:
            explicit = {int(g): int(c) for g, c in self.grade_distribution.items()}
            if sum(explicit.values()) == self.n_coins:
                return explicit
            return allocate_counts(explicit, self.n_coins)
        return allocate_counts(REFERENCE_SUPPORTS, self.n_coins)


@dataclass
class CoinStyle:
    """Per-coin nuisance parameters, drawn independently of the grade."""

    hue: float
    saturation: float
    base_value: float
    gain: float
    center: tuple[float, float]
    radius: float
    sides: dict = field(default_factory=dict)
    service: str = "PCGS"


def draw_style(rng: np.random.Generator, size: int, nuisance: Nuisance = Nuisance()) -> CoinStyle:
    style = CoinStyle(
        hue=float(rng.uniform(*nuisance.hue)),
        saturation=float(rng.uniform(*nuisance.saturation)),
        base_value=float(rng.uniform(*nuisance.base_value)),
        gain=float(rng.uniform(*nuisance.gain)),
        center=(size / 2 + float(rng.uniform(-3, 3)) * size / 256,
                size / 2 + float(rng.uniform(-3, 3)) * size / 256),
        radius=size * float(rng.uniform(0.40, 0.44)),
        service="PCGS" if rng.random() < 0.5 else "NGC",
    )
    # a harshly cleaned coin is hairlined all over, whatever its wear
    cleaned = rng.random() < nuisance.cleaned
    hair = {"angle": float(rng.uniform(0, np.pi)), "depth": float(rng.uniform(*nuisance.hairline_depth)),
            "seed": int(rng.integers(0, 2**31 - 1))}
    for side in ("obverse", "reverse"):
        style.sides[side] = {
            "rotation": float(np.deg2rad(rng.uniform(*nuisance.rotation))),
            "surface": nuisance.surface,
            "marks": _draw_marks(rng, int(rng.poisson(nuisance.marks)), nuisance.mark_depth),
            "detail_seed": int(rng.integers(0, 2**31 - 1)),
            "n_prongs": int(rng.integers(3, 5)),
            "prong_phase": float(rng.uniform(0, 2 * np.pi)),
            "hairlines": hair if cleaned else None,
        }
    return style


def _draw_marks(rng, n, depth):
    """Contact marks: short straight gouges anywhere on the face."""
    out = []
    for _ in range(n):
        r0 = 0.92 * np.sqrt(rng.uniform())
        a0 = rng.uniform(0, 2 * np.pi)
        d = rng.uniform(0, 2 * np.pi)
        length = rng.uniform(0.04, 0.25)
        x0, y0 = r0 * np.cos(a0), r0 * np.sin(a0)
        out.append((x0, y0, x0 + length * np.cos(d), y0 + length * np.sin(d),
                    float(rng.uniform(*depth)) * (1 if rng.random() < 0.5 else -1)))
    return out


_DESIGN_SEEDS = {"obverse": 1907, "reverse": 1933}


@functools.lru_cache(maxsize=None)
def _design(side: str):
    """Fixed motif of one side in unit-disk coordinates.

    A figure region (union of soft blobs) carries fine hatching, long strokes
    outline it, and a band of small dots stands in for the legend.
    """
    rng = np.random.default_rng(_DESIGN_SEEDS[side])
    centre = rng.uniform(0, 2 * np.pi)
    ang = centre + rng.uniform(-1.3, 1.3, size=6)
    rad = rng.uniform(0.15, 0.55, size=6)
    blobs = np.column_stack([rad * np.cos(ang), rad * np.sin(ang), rng.uniform(0.18, 0.32, size=6)])
    strokes = []
    for _ in range(18):
        a0 = centre + rng.uniform(-1.6, 1.6)
        r0 = rng.uniform(0.1, 0.75)
        x0, y0 = r0 * np.cos(a0), r0 * np.sin(a0)
        d = rng.uniform(0, 2 * np.pi)
        length = rng.uniform(0.1, 0.35)
        strokes.append((x0, y0, x0 + length * np.cos(d), y0 + length * np.sin(d), rng.uniform(0.6, 1.0)))
    gratings = [(rng.uniform(0, np.pi), rng.uniform(3.5, 6.0), rng.uniform(0, 2 * np.pi)) for _ in range(3)]
    span = rng.uniform(2.5, 4.0)
    dots = [(0.86, centre + np.pi + t) for t in np.linspace(-span / 2, span / 2, 28)]
    return blobs, strokes, gratings, dots


def _segment_distance(u, v, x0, y0, x1, y1):
    ex, ey = x1 - x0, y1 - y0
    t = np.clip(((u - x0) * ex + (v - y0) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
    return np.hypot(u - x0 - t * ex, v - y0 - t * ey)


def _window(xs, ys, margin, size):
    """Pixel slices covering the given points plus a margin, clipped to the raster."""
    x0 = max(0, int(np.floor(min(xs) - margin)))
    x1 = min(size, int(np.ceil(max(xs) + margin)) + 1)
    y0 = max(0, int(np.floor(min(ys) - margin)))
    y1 = min(size, int(np.ceil(max(ys) + margin)) + 1)
    if x0 >= x1 or y0 >= y1:
        return None
    return np.s_[y0:y1, x0:x1]


def _add_segment(relief, u, v, to_px, seg, width, amplitude):
    # Gaussian ridge along a segment, evaluated only where it is non-negligible
    x0, y0, x1, y1 = seg
    (pa, qa), (pb, qb) = to_px(x0, y0), to_px(x1, y1)
    win = _window((pa, pb), (qa, qb), 5.0 * width[1], relief.shape[0])
    if win is not None:
        d = _segment_distance(u[win], v[win], x0, y0, x1, y1)
        relief[win] += amplitude * np.exp(-(d / width[0]) ** 2)


def render_side(grade: float, style: CoinStyle, side: str, size: int = 256,
                wear: WearModel = WearModel(), noise_seed: int = 0) -> np.ndarray:
    """RGB raster of one worn coin face in a dark holder with thin prongs."""
    p = style.sides[side]
    scale = size / 256.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = style.center
    dx, dy = xx - cx, yy - cy
    R = style.radius
    r = np.hypot(dx, dy) / R
    inside = r <= 1.0
    # design coordinates: undo the coin's rotation
    c, s = np.cos(p["rotation"]), np.sin(p["rotation"])
    u = (c * dx + s * dy) / R
    v = (-s * dx + c * dy) / R

    blobs, strokes, gratings, dots = _design(side)
    figure = np.zeros_like(u)
    for bx, by, br in blobs:
        figure = np.maximum(figure, np.exp(-((u - bx) ** 2 + (v - by) ** 2) / (2 * br * br)))
    hatch = np.zeros_like(u)
    for phi, period, phase in gratings:
        k = 2 * np.pi * R / (period * scale)
        hatch += np.cos(k * (u * np.cos(phi) + v * np.sin(phi)) + phase)
    relief = 0.5 * figure + 0.35 * figure * hatch
    px = scale / R  # one source pixel in design units
    design_px = lambda a, b: (cx + R * (c * a - s * b), cy + R * (s * a + c * b))  # noqa: E731
    for x0, y0, x1, y1, depth in strokes:
        _add_segment(relief, u, v, design_px, (x0, y0, x1, y1), (1.5 * px, 1.5 * scale), 0.5 * depth)
    for dr, da in dots:
        a, b = dr * np.cos(da), dr * np.sin(da)
        _add_segment(relief, u, v, design_px, (a, b, a, b + 1e-9), (2 ** 1.5 * px, 2 ** 1.5 * scale), 0.5)
    relief += 0.6 * np.exp(-((r - 0.97) / (2.5 * px)) ** 2)  # rim
    # surface texture unique to each coin
    detail = ndimage.gaussian_filter(np.random.default_rng(p["detail_seed"]).normal(size=(size, size)), scale)
    relief += p["surface"] * detail / (detail.std() + 1e-12)
    relief = ndimage.gaussian_filter(relief, wear.sigma(grade, size))
    # handling marks come after wear, so their sharpness says nothing about grade
    ux, uy = dx / R, dy / R
    face_px = lambda a, b: (cx + R * a, cy + R * b)  # noqa: E731
    for x0, y0, x1, y1, depth in p["marks"]:
        _add_segment(relief, ux, uy, face_px, (x0, y0, x1, y1), (0.8 * px, 0.8 * scale), depth)
    if p["hairlines"] is not None:
        h = p["hairlines"]
        noise = np.random.default_rng(h["seed"]).normal(size=(size, size))
        # long thin streaks: smooth along the wiping direction, sharp across it
        streaks = ndimage.rotate(ndimage.gaussian_filter(noise, (0.6 * scale, 12 * scale)),
                                 np.rad2deg(h["angle"]), reshape=False, mode="wrap", order=1)
        relief += h["depth"] * streaks / (streaks.std() + 1e-12)

    value = np.clip(style.gain * (style.base_value + 0.12 * relief), 0.4, 1.0)
    hsv = np.stack([np.full_like(value, style.hue / 360.0),
                    np.full_like(value, style.saturation), value], axis=-1)
    coin_rgb = hsv_to_rgb(hsv)
    img = np.empty((size, size, 3))
    img[...] = (0.06, 0.06, 0.07)  # holder background
    # prongs: thin gray bars crossing the rim
    width = max(1.0, 1.5 * scale)
    for k in range(p["n_prongs"]):
        ang = p["prong_phase"] + 2 * np.pi * k / p["n_prongs"]
        along = dx * np.cos(ang) + dy * np.sin(ang)
        across = -dx * np.sin(ang) + dy * np.cos(ang)
        bar = (np.abs(across) <= width) & (along > 0.9 * R) & (along < 1.12 * R)
        img[bar] = (0.55, 0.55, 0.55)
    img[inside] = coin_rgb[inside]
    noise = np.random.default_rng(noise_seed).normal(0.0, 0.01, size=img.shape)
    return np.clip(np.round((img + noise) * 255.0), 0, 255).astype(np.uint8)


def render_coin(grade: float, seed: int, size: int = 256, wear: WearModel = WearModel(),
                nuisance: Nuisance = Nuisance()):
    """``(obverse, reverse, service)`` for one coin; nuisance depends only on ``seed``."""
    rng = np.random.default_rng(seed)
    style = draw_style(rng, size, nuisance)
    obv = render_side(grade, style, "obverse", size, wear, noise_seed=seed * 2 + 1)
    rev = render_side(grade, style, "reverse", size, wear, noise_seed=seed * 2 + 2)
    return obv, rev, style.service


def synth_corpus(spec: SynthSpec, out_dir) -> list[ManifestEntry]:
    """Write PNG pairs plus ``manifest.csv`` under ``out_dir``; returns the entries."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    counts = spec.counts()
    grades = [g for g in sorted(counts) for _ in range(counts[g])]
    order = np.random.default_rng(spec.seed).permutation(len(grades))
    seeds = np.random.SeedSequence(spec.seed).generate_state(max(1, len(grades)), dtype=np.uint32)
    entries = []
    for i, gi in enumerate(order):
        grade = grades[gi]
        cid = f"coin{i:05d}"
        obv, rev, service = render_coin(grade, int(seeds[i]), spec.image_size, spec.wear, spec.nuisance)
        op, rp = img_dir / f"{cid}_obv.png", img_dir / f"{cid}_rev.png"
        imaging.save_png(op, obv)
        imaging.save_png(rp, rev)
        entries.append(ManifestEntry(cid, op, rp, grade, service))
    write_manifest(out_dir / "manifest.csv", entries)
    return entries
