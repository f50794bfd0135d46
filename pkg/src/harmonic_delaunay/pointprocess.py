"""Point configurations on a periodic box (or the plane).

Sampling is a pure function of ``(parameters, seed)``.  Every random
sub-stream in the package is derived from the user seed through
:func:`substream`, so sampling, harness clocks and walks never share draws.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GENERATOR_ID",
    "PointSet",
    "PointSetError",
    "load_points",
    "sample_poisson",
    "save_points",
    "substream",
]

GENERATOR_ID = f"numpy-PCG64/SeedSequence(numpy {np.__version__})"

PALM_TOL = 1e-12


class PointSetError(ValueError):
    """Invalid point configuration or point file."""


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for the named sub-stream of ``seed``.

    The stream name is hashed with CRC32 so the mapping is stable across
    interpreter runs (unlike ``hash``).
    """
    key = (zlib.crc32(name.encode()),) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class PointSet:
    """A finite configuration of points in ``[0, L)^d`` or in the plane.

    ``mode`` is ``"periodic"`` (torus of side ``L``) or ``"planar"``.  With
    ``palm=True`` the first point is the origin.
    """

    d: int
    L: float
    points: np.ndarray
    intensity: float = 1.0
    seed: int | None = None
    mode: str = "periodic"
    palm: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float).reshape(-1, self.d))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        validate(self)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def volume(self) -> float:
        return float(self.L) ** self.d

    def translated(self, v) -> "PointSet":
        """Copy shifted by ``v`` (wrapped into the box in periodic mode)."""
        pts = self.points + np.asarray(v, dtype=float)
        if self.mode == "periodic":
            pts = np.mod(pts, self.L)
            pts[pts >= self.L] -= self.L
        return PointSet(self.d, self.L, pts, self.intensity, self.seed, self.mode, False)

    def metadata(self) -> dict:
        return {
            "d": self.d,
            "L": self.L,
            "intensity": self.intensity,
            "seed": self.seed,
            "mode": self.mode,
            "palm": self.palm,
            "n": self.n,
            "generator": GENERATOR_ID,
        }

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return (
            self.d == other.d
            and self.L == other.L
            and self.mode == other.mode
            and self.palm == other.palm
            and np.array_equal(self.points, other.points)
        )


def validate(ps: PointSet) -> None:
    if ps.d not in (1, 2):
        raise PointSetError(f"unsupported dimension d={ps.d}")
    if ps.mode not in ("periodic", "planar"):
        raise PointSetError(f"unknown mode {ps.mode!r}")
    if not ps.L > 0:
        raise PointSetError("box side L must be positive")
    pts = ps.points
    if not np.all(np.isfinite(pts)):
        raise PointSetError("non-finite coordinate")
    if ps.mode == "periodic" and pts.size and (pts.min() < 0 or pts.max() >= ps.L):
        raise PointSetError("coordinate out of box")
    if pts.shape[0] > 1 and np.unique(pts, axis=0).shape[0] != pts.shape[0]:
        raise PointSetError("duplicate points")
    if ps.palm:
        if pts.shape[0] == 0:
            raise PointSetError("Palm mode requires a point at the origin")
        if np.max(np.abs(pts[0])) > PALM_TOL:
            raise PointSetError("Palm mode requires the first point at the origin")


def _dedupe(pts: np.ndarray, L: float, rng_factory) -> np.ndarray:
    """Resample exact duplicates (a float-precision artefact) in place."""
    attempt = 0
    while True:
        _, first = np.unique(pts, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(pts.shape[0]), first)
        if dup.size == 0:
            return pts
        rng = rng_factory(attempt)
        pts[dup] = rng.uniform(0.0, L, size=(dup.size, pts.shape[1]))
        attempt += 1


def sample_poisson(d: int, L: float, lam: float, seed: int, palm: bool = False) -> PointSet:
    """Homogeneous Poisson process of intensity ``lam`` on the torus ``[0,L)^d``.

    With ``palm=True`` the origin is added as point 0, the Palm version of a
    Poisson process.
    """
    if d not in (1, 2):
        raise PointSetError(f"unsupported dimension d={d}")
    if not L > 0:
        raise PointSetError("box side L must be positive")
    if not lam > 0:
        raise PointSetError("intensity must be positive")
    rng = substream(seed, "sample")
    count = int(rng.poisson(lam * float(L) ** d))
    pts = rng.uniform(0.0, L, size=(count, d))
    if palm:
        pts = np.vstack([np.zeros((1, d)), pts])
    pts = _dedupe(pts, L, lambda k: substream(seed, "sample-dedupe", k))
    if palm and np.any(pts[0] != 0.0):  # pragma: no cover - dedupe never touches row 0
        pts[0] = 0.0
    return PointSet(d, float(L), pts, float(lam), int(seed), "periodic", palm)


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta")


def save_points(ps: PointSet, path) -> None:
    """Write the point CSV plus a JSON ``.meta`` sidecar."""
    path = Path(path)
    header = "x" if ps.d == 1 else "x,y"
    lines = [header]
    for row in ps.points:
        lines.append(",".join(format(float(v), ".17g") for v in row))
    path.write_text("\n".join(lines) + "\n")
    meta = ps.metadata()
    meta.update(ps.meta)
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_points(path, L: float | None = None, mode: str | None = None,
                palm: bool | None = None) -> PointSet:
    """Read a point CSV.  Missing arguments are taken from the sidecar."""
    path = Path(path)
    meta = {}
    mp = _meta_path(path)
    if mp.exists():
        try:
            meta = json.loads(mp.read_text())
        except json.JSONDecodeError as exc:
            raise PointSetError(f"malformed metadata sidecar {mp}: {exc}") from exc
    text = path.read_text()
    rows = [r.strip() for r in text.splitlines() if r.strip()]
    d = meta.get("d")
    if rows and rows[0].replace(" ", "") in ("x", "x,y"):
        d = 1 if rows[0].replace(" ", "") == "x" else 2
        rows = rows[1:]
    if d is None:
        d = len(rows[0].split(",")) if rows else 2
    pts = []
    for k, r in enumerate(rows):
        parts = r.split(",")
        if len(parts) != d:
            raise PointSetError(f"malformed row {k + 1}: {r!r}")
        try:
            pts.append([float(p) for p in parts])
        except ValueError as exc:
            raise PointSetError(f"malformed row {k + 1}: {r!r}") from exc
    mode = mode or meta.get("mode", "periodic")
    palm = bool(meta.get("palm", False)) if palm is None else palm
    if L is None:
        L = meta.get("L")
    if L is None:
        if mode == "periodic":
            raise PointSetError("box side L unknown: pass L or provide a .meta sidecar")
        L = 1.0
    arr = np.array(pts, dtype=float).reshape(-1, d)
    return PointSet(int(d), float(L), arr, float(meta.get("intensity", 1.0)),
                    meta.get("seed"), mode, palm)
