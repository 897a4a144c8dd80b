"""Estimate the hyperfractal dimension of a street traffic map.

Segments are quantized into streets, streets are ranked by decreasing
density and the density is regressed, in log-log, against the cumulated
length of the ranked streets.  For a hyperfractal the density falls as
``xi**(1 - d_F)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CSV_HEADER = ("segment_id", "street_hint", "length_km", "density_veh_per_km")

XI_SCALES = {"per-orientation": 1.0, "both-orientations": 0.5}


class FitError(ValueError):
    pass


class CSVFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SegmentRecord:
    segment_id: str
    length: float
    density: float
    street_hint: str | None = None

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"segment {self.segment_id}: length must be positive")
        if not self.density >= 0:
            raise ValueError(f"segment {self.segment_id}: density must be non-negative")


@dataclass
class QuantizedStreet:
    street_id: str
    member_segments: list[str]
    total_length: float
    density: float


@dataclass
class FitReport:
    d_F_hat: float
    slope: float
    intercept: float
    r_squared: float
    tail_fraction: float
    n_points: int
    cumulated_curve: list[tuple[float, float]]
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "d_F_hat": self.d_F_hat,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "tail_fraction": self.tail_fraction,
            "n_points": self.n_points,
            "cumulated_curve": [list(p) for p in self.cumulated_curve],
            "warnings": list(self.warnings),
        }


def read_segments_csv(text: str) -> list[SegmentRecord]:
    """Parse the ``segment_id,street_hint,length_km,density_veh_per_km`` schema.

    Raises :class:`CSVFormatError` carrying the 1-based line number.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CSVFormatError("empty file", 1) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise CSVFormatError(f"expected header {','.join(CSV_HEADER)}", 1)
    out = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise CSVFormatError(f"expected 4 fields, got {len(row)}", line)
        sid, hint, length, density = (c.strip() for c in row)
        try:
            rec = SegmentRecord(sid, float(length), float(density), hint or None)
        except ValueError as exc:
            raise CSVFormatError(str(exc), line) from None
        if not math.isfinite(rec.length) or not math.isfinite(rec.density):
            raise CSVFormatError("non-finite value", line)
        out.append(rec)
    if not out:
        raise CSVFormatError("no data rows", 2)
    return out


def write_segments_csv(segments: Iterable[SegmentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in segments:
        w.writerow([s.segment_id, s.street_hint or "", repr(s.length), repr(s.density)])
    return buf.getvalue()


def _weighted_density(segs: Sequence[SegmentRecord]) -> float:
    total = sum(s.length for s in segs)
    return sum(s.length * s.density for s in segs) / total


def _split_by_factor(segs: list[SegmentRecord], A: float) -> list[list[SegmentRecord]]:
    segs = sorted(segs, key=lambda s: (s.density, s.segment_id))
    lo, hi = segs[0].density, segs[-1].density
    if hi == lo or (lo > 0 and hi / lo <= A * (1 + 1e-12)):
        return [segs]
    # split at the largest ratio between consecutive densities
    gaps = []
    for a, b in zip(segs, segs[1:]):
        gaps.append(math.inf if a.density == 0 and b.density > 0 else
                    (b.density / a.density if a.density > 0 else 1.0))
    k = int(np.argmax(gaps)) + 1
    return _split_by_factor(segs[:k], A) + _split_by_factor(segs[k:], A)


def quantize_streets(segments: Sequence[SegmentRecord], A: float) -> list[QuantizedStreet]:
    """Group segments into streets whose member densities differ by at most ``A``.

    Segments sharing a ``street_hint`` are merged, split recursively at their
    largest density gap when the factor is exceeded.  Hint-less segments fall
    into geometric bands ``[max/A**(k+1), max/A**k)``; with ``A == 1`` the bands
    degenerate to exact density equality.  Street density is the
    length-weighted mean of its segments.
    """
    if not segments:
        raise FitError("no segments to quantize")
    if A < 1:
        raise FitError("quantization factor A must be >= 1")
    groups: dict[str, list[SegmentRecord]] = {}
    loose: list[SegmentRecord] = []
    for s in segments:
        if s.street_hint:
            groups.setdefault(s.street_hint, []).append(s)
        else:
            loose.append(s)
    streets = []
    for hint in sorted(groups):
        parts = _split_by_factor(groups[hint], A)
        for i, part in enumerate(parts):
            sid = hint if len(parts) == 1 else f"{hint}#{i}"
            streets.append(QuantizedStreet(sid, [s.segment_id for s in part],
                                           sum(s.length for s in part), _weighted_density(part)))
    if loose:
        lmax = max(s.density for s in loose)
        bands: dict[object, list[SegmentRecord]] = {}
        for s in loose:
            if s.density == 0:
                key = "zero"
            elif A == 1:
                key = float(f"{s.density:.12g}")
            else:
                key = math.floor(math.log(lmax / s.density) / math.log(A) + 1e-9)
            bands.setdefault(key, []).append(s)
        for key in sorted(bands, key=lambda k: (k == "zero", -_weighted_density(bands[k]))):
            part = bands[key]
            streets.append(QuantizedStreet(f"band:{key}", [s.segment_id for s in part],
                                           sum(s.length for s in part), _weighted_density(part)))
    return streets


def cumulated_curve(streets: Sequence[QuantizedStreet], xi_scale: float = 1.0):
    """Ranked (xi, lambda) points; tied densities collapse onto their last xi."""
    dens = np.array([s.density for s in streets], dtype=float)
    lengths = np.array([s.total_length for s in streets], dtype=float) * xi_scale
    order = np.lexsort((np.arange(len(dens)), -dens))
    dens, lengths = dens[order], lengths[order]
    xi = np.cumsum(lengths)
    last = np.r_[dens[1:] != dens[:-1], True]
    return xi[last], dens[last]


def fit_fractal_dimension(streets: Sequence[QuantizedStreet], tail_fraction: float = 0.5,
                          xi_scale: float = 1.0) -> FitReport:
    """Least-squares fit of ``log lambda`` on ``log xi`` over the large-``xi`` tail.

    ``tail_fraction`` keeps the points whose ``log xi`` lies in the upper
    fraction of the observed log range.  Zero densities keep contributing
    length to ``xi`` but are excluded from the regression.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise FitError("tail_fraction must lie in (0, 1]")
    xi, lam = cumulated_curve(streets, xi_scale)
    warnings = []
    positive = lam > 0
    if not positive.all():
        warnings.append(f"dropped {int((~positive).sum())} zero-density point(s) from the regression")
    curve = [(float(a), float(b)) for a, b in zip(xi, lam)]
    xi, lam = xi[positive], lam[positive]
    if len(xi) < 3:
        raise FitError(f"need at least 3 distinct positive densities, got {len(xi)}")
    lx, ly = np.log(xi), np.log(lam)
    cut = lx.min() + (1.0 - tail_fraction) * (lx.max() - lx.min())
    sel = lx >= cut - 1e-12
    if sel.sum() < 3:
        # widen to the three largest-xi points rather than fit a line through two
        sel = np.zeros(len(lx), dtype=bool)
        sel[-3:] = True
        warnings.append("tail held fewer than 3 points; used the 3 largest-xi points")
    x, y = lx[sel], ly[sel]
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return FitReport(
        d_F_hat=float(1.0 - slope),
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        tail_fraction=tail_fraction,
        n_points=int(sel.sum()),
        cumulated_curve=curve,
        warnings=warnings,
    )


def hyperfractal_table(d_F: float, levels: int = 8, n: float = 1.0, segments_per_street: int = 1,
                       noise: float = 0.0, seed: int = 0) -> list[SegmentRecord]:
    """Synthetic per-orientation segment table of an exact hyperfractal.

    Level ``l`` contributes ``2**l`` unit streets of density
    ``n (p/2)(q/2)**l``; each street is cut into ``segments_per_street``
    equal segments, optionally with multiplicative uniform noise of
    relative amplitude ``noise``.
    """
    q = 4.0 * 2.0 ** (-d_F)
    p = 1.0 - q
    rng = np.random.default_rng(seed)
    out = []
    for level in range(levels + 1):
        lam = n * (p / 2.0) * (q / 2.0) ** level
        for k in range(2 ** level):
            hint = f"L{level}K{k}"
            for j in range(segments_per_street):
                f = 1.0 + noise * (2.0 * rng.random() - 1.0) if noise else 1.0
                out.append(SegmentRecord(f"{hint}S{j}", 1.0 / segments_per_street, lam * f, hint))
    return out


def population_table(pop) -> list[SegmentRecord]:
    """Per-street (length, density) table of a sampled population on a unit map.

    Streets of both orientations are listed with length 1, empty ones with
    density 0.
    """
    L = pop.params.L_max if pop.params is not None else int(pop.level.max())
    keys, counts = np.unique(pop.street_keys(), axis=0, return_counts=True)
    count = {tuple(int(x) for x in k): int(c) for k, c in zip(keys, counts)}
    out = []
    for o in (0, 1):
        for level in range(L + 1):
            for k in range(2 ** level):
                c = count.get((o, level, k), 0)
                sid = f"{'HV'[o]}{level}.{k}"
                out.append(SegmentRecord(sid, 1.0, float(c), sid))
    return out


# -- auxiliary criteria -------------------------------------------------------

@dataclass
class CriterionReport:
    status: str
    slope: float | None = None
    expected: float | None = None
    details: list[dict] = field(default_factory=list)
    violation_fraction: float | None = None

    def to_dict(self) -> dict:
        return {"status": self.status, "slope": self.slope, "expected": self.expected,
                "violation_fraction": self.violation_fraction, "details": self.details}


@dataclass(frozen=True)
class StreetGeometry:
    orientation: str
    coordinate: float
    density: float


def _max_gap_distance(coords: np.ndarray) -> float:
    """Largest distance from a point of [0, 1] to the nearest coordinate."""
    c = np.sort(coords)
    gaps = [c[0], 1.0 - c[-1]]
    if len(c) > 1:
        gaps.append(float(np.max(np.diff(c))) / 2.0)
    return float(max(gaps))


def spatial_intersection_criterion(geometry: Sequence[StreetGeometry] | None, C: float,
                                   d_F: float | None = None) -> CriterionReport:
    """Distance to the nearest crossing street per density class ``[lambda, C lambda]``.

    Classes are ``(max/C**(k+1), max/C**k]``.  For each class the exact
    largest distance from any point of a street to a perpendicular street of
    that class is computed, and ``log L`` is regressed on ``log lambda``; a
    hyperfractal gives slope ``1/(d_F - 1)``.
    """
    if not geometry:
        return CriterionReport("skipped", details=[{"reason": "no street geometry available"}])
    if not C > 1:
        raise FitError("C must exceed 1")
    dens = np.array([g.density for g in geometry], dtype=float)
    if not np.any(dens > 0):
        return CriterionReport("skipped", details=[{"reason": "no positive densities"}])
    lmax = dens.max()
    classes: dict[int, list[StreetGeometry]] = {}
    for g in geometry:
        if g.density > 0:
            k = math.floor(math.log(lmax / g.density) / math.log(C) + 1e-9)
            classes.setdefault(k, []).append(g)
    details = []
    for k in sorted(classes):
        members = classes[k]
        worst = 0.0
        for o in ("H", "V"):
            perp = [g.coordinate for g in members if g.orientation != o]
            if not perp:
                worst = math.inf
                break
            worst = max(worst, _max_gap_distance(np.array(perp)))
        lam = float(np.exp(np.mean(np.log([g.density for g in members]))))
        details.append({"class": k, "lambda": lam, "L": worst, "streets": len(members)})
    usable = [d for d in details if math.isfinite(d["L"])]
    slope = None
    if len(usable) >= 2:
        x = np.log([d["lambda"] for d in usable])
        y = np.log([d["L"] for d in usable])
        slope = float(np.polyfit(x, y, 1)[0])
    expected = 1.0 / (d_F - 1.0) if d_F else None
    return CriterionReport("evaluated", slope, expected, details)


def grid_geometry(d_F: float, L_max: int, n: float = 1.0) -> list[StreetGeometry]:
    q = 4.0 * 2.0 ** (-d_F)
    p = 1.0 - q
    out = []
    for level in range(L_max + 1):
        lam = n * (p / 2.0) * (q / 2.0) ** level
        for k in range(2 ** level):
            c = (2 * k + 1) * 2.0 ** (-(level + 1))
            out.append(StreetGeometry("H", c, lam))
            out.append(StreetGeometry("V", c, lam))
    return out


@dataclass
class IntersectionLog:
    """Crossings observed at one intersection during one run."""

    n: int
    m: int
    t_start: float
    times: list[float]


def time_interval_criterion(logs: Sequence[IntersectionLog] | None, S: float) -> CriterionReport:
    """Check mean waiting times to the first crossing against ``S / (n + m)``.

    Logs are grouped by intersection population ``(n, m)``; the empirical
    mean of ``first crossing - t_start`` is compared with the bound, and the
    share of groups whose mean exceeds it is reported.
    """
    if not logs:
        return CriterionReport("skipped", details=[{"reason": "no crossing logs"}])
    if not S > 0:
        raise FitError("S must be positive")
    groups: dict[tuple[int, int], list[float]] = {}
    gaps: dict[tuple[int, int], list[float]] = {}
    for lg in logs:
        if lg.n + lg.m < 1 or not lg.times:
            continue
        ts = sorted(lg.times)
        groups.setdefault((lg.n, lg.m), []).append(ts[0] - lg.t_start)
        if len(ts) > 1:
            gaps.setdefault((lg.n, lg.m), []).extend(np.diff(ts).tolist())
    details = []
    violations = 0
    for key in sorted(groups):
        waits = groups[key]
        bound = S / (key[0] + key[1])
        mean = float(np.mean(waits))
        violated = mean > bound
        violations += violated
        details.append({"n": key[0], "m": key[1], "samples": len(waits), "mean_wait": mean,
                        "bound": bound, "violated": bool(violated),
                        "mean_gap": float(np.mean(gaps[key])) if gaps.get(key) else None})
    if not details:
        return CriterionReport("skipped", details=[{"reason": "logs hold no crossings"}])
    return CriterionReport("evaluated", details=details, violation_fraction=violations / len(details))
