"""Parsing and normalization of all external inputs.

Reviews arrive as line-delimited JSON, county geometries as a GeoJSON
FeatureCollection, the survey series and socioeconomic covariates as CSV.
Every review is joined to a county by coordinates (even-odd point-in-polygon
over an R-tree-free bounding-box index) and to one of three pandemic periods
by its UTC calendar date.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError, CorpusFormatError

# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Review:
    review_id: str
    business_id: str
    text: str
    timestamp_ms: int
    latitude: float
    longitude: float
    rating: int | None = None

    def utc_date(self) -> date:
        return datetime.fromtimestamp(self.timestamp_ms / 1000.0,
                                      tz=timezone.utc).date()


@dataclass(frozen=True)
class Period:
    name: str
    start: date  # inclusive
    end: date    # inclusive

    def contains(self, day: date) -> bool:
        return self.start <= day <= self.end


#: Canonical study periods (inclusive UTC calendar-date bounds).
DEFAULT_PERIODS: tuple[Period, ...] = (
    Period("PrePandemic", date(2018, 1, 1), date(2020, 1, 31)),
    Period("PeakPandemic", date(2020, 2, 1), date(2020, 5, 31)),
    Period("PostPeak", date(2020, 6, 1), date(2021, 5, 31)),
)

Ring = list[tuple[float, float]]        # closed: first vertex == last
Polygon = list[Ring]                    # outer ring first, then holes


@dataclass
class County:
    fips: str
    name: str
    state: str
    polygons: list[Polygon]
    centroid: tuple[float, float] = field(init=False)
    bbox: tuple[float, float, float, float] = field(init=False)  # minlon, minlat, maxlon, maxlat

    def __post_init__(self):
        self.centroid = _multipolygon_centroid(self.polygons)
        lons = [v[0] for poly in self.polygons for v in poly[0]]
        lats = [v[1] for poly in self.polygons for v in poly[0]]
        self.bbox = (min(lons), min(lats), max(lons), max(lats))


@dataclass
class SurveyRow:
    state: str
    month: str  # YYYY-MM
    delayed_ratio: float


@dataclass
class SurveySeries:
    rows: list[SurveyRow]

    def as_map(self) -> dict[tuple[str, str], float]:
        return {(r.state, r.month): r.delayed_ratio for r in self.rows}


# ---------------------------------------------------------------------------
# reviews


@dataclass
class ParseStats:
    total_lines: int = 0
    parsed: int = 0
    malformed: int = 0
    dropped: dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str):
        self.dropped[reason] = self.dropped.get(reason, 0) + 1


def parse_reviews(stream: Iterable[str | bytes],
                  stats: ParseStats | None = None) -> Iterator[Review]:
    """Yield one Review per valid line, tallying malformed/skipped lines.

    Raises CorpusFormatError at end of stream if more than half of the
    non-blank lines were malformed (almost certainly the wrong file).
    """
    if stats is None:
        stats = ParseStats()
    for raw in stream:
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line:
            continue
        stats.total_lines += 1
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("not an object")
        except ValueError:
            stats.malformed += 1
            continue
        review = _review_from_obj(obj, stats)
        if review is not None:
            stats.parsed += 1
            yield review
    if stats.total_lines and stats.malformed * 2 > stats.total_lines:
        raise CorpusFormatError(
            f"{stats.malformed} of {stats.total_lines} lines are not JSON "
            "objects; input does not look like a review corpus")


def _review_from_obj(obj: dict, stats: ParseStats) -> Review | None:
    text = obj.get("text")
    if not isinstance(text, str) or not text:
        stats.drop("missing_text")
        return None
    lat, lon = obj.get("latitude"), obj.get("longitude")
    if not isinstance(lat, (int, float)) or not isinstance(lon, (int, float)):
        stats.drop("missing_coordinates")
        return None
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        stats.drop("coordinates_out_of_bounds")
        return None
    ts = obj.get("timestamp")
    if not isinstance(ts, int):
        stats.drop("missing_timestamp")
        return None
    rid = obj.get("review_id")
    if not isinstance(rid, str) or not rid:
        stats.drop("missing_review_id")
        return None
    rating = obj.get("rating")
    if not (rating is None or (isinstance(rating, int) and 1 <= rating <= 5)):
        rating = None
    return Review(review_id=rid, business_id=str(obj.get("business_id", "")),
                  text=text, timestamp_ms=ts, latitude=float(lat),
                  longitude=float(lon), rating=rating)


def serialize_review(review: Review) -> str:
    obj = {"review_id": review.review_id, "business_id": review.business_id,
           "text": review.text, "timestamp": review.timestamp_ms,
           "latitude": review.latitude, "longitude": review.longitude}
    if review.rating is not None:
        obj["rating"] = review.rating
    return json.dumps(obj, sort_keys=True)


def dedupe_reviews(reviews: Iterable[Review],
                   stats: ParseStats | None = None) -> Iterator[Review]:
    """Drop exact (business_id, text, timestamp) duplicates, keeping the first."""
    seen = set()
    for review in reviews:
        key = (review.business_id, review.text, review.timestamp_ms)
        if key in seen:
            if stats is not None:
                stats.drop("duplicate")
            continue
        seen.add(key)
        yield review


def assign_period(review: Review,
                  periods: Sequence[Period] = DEFAULT_PERIODS) -> str | None:
    """Name of the unique period containing the review's UTC date, if any."""
    day = review.utc_date()
    for period in periods:
        if period.contains(day):
            return period.name
    return None


def validate_periods(periods: Sequence[Period]):
    for p in periods:
        if p.start > p.end:
            raise ContractError(f"period {p.name}: start after end")
    for i, a in enumerate(periods):
        for b in periods[i + 1:]:
            if a.start <= b.end and b.start <= a.end:
                raise ContractError(f"periods {a.name} and {b.name} overlap")


# ---------------------------------------------------------------------------
# county geometry


def _ring_area2(ring: Ring) -> float:
    """Twice the signed shoelace area (positive = counterclockwise)."""
    s = 0.0
    for (x0, y0), (x1, y1) in zip(ring, ring[1:]):
        s += x0 * y1 - x1 * y0
    return s


def _multipolygon_centroid(polygons: list[Polygon]) -> tuple[float, float]:
    """Area-weighted centroid of the outer rings (holes ignored)."""
    ax = ay = aw = 0.0
    for poly in polygons:
        ring = poly[0]
        a2 = _ring_area2(ring)
        cx = cy = 0.0
        for (x0, y0), (x1, y1) in zip(ring, ring[1:]):
            cross = x0 * y1 - x1 * y0
            cx += (x0 + x1) * cross
            cy += (y0 + y1) * cross
        if a2 != 0.0:
            ax += cx / 3.0
            ay += cy / 3.0
            aw += a2
    if aw == 0.0:  # degenerate geometry; fall back to vertex mean
        pts = [v for poly in polygons for v in poly[0]]
        return (sum(p[0] for p in pts) / len(pts),
                sum(p[1] for p in pts) / len(pts))
    return ax / aw, ay / aw


def _normalize_ring(ring: Ring, outer: bool) -> Ring:
    a2 = _ring_area2(ring)
    if (outer and a2 < 0) or (not outer and a2 > 0):
        return ring[::-1]
    return ring


def _point_in_ring(lon: float, lat: float, ring: Ring) -> bool:
    """Even-odd ray cast (ray to +infinity in longitude)."""
    inside = False
    for (x0, y0), (x1, y1) in zip(ring, ring[1:]):
        if (y0 > lat) != (y1 > lat):
            x_cross = x0 + (lat - y0) * (x1 - x0) / (y1 - y0)
            if lon < x_cross:
                inside = not inside
    return inside


def point_in_polygon(lon: float, lat: float, polygon: Polygon) -> bool:
    """Even-odd containment over all rings; holes toggle back to outside."""
    inside = False
    for ring in polygon:
        if _point_in_ring(lon, lat, ring):
            inside = not inside
    return inside


class CountyIndex:
    """Immutable county set with a bounding-box prefilter for point lookup."""

    def __init__(self, counties: Sequence[County]):
        if not counties:
            raise ContractError("county set is empty")
        self.counties: tuple[County, ...] = tuple(
            sorted(counties, key=lambda c: c.fips))
        self.by_fips = {c.fips: c for c in self.counties}
        if len(self.by_fips) != len(self.counties):
            raise ContractError("duplicate fips in county set")

    def __len__(self):
        return len(self.counties)

    def locate(self, lon: float, lat: float) -> str | None:
        """Fips of the containing county; boundary ties resolve to the
        lexicographically smallest fips (counties are scanned in fips order)."""
        for county in self.counties:
            minlon, minlat, maxlon, maxlat = county.bbox
            if not (minlon <= lon <= maxlon and minlat <= lat <= maxlat):
                continue
            for polygon in county.polygons:
                if point_in_polygon(lon, lat, polygon):
                    return county.fips
        return None


def parse_counties(stream: IO | dict, fips_property: str = "GEOID",
                   state_property: str = "STUSPS",
                   name_property: str = "NAME") -> CountyIndex:
    """Load a GeoJSON FeatureCollection into an indexed county set."""
    data = stream if isinstance(stream, dict) else json.load(stream)
    if data.get("type") != "FeatureCollection":
        raise CorpusFormatError("expected a GeoJSON FeatureCollection")
    counties = []
    seen = set()
    for k, feature in enumerate(data.get("features", [])):
        props = feature.get("properties") or {}
        fips = props.get(fips_property)
        if fips is None:
            raise CorpusFormatError(
                f"feature {k}: missing {fips_property!r} property")
        fips = str(fips)
        if fips in seen:
            raise CorpusFormatError(f"duplicate fips {fips!r}")
        seen.add(fips)
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            raw_polys = [geom.get("coordinates", [])]
        elif gtype == "MultiPolygon":
            raw_polys = geom.get("coordinates", [])
        else:
            raise CorpusFormatError(
                f"feature {k}: geometry type {gtype!r} is not polygonal")
        polygons = []
        for raw_poly in raw_polys:
            rings = []
            for r, raw_ring in enumerate(raw_poly):
                ring = [(float(x), float(y)) for x, y in raw_ring]
                if len(ring) < 4:
                    raise CorpusFormatError(
                        f"feature {k}: ring with fewer than 4 vertices")
                if ring[0] != ring[-1]:
                    raise CorpusFormatError(f"open ring at feature {k}")
                rings.append(_normalize_ring(ring, outer=(r == 0)))
            polygons.append(rings)
        counties.append(County(fips=fips, name=str(props.get(name_property, "")),
                               state=str(props.get(state_property, "")),
                               polygons=polygons))
    return CountyIndex(counties)


# ---------------------------------------------------------------------------
# survey + covariates


def parse_survey(stream: IO) -> SurveySeries:
    """Read the state,month,delayed_ratio CSV."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != ["state", "month", "delayed_ratio"]:
        raise CorpusFormatError(
            f"survey header must be state,month,delayed_ratio, got {header}")
    rows = []
    seen = set()
    for i, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise CorpusFormatError(f"survey row {i}: expected 3 fields")
        state, month, ratio_s = row
        try:
            datetime.strptime(month, "%Y-%m")
        except ValueError:
            raise CorpusFormatError(f"survey row {i}: month not YYYY-MM")
        try:
            ratio = float(ratio_s)
        except ValueError:
            raise CorpusFormatError(f"survey row {i}: ratio not numeric")
        if not 0.0 <= ratio <= 1.0:
            raise CorpusFormatError(f"survey row {i}: ratio {ratio} outside [0,1]")
        key = (state, month)
        if key in seen:
            raise CorpusFormatError(f"survey row {i}: duplicate ({state},{month})")
        seen.add(key)
        rows.append(SurveyRow(state=state, month=month, delayed_ratio=ratio))
    return SurveySeries(rows=rows)


def parse_covariates(stream: IO):
    """Read the fips-indexed covariate CSV into a DataMatrix."""
    from .stats import DataMatrix

    reader = csv.reader(stream)
    header = next(reader, None)
    if not header or header[0] != "fips" or len(header) < 2:
        raise CorpusFormatError(
            "covariate header must start with 'fips' and name >=1 predictor")
    columns = header[1:]
    keys, values = [], []
    seen = set()
    for i, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise CorpusFormatError(f"covariates row {i}: wrong field count")
        fips = row[0]
        if fips in seen:
            raise CorpusFormatError(f"covariates row {i}: duplicate fips {fips}")
        seen.add(fips)
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError:
            raise CorpusFormatError(f"covariates row {i}: non-numeric value")
        if any(math.isnan(v) for v in vals):
            raise CorpusFormatError(f"covariates row {i}: NaN value")
        keys.append(fips)
        values.append(vals)
    return DataMatrix(row_keys=keys, columns=columns,
                      values=np.asarray(values, dtype=float))
