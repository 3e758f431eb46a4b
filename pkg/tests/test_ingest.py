import io
import json
from datetime import date

import numpy as np
import pytest

from healthaccess import ingest
from healthaccess.errors import ContractError, CorpusFormatError

VALID_LINE = ('{"review_id":"a","business_id":"b","text":"no masks",'
              '"timestamp":1585699200000,"latitude":34.0,"longitude":-118.2}')


def test_parse_single_review():
    stats = ingest.ParseStats()
    reviews = list(ingest.parse_reviews([VALID_LINE], stats))
    assert len(reviews) == 1
    r = reviews[0]
    assert r.review_id == "a"
    assert r.business_id == "b"
    assert r.text == "no masks"
    assert r.timestamp_ms == 1585699200000
    assert r.latitude == 34.0 and r.longitude == -118.2
    assert stats.malformed == 0


def test_parse_empty_input():
    stats = ingest.ParseStats()
    assert list(ingest.parse_reviews([], stats)) == []
    assert stats.malformed == 0 and stats.parsed == 0


def test_malformed_lines_counted_not_fatal():
    stats = ingest.ParseStats()
    lines = [VALID_LINE, "not json", VALID_LINE.replace('"a"', '"b"'),
             VALID_LINE.replace('"a"', '"c"')]
    reviews = list(ingest.parse_reviews(lines, stats))
    assert len(reviews) == 3
    assert stats.malformed == 1


def test_mostly_malformed_is_fatal():
    with pytest.raises(CorpusFormatError):
        list(ingest.parse_reviews(["junk", "more junk", VALID_LINE]))


def test_skip_reasons_tallied():
    stats = ingest.ParseStats()
    no_text = json.dumps({"review_id": "x", "timestamp": 1, "latitude": 0.0,
                          "longitude": 0.0})
    no_coords = json.dumps({"review_id": "y", "text": "hi", "timestamp": 1})
    list(ingest.parse_reviews([VALID_LINE, no_text, no_coords], stats))
    assert stats.dropped == {"missing_text": 1, "missing_coordinates": 1}


def test_roundtrip():
    review = next(iter(ingest.parse_reviews([VALID_LINE])))
    again = next(iter(ingest.parse_reviews([ingest.serialize_review(review)])))
    assert again == review


def test_dedupe_keeps_first():
    r = next(iter(ingest.parse_reviews([VALID_LINE])))
    dup = ingest.Review(review_id="other", business_id=r.business_id,
                        text=r.text, timestamp_ms=r.timestamp_ms,
                        latitude=1.0, longitude=1.0)
    out = list(ingest.dedupe_reviews([r, dup]))
    assert out == [r]


# --- periods ---------------------------------------------------------------

def _review_on(day: date) -> ingest.Review:
    from datetime import datetime, timezone
    ts = int(datetime(day.year, day.month, day.day, 12,
                      tzinfo=timezone.utc).timestamp() * 1000)
    return ingest.Review("r", "b", "t", ts, 0.0, 0.0)


def test_assign_period_canonical_bounds():
    assert ingest.assign_period(_review_on(date(2020, 3, 15))) == "PeakPandemic"
    assert ingest.assign_period(_review_on(date(2020, 1, 31))) == "PrePandemic"
    assert ingest.assign_period(_review_on(date(2021, 7, 1))) is None
    assert ingest.assign_period(_review_on(date(2018, 1, 1))) == "PrePandemic"
    assert ingest.assign_period(_review_on(date(2021, 5, 31))) == "PostPeak"


def test_periods_are_disjoint_property():
    ingest.validate_periods(ingest.DEFAULT_PERIODS)
    rng = np.random.default_rng(0)
    # timestamps spanning 2017 through mid-2022, inside and outside the study
    for ts in rng.integers(1483228800000, 1654041600000, size=500):
        review = ingest.Review("r", "b", "t", int(ts), 0.0, 0.0)
        matches = [p.name for p in ingest.DEFAULT_PERIODS
                   if p.contains(review.utc_date())]
        assert len(matches) <= 1
        assert ingest.assign_period(review) == (matches[0] if matches else None)


def test_overlapping_periods_rejected():
    periods = [ingest.Period("a", date(2020, 1, 1), date(2020, 6, 30)),
               ingest.Period("b", date(2020, 6, 30), date(2020, 12, 31))]
    with pytest.raises(ContractError):
        ingest.validate_periods(periods)


# --- counties --------------------------------------------------------------

def _square_feature(fips, lon, lat, size=1.0, state="AL"):
    ring = [[lon, lat], [lon + size, lat], [lon + size, lat + size],
            [lon, lat + size], [lon, lat]]
    return {"type": "Feature",
            "properties": {"GEOID": fips, "NAME": fips, "STUSPS": state},
            "geometry": {"type": "Polygon", "coordinates": [ring]}}


def _fc(features):
    return {"type": "FeatureCollection", "features": features}


def test_parse_counties_and_locate():
    idx = ingest.parse_counties(_fc([_square_feature("01001", 0, 0),
                                     _square_feature("01003", 1, 0)]))
    assert len(idx) == 2
    assert idx.locate(0.5, 0.5) == "01001"
    assert idx.locate(1.5, 0.5) == "01003"
    assert idx.locate(5.0, 5.0) is None


def test_shared_edge_tie_breaks_to_smallest_fips():
    idx = ingest.parse_counties(_fc([_square_feature("01003", 1, 0),
                                     _square_feature("01001", 0, 0)]))
    # points on the shared edge x=1 resolve deterministically
    for lat in (0.1, 0.25, 0.5, 0.9):
        hit = idx.locate(1.0, lat)
        assert hit in ("01001", "01003")
        assert hit == idx.locate(1.0, lat)  # repeatable


def test_duplicate_fips_fatal():
    with pytest.raises(CorpusFormatError, match="01001"):
        ingest.parse_counties(_fc([_square_feature("01001", 0, 0),
                                   _square_feature("01001", 1, 0)]))


def test_open_ring_fatal():
    feature = _square_feature("01001", 0, 0)
    feature["geometry"]["coordinates"][0] = \
        feature["geometry"]["coordinates"][0][:-1]
    with pytest.raises(CorpusFormatError, match="open ring at feature 0"):
        ingest.parse_counties(_fc([feature]))


def test_missing_fips_fatal():
    feature = _square_feature("01001", 0, 0)
    del feature["properties"]["GEOID"]
    with pytest.raises(CorpusFormatError, match="feature 0"):
        ingest.parse_counties(_fc([feature]))


def test_non_polygonal_geometry_fatal():
    feature = _square_feature("01001", 0, 0)
    feature["geometry"] = {"type": "Point", "coordinates": [0, 0]}
    with pytest.raises(CorpusFormatError):
        ingest.parse_counties(_fc([feature]))


def test_hole_excluded():
    outer = [[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]]
    hole = [[1, 1], [3, 1], [3, 3], [1, 3], [1, 1]]
    fc = _fc([{"type": "Feature", "properties": {"GEOID": "10001"},
               "geometry": {"type": "Polygon", "coordinates": [outer, hole]}}])
    idx = ingest.parse_counties(fc)
    assert idx.locate(0.5, 0.5) == "10001"
    assert idx.locate(2.0, 2.0) is None


def _winding_number(lon, lat, ring):
    wn = 0
    for (x0, y0), (x1, y1) in zip(ring, ring[1:]):
        if y0 <= lat:
            if y1 > lat and (x1 - x0) * (lat - y0) - (lon - x0) * (y1 - y0) > 0:
                wn += 1
        elif y1 <= lat and (x1 - x0) * (lat - y0) - (lon - x0) * (y1 - y0) < 0:
            wn -= 1
    return wn


def test_even_odd_agrees_with_winding_oracle():
    rng = np.random.default_rng(7)
    # random simple (star-shaped) polygons around the origin
    for trial in range(50):
        k = int(rng.integers(4, 10))
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
        radii = rng.uniform(0.5, 2.0, size=k)
        ring = [(float(r * np.cos(a)), float(r * np.sin(a)))
                for r, a in zip(radii, angles)]
        ring.append(ring[0])
        for _ in range(40):
            lon, lat = rng.uniform(-2.5, 2.5, size=2)
            even_odd = ingest.point_in_polygon(lon, lat, [ring])
            assert even_odd == (_winding_number(lon, lat, ring) != 0)


def test_centroid_of_square():
    idx = ingest.parse_counties(_fc([_square_feature("01001", 0, 0)]))
    cx, cy = idx.counties[0].centroid
    assert abs(cx - 0.5) < 1e-12 and abs(cy - 0.5) < 1e-12


# --- survey ----------------------------------------------------------------

def test_parse_survey():
    series = ingest.parse_survey(io.StringIO(
        "state,month,delayed_ratio\nCA,2020-04,0.31\n"))
    assert len(series.rows) == 1
    row = series.rows[0]
    assert (row.state, row.month, row.delayed_ratio) == ("CA", "2020-04", 0.31)


def test_survey_duplicate_fatal():
    with pytest.raises(CorpusFormatError):
        ingest.parse_survey(io.StringIO(
            "state,month,delayed_ratio\nCA,2020-04,0.31\nCA,2020-04,0.2\n"))


def test_survey_ratio_out_of_range_names_row():
    with pytest.raises(CorpusFormatError, match="row 3"):
        ingest.parse_survey(io.StringIO(
            "state,month,delayed_ratio\nCA,2020-04,0.31\nNY,2020-04,1.5\n"))


def test_survey_header_must_match():
    with pytest.raises(CorpusFormatError):
        ingest.parse_survey(io.StringIO("st,month,ratio\nCA,2020-04,0.3\n"))


def test_parse_covariates():
    m = ingest.parse_covariates(io.StringIO(
        "fips,a,b\n01001,1.0,2.0\n01003,3.0,4.0\n"))
    assert m.row_keys == ["01001", "01003"]
    assert m.columns == ["a", "b"]
    assert m.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]
