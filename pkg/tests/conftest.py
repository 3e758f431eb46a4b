"""Shared fixtures: a deterministic synthetic corpus over a grid of square
counties, with covariates and a survey series, written once per session."""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest

GRID = 7  # 7x7 = 49 counties
STATES = ["AL", "AK", "AZ", "AR", "CA", "CO", "CT"]
LON0, LAT0 = -100.0, 35.0

COVARIATE_NAMES = [
    "Democratic Rate", "Republican Rate", "Total Population", "Median Income",
    "GINI", "No Insurance Rate", "Household Below Poverty Rate",
    "HISPANIC LATINO Rate", "White Rate", "Black Rate", "Indian Rate",
    "Asian Rate", "Under 18 Rate", "Between 18 and 44 Rate",
    "Between 45 and 64 Rate", "Over 65 Rate", "Male Rate", "Bachelor Rate",
    "Education Degree Rate", "Population Density", "Unemployed Rate",
]

SHORTAGE_TEXTS = [
    "They were out of sanitizer and there was no toilet paper anywhere",
    "Completely sold out of masks again",
    "Ran out of disinfectant wipes, shelves empty",
    "No tylenol left and the thermometer shelf was empty",
]
AVAILABILITY_TEXTS = [
    "Plenty of toilet paper and sanitizer in stock",
    "They had masks available at the entrance",
    "Fully stocked with disinfectant and gloves today",
    "I was able to buy a test kit without any wait",
]
UNRELATED_TEXTS = [
    "Staff wear a mask while serving which is nice",
    "The pharmacy aisle with vitamins is well organized",
    "You must use hand sanitizer before entering",
]
OFFTOPIC_TEXTS = [
    "Great burgers and friendly service",
    "Parking lot is always full on weekends",
    "The coffee here is outstanding",
]

PERIOD_MONTHS = {
    "PrePandemic": [(2018, 3), (2018, 9), (2019, 2), (2019, 8), (2019, 12), (2020, 1)],
    "PeakPandemic": [(2020, 2), (2020, 3), (2020, 4), (2020, 5)],
    "PostPeak": [(2020, 6), (2020, 9), (2020, 12), (2021, 2), (2021, 4)],
}


def county_fips(r: int, c: int) -> str:
    return f"{r + 1:02d}{c * 7 + 1:03d}"


def make_counties_geojson() -> dict:
    features = []
    for r in range(GRID):
        for c in range(GRID):
            lon, lat = LON0 + c, LAT0 + r
            ring = [[lon, lat], [lon + 1, lat], [lon + 1, lat + 1],
                    [lon, lat + 1], [lon, lat]]
            features.append({
                "type": "Feature",
                "properties": {"GEOID": county_fips(r, c),
                               "NAME": f"County {r}-{c}",
                               "STUSPS": STATES[r % len(STATES)]},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            })
    return {"type": "FeatureCollection", "features": features}


def _epoch_ms(year: int, month: int, day: int) -> int:
    return int(datetime(year, month, day, 12, 0,
                        tzinfo=timezone.utc).timestamp() * 1000)


def make_fixture_corpus(root: Path, n_reviews: int = 6000, seed: int = 42):
    """Write reviews.jsonl, counties.geojson, covariates.csv, survey.csv."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)

    (root / "counties.geojson").write_text(
        json.dumps(make_counties_geojson()), encoding="utf-8")

    # per-county shortage propensity, spatially smooth-ish by row, shifted
    # per period so deltas are nonzero
    base = {(r, c): 0.25 + 0.5 * (r / (GRID - 1)) + 0.1 * rng.standard_normal()
            for r in range(GRID) for c in range(GRID)}
    period_shift = {"PrePandemic": -0.1, "PeakPandemic": 0.3, "PostPeak": 0.05}

    lines = []
    for i in range(n_reviews):
        r = int(rng.integers(GRID))
        c = int(rng.integers(GRID))
        period = ["PrePandemic", "PeakPandemic", "PostPeak"][
            int(rng.integers(3))]
        year, month = PERIOD_MONTHS[period][
            int(rng.integers(len(PERIOD_MONTHS[period])))]
        day = int(rng.integers(1, 28))
        prob = min(0.95, max(0.05, base[(r, c)] + period_shift[period]))
        u = rng.random()
        if u < 0.15:
            text = OFFTOPIC_TEXTS[int(rng.integers(len(OFFTOPIC_TEXTS)))]
        elif u < 0.30:
            text = UNRELATED_TEXTS[int(rng.integers(len(UNRELATED_TEXTS)))]
        elif rng.random() < prob:
            text = SHORTAGE_TEXTS[int(rng.integers(len(SHORTAGE_TEXTS)))]
        else:
            text = AVAILABILITY_TEXTS[int(rng.integers(len(AVAILABILITY_TEXTS)))]
        lines.append(json.dumps({
            "review_id": f"rev{i:06d}",
            "business_id": f"biz{int(rng.integers(400)):04d}",
            "text": text,
            "timestamp": _epoch_ms(year, month, day),
            "latitude": LAT0 + r + 0.05 + 0.9 * rng.random(),
            "longitude": LON0 + c + 0.05 + 0.9 * rng.random(),
            "rating": int(rng.integers(1, 6)),
        }))
    (root / "reviews.jsonl").write_text("\n".join(lines) + "\n",
                                        encoding="utf-8")

    # covariates: 21 named predictors; the age shares sum to 1 on purpose
    with open(root / "covariates.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fips"] + COVARIATE_NAMES)
        for r in range(GRID):
            for c in range(GRID):
                dem = 0.3 + 0.4 * rng.random()
                shares = rng.dirichlet([5, 8, 7, 4])
                row = {
                    "Democratic Rate": dem,
                    "Republican Rate": 0.95 - dem + 0.02 * rng.standard_normal(),
                    "Total Population": float(rng.integers(5000, 500000)),
                    "Median Income": float(rng.integers(30000, 90000)),
                    "GINI": 0.35 + 0.15 * rng.random(),
                    "No Insurance Rate": 0.05 + 0.2 * rng.random(),
                    "Household Below Poverty Rate": 0.05 + 0.25 * rng.random(),
                    "HISPANIC LATINO Rate": 0.05 + 0.4 * rng.random(),
                    "White Rate": 0.3 + 0.6 * rng.random(),
                    "Black Rate": 0.02 + 0.3 * rng.random(),
                    "Indian Rate": 0.005 + 0.05 * rng.random(),
                    "Asian Rate": 0.005 + 0.1 * rng.random(),
                    "Under 18 Rate": shares[0],
                    "Between 18 and 44 Rate": shares[1],
                    "Between 45 and 64 Rate": shares[2],
                    "Over 65 Rate": shares[3],
                    "Male Rate": 0.47 + 0.05 * rng.random(),
                    # correlate education with the shortage propensity so a
                    # signal exists for the regression stage
                    "Bachelor Rate": 0.1 + 0.3 * (1 - base[(r, c)])
                                     + 0.05 * rng.standard_normal(),
                    "Education Degree Rate": 0.05 + 0.2 * rng.random(),
                    "Population Density": float(rng.integers(10, 5000)),
                    "Unemployed Rate": 0.02 + 0.1 * rng.random(),
                }
                writer.writerow([county_fips(r, c)]
                                + [repr(float(row[name]))
                                   for name in COVARIATE_NAMES])

    # survey: delayed ratio anticorrelated with state mean perception
    months = ["2020-04", "2020-05", "2020-06", "2020-07", "2020-08",
              "2020-09", "2020-10", "2020-11", "2020-12", "2021-01",
              "2021-02", "2021-03", "2021-04"]
    state_rows = {s: [r for r in range(GRID) if STATES[r % len(STATES)] == s]
                  for s in STATES}
    with open(root / "survey.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "month", "delayed_ratio"])
        for s in STATES:
            shortage = float(np.mean([base[(r, c)] for r in state_rows[s]
                                      for c in range(GRID)]))
            for m in months:
                ratio = min(0.95, max(0.02,
                            0.2 + 0.5 * shortage + 0.05 * rng.standard_normal()))
                writer.writerow([s, m, f"{ratio:.4f}"])
    return root


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory) -> Path:
    return make_fixture_corpus(tmp_path_factory.mktemp("corpus"))
