"""Pipeline orchestration: ingest -> score -> analyze/validate, driven by a
key=value config file plus flags. Every run is seeded and writes a manifest
with a hash of the semantic config so reruns can be checked for determinism.

Exit codes: 0 success, 1 contract/config error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import classify, ingest, ontology, pls, score, spatial, stats
from .errors import ContractError, CorpusFormatError, DegenerateInputError, HealthAccessError

_DELTA_CONTRASTS = (("PeakPandemic", "PrePandemic", "delta_peak_pre"),
                    ("PostPeak", "PeakPandemic", "delta_post_peak"))


@dataclass
class RunConfig:
    reviews: str = ""
    counties: str = ""
    covariates: str = ""
    survey: str = ""
    labels: str = ""
    ontology: str = ""
    out: str = "out"
    backend: str = "lexicon"       # lexicon | remote | file
    endpoint: str = ""
    weights_scheme: str = "queen"  # queen | knn
    knn_k: int = 5
    min_support: int = 10
    n_perm: int = 1000
    n_perm_moran: int = 999
    n_components: str = "cv"       # "cv" or an integer
    moran_alternative: str = "two-sided"
    seed: int = 0
    fips_property: str = "GEOID"

    def semantic_hash(self) -> str:
        items = sorted((f.name, str(getattr(self, f.name)))
                       for f in fields(self) if f.name != "out")
        blob = "\n".join(f"{k}={v}" for k, v in items)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path: str) -> RunConfig:
    config = RunConfig()
    valid = {f.name: f.type for f in fields(RunConfig)}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractError(f"config line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in valid:
                raise ContractError(f"config line {lineno}: unknown key {key!r}")
            current = getattr(config, key)
            setattr(config, key, type(current)(value) if not isinstance(current, str)
                    else value)
    return config


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _require(config: RunConfig, *names: str):
    for name in names:
        value = getattr(config, name)
        if not value:
            raise ContractError(f"config field {name!r} is required for this stage")
        if not Path(value).exists():
            raise ContractError(f"{name} path does not exist: {value}")


def _load_ontology(config: RunConfig) -> ontology.KeywordOntology:
    if config.ontology:
        return ontology.load_ontology(config.ontology)
    return ontology.default_ontology()


# ---------------------------------------------------------------------------
# stages


def cmd_ingest(config: RunConfig) -> dict:
    _require(config, "reviews", "counties")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(config.counties, "r", encoding="utf-8") as fh:
        counties = ingest.parse_counties(fh, fips_property=config.fips_property)
    onto = _load_ontology(config)
    pstats = ingest.ParseStats()
    fstats = ontology.FilterStats()
    per_period: dict[str, int] = {}
    kept = 0
    no_county = 0
    no_period = 0
    with open(config.reviews, "r", encoding="utf-8") as src, \
            open(out / "filtered.jsonl", "w", encoding="utf-8") as dst:
        stream = ingest.dedupe_reviews(ingest.parse_reviews(src, pstats), pstats)
        for review in ontology.filter_corpus(stream, onto, fstats):
            fips = counties.locate(review.longitude, review.latitude)
            if fips is None:
                no_county += 1
                continue
            period = ingest.assign_period(review)
            if period is None:
                no_period += 1
                continue
            per_period[period] = per_period.get(period, 0) + 1
            kept += 1
            record = json.loads(ingest.serialize_review(review))
            record["fips"] = fips
            record["period"] = period
            record["state"] = counties.by_fips[fips].state
            dst.write(json.dumps(record, sort_keys=True) + "\n")
    summary = {"parsed": pstats.parsed, "malformed": pstats.malformed,
               "dropped": pstats.dropped, "ontology_kept": fstats.kept,
               "ontology_dropped": fstats.dropped,
               "no_county": no_county, "outside_periods": no_period,
               "kept": kept, "per_period": per_period}
    if kept and not any(per_period.values()):
        summary["warning"] = "no review falls inside any analysis period"
    _write_json(out / "ingest_summary.json", summary)
    return summary


def _read_filtered(out: Path) -> list[dict]:
    path = out / "filtered.jsonl"
    if not path.exists():
        raise ContractError("run the ingest stage first (filtered.jsonl missing)")
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()]


def _label_records(config: RunConfig, records: list[dict]) -> list[classify.Label]:
    if config.backend == "lexicon":
        clf = classify.LexiconClassifier(_load_ontology(config))
        return [clf.classify(r["text"]) for r in records]
    if config.backend == "remote":
        if not config.endpoint:
            raise ContractError("remote backend requires an endpoint")
        return classify.classify_remote(
            [r["text"] for r in records],
            classify.RemoteConfig(base_url=config.endpoint))
    if config.backend == "file":
        _require(config, "labels")
        with open(config.labels, "r", encoding="utf-8", newline="") as fh:
            table = classify.load_labels(fh)
        missing = [r["review_id"] for r in records if r["review_id"] not in table]
        if missing:
            raise ContractError(
                f"label file is missing {len(missing)} review ids "
                f"(first: {missing[0]!r})")
        return [table[r["review_id"]] for r in records]
    raise ContractError(f"unknown classifier backend {config.backend!r}")


def cmd_score(config: RunConfig) -> dict:
    out = Path(config.out)
    records = _read_filtered(out)
    labels = _label_records(config, records)

    with open(out / "labeled.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["review_id", "fips", "period", "state", "month", "label"])
        for record, label in zip(records, labels):
            month = ingest.Review(
                review_id=record["review_id"], business_id="", text="x",
                timestamp_ms=record["timestamp"], latitude=0.0, longitude=0.0
            ).utc_date().strftime("%Y-%m")
            writer.writerow([record["review_id"], record["fips"],
                             record["period"], record["state"], month,
                             int(label)])

    labeled = [classify.LabeledReview(review_id=r["review_id"], fips=r["fips"],
                                      period=r["period"], label=label)
               for r, label in zip(records, labels)]
    scores = score.aggregate_scores(labeled, min_support=config.min_support)
    if not scores:
        raise ContractError(
            "no (county, period) group survives the support threshold")
    with open(out / "scores.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fips", "period", "score", "n_reviews"])
        for s in sorted(scores, key=lambda s: (s.period, s.fips)):
            writer.writerow([s.fips, s.period, _fmt(s.score), s.n_reviews])

    by_period = {}
    for s in scores:
        by_period.setdefault(s.period, []).append(s)
    with open(out / "deltas.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fips", "contrast", "delta"])
        for later, earlier, name in _DELTA_CONTRASTS:
            delta = score.score_delta(by_period.get(earlier, []),
                                      by_period.get(later, []))
            for fips in sorted(delta.deltas):
                writer.writerow([fips, name, _fmt(delta.deltas[fips])])

    trend = score.national_trend(
        (_month_of(r), label) for r, label in zip(records, labels))
    with open(out / "trend.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["month", "mean_score"])
        for month, value in trend:
            writer.writerow([month, _fmt(value)])

    summary = {"n_labeled": len(labeled), "n_scores": len(scores),
               "per_period": {p: len(v) for p, v in sorted(by_period.items())},
               "three_period_intersection": len(
                   set.intersection(*[{s.fips for s in v} for v in by_period.values()])
                   if len(by_period) == 3 else set())}
    _write_json(out / "score_summary.json", summary)
    return summary


def _month_of(record: dict) -> str:
    import datetime
    return datetime.datetime.fromtimestamp(
        record["timestamp"] / 1000.0,
        tz=datetime.timezone.utc).strftime("%Y-%m")


def _read_scores(out: Path) -> dict[str, dict[str, float]]:
    path = out / "scores.csv"
    if not path.exists():
        raise ContractError("run the score stage first (scores.csv missing)")
    by_period: dict[str, dict[str, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            by_period.setdefault(row["period"], {})[row["fips"]] = float(row["score"])
    return by_period


def _read_deltas(out: Path) -> dict[str, dict[str, float]]:
    by_contrast: dict[str, dict[str, float]] = {}
    with open(out / "deltas.csv", "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            by_contrast.setdefault(row["contrast"], {})[row["fips"]] = \
                float(row["delta"])
    return by_contrast


def cmd_validate(config: RunConfig) -> dict:
    _require(config, "survey")
    out = Path(config.out)
    path = out / "labeled.csv"
    if not path.exists():
        raise ContractError("run the score stage first (labeled.csv missing)")
    items = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            items.append((row["state"], row["month"],
                          classify.Label(int(row["label"]))))
    sm_scores = score.state_month_scores(items)
    with open(config.survey, "r", encoding="utf-8", newline="") as fh:
        survey = ingest.parse_survey(fh)
    report = stats.validate_against_survey(sm_scores, survey)
    _write_json(out / "validation.json", report.to_dict())
    return report.to_dict()


def cmd_analyze(config: RunConfig) -> dict:
    _require(config, "counties")
    out = Path(config.out)
    by_period = _read_scores(out)
    with open(config.counties, "r", encoding="utf-8") as fh:
        counties = ingest.parse_counties(fh, fips_property=config.fips_property)
    weights = spatial.build_weights(counties, scheme=config.weights_scheme,
                                    k=config.knn_k)

    manifest = {"config_hash": config.semantic_hash(), "seed": config.seed,
                "artifacts": [], "stage_errors": {}}

    for period in sorted(by_period):
        try:
            result = spatial.morans_i(by_period[period], weights,
                                      n_perm=config.n_perm_moran,
                                      seed=config.seed,
                                      alternative=config.moran_alternative,
                                      analytic_check=True)
            report = result.to_dict()
            report["period"] = period
            report["scheme"] = weights.scheme
            name = f"moran_{period}.json"
            _write_json(out / name, report)
            manifest["artifacts"].append(name)
            scatter = spatial.moran_scatter(by_period[period], weights)
            sname = f"moran_scatter_{period}.csv"
            with open(out / sname, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["fips", "z", "lag_z"])
                for fips, z, lag in scatter:
                    writer.writerow([fips, _fmt(z), _fmt(lag)])
            manifest["artifacts"].append(sname)
        except HealthAccessError as exc:
            manifest["stage_errors"][f"moran_{period}"] = str(exc)

    if config.covariates and Path(config.covariates).exists():
        with open(config.covariates, "r", encoding="utf-8", newline="") as fh:
            covariates = ingest.parse_covariates(fh)
        models: list[tuple[str, dict[str, float]]] = \
            [(f"level_{p}", by_period[p]) for p in sorted(by_period)]
        try:
            models += [(name, values)
                       for name, values in sorted(_read_deltas(out).items())]
        except FileNotFoundError:
            manifest["stage_errors"]["deltas"] = "deltas.csv missing"
        for name, dependent in models:
            try:
                n_comp = config.n_components
                if n_comp != "cv":
                    n_comp = int(n_comp)
                report = pls.run_regression(dependent, covariates,
                                            n_components=n_comp,
                                            n_perm=config.n_perm,
                                            seed=config.seed)
                cname = f"pls_{name}.csv"
                with open(out / cname, "w", encoding="utf-8", newline="") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["variable", "coefficient", "p_value",
                                     "std_err"])
                    for var, coef, p, se in report.table_rows():
                        writer.writerow([var, _fmt(coef), _fmt(p), _fmt(se)])
                jname = f"pls_{name}.json"
                _write_json(out / jname, report.sidecar())
                manifest["artifacts"] += [cname, jname]
            except HealthAccessError as exc:
                manifest["stage_errors"][f"pls_{name}"] = str(exc)
    else:
        manifest["stage_errors"]["pls"] = "covariates not provided; stage skipped"

    if config.survey and Path(config.survey).exists():
        try:
            cmd_validate(config)
            manifest["artifacts"].append("validation.json")
        except HealthAccessError as exc:
            manifest["stage_errors"]["validation"] = str(exc)
    else:
        manifest["stage_errors"]["validation"] = \
            "survey not provided; stage skipped"

    manifest["artifacts"].sort()
    _write_json(out / "manifest.json", manifest)
    return manifest


def cmd_run_all(config: RunConfig) -> dict:
    cmd_ingest(config)
    cmd_score(config)
    return cmd_analyze(config)


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="healthaccess",
        description="County-level health resource perception pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ingest", "score", "analyze", "validate", "run-all"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--reviews")
        p.add_argument("--counties")
        p.add_argument("--covariates")
        p.add_argument("--survey")
        p.add_argument("--labels")
        p.add_argument("--ontology")
        p.add_argument("--backend", choices=["lexicon", "remote", "file"])
        p.add_argument("--endpoint")
        p.add_argument("--weights-scheme", dest="weights_scheme",
                       choices=["queen", "knn"])
        p.add_argument("--min-support", dest="min_support", type=int)
        p.add_argument("--n-perm", dest="n_perm", type=int)
        p.add_argument("--n-perm-moran", dest="n_perm_moran", type=int)
        p.add_argument("--n-components", dest="n_components")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        for f in fields(RunConfig):
            value = getattr(args, f.name, None)
            if value is not None:
                setattr(config, f.name, value)
        if config.n_perm < 100:
            raise ContractError("n_perm must be >= 100")
        Path(config.out).mkdir(parents=True, exist_ok=True)
        command = {"ingest": cmd_ingest, "score": cmd_score,
                   "analyze": cmd_analyze, "validate": cmd_validate,
                   "run-all": cmd_run_all}[args.command]
        result = command(config)
        json.dump(result, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
        return 0
    except (ContractError, CorpusFormatError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
