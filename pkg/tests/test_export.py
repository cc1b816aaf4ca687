import numpy as np
import pytest

from landpatch.errors import ExportError
from landpatch.export import (
    csv_text,
    extract_html_data,
    html_text,
    json_text,
    maps_link,
    parse_csv,
    parse_json,
    records_equal,
    to_csv,
    to_html_map,
    to_json,
)
from landpatch.geogrid import GeoPoint
from landpatch.inference import PredictionRecord, PredictionRun

CSV_HEADER = "filename,predicted,actual_or_chosen,confidence_pct,significance_pct,lat,lon,maps_link"


def record(i, predicted="pos", chosen=None, confidence=75.5, sig=33.25, geo=None, bounds=None):
    return PredictionRecord(
        filename=f"patch_{i:03d}.png",
        predicted=predicted,
        actual_or_chosen=chosen,
        confidence_pct=confidence,
        significance_pct=sig,
        geo=geo,
        maps_link=maps_link(geo) if geo else None,
        bounds=bounds,
    )


def geo_record(i, lat=34.9, lon=33.0, **kw):
    g = GeoPoint(lat, lon)
    b = (lat + 0.001, lat - 0.001, lon + 0.001, lon - 0.001)
    return record(i, geo=g, bounds=b, **kw)


def make_run(records, mode="predict"):
    return PredictionRun(
        checkpoint_id="ck", mode=mode, records=tuple(records),
        label_order=("neg", "pos"), created_at="2024-03-04T05:06:07Z", source="test",
    )


def random_run(rng, n=25, with_geo=True):
    recs = []
    for i in range(n):
        predicted = "pos" if rng.random() < 0.5 else "neg"
        chosen = predicted if rng.random() < 0.3 else None
        sig = float(np.round(rng.uniform(0, 100), 4)) if rng.random() < 0.8 else None
        kw = dict(predicted=predicted, chosen=chosen,
                  confidence=float(np.round(rng.uniform(0, 100), 4)), sig=sig)
        if with_geo and rng.random() < 0.7:
            recs.append(geo_record(i, lat=float(rng.uniform(-80, 80)),
                                   lon=float(rng.uniform(-170, 170)), **kw))
        else:
            recs.append(record(i, **kw))
    return make_run(recs)


def test_maps_link_exact_format():
    assert maps_link(GeoPoint(34.9, 33.0)) == "https://www.google.com/maps?q=34.900000,33.000000"


def test_csv_layout(tmp_path):
    run = make_run([geo_record(0), record(1), record(2, sig=None)])
    path = to_csv(run, tmp_path / "out.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 4
    # geo-less record leaves lat/lon/maps_link empty
    assert lines[2].endswith(",,,")
    # unknown significance prints as empty
    cells = lines[3].split(",")
    assert cells[4] == ""


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    run = random_run(rng)
    parsed = parse_csv(csv_text(run))
    assert len(parsed) == len(run.records)
    for a, b in zip(run.records, parsed):
        assert records_equal(a, b)


def test_csv_quotes_awkward_filenames():
    rec = PredictionRecord('we,ird"name.png', "pos", None, 10.0, None)
    run = make_run([rec])
    parsed = parse_csv(csv_text(run))
    assert parsed[0].filename == 'we,ird"name.png'


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    run = random_run(rng)
    path = to_json(run, tmp_path / "out.json")
    loaded = parse_json(path.read_text())
    assert loaded.checkpoint_id == run.checkpoint_id
    assert loaded.mode == run.mode
    assert loaded.created_at == run.created_at
    assert loaded.label_order == run.label_order
    for a, b in zip(run.records, loaded.records):
        assert records_equal(a, b)


def test_json_contains_summary():
    import json

    run = make_run([record(0, predicted="pos"), record(1, predicted="neg")])
    doc = json.loads(json_text(run))
    assert doc["summary"]["total"] == 2
    assert doc["summary"]["counts"] == {"neg": 1, "pos": 1}


def test_exports_are_deterministic():
    rng = np.random.default_rng(2)
    run = random_run(rng)
    assert csv_text(run) == csv_text(run)
    assert json_text(run) == json_text(run)
    assert html_text(run) == html_text(run)


def test_html_positive_only_counts(tmp_path):
    recs = [geo_record(i, predicted="pos") for i in range(5)]
    recs += [geo_record(10 + i, predicted="neg") for i in range(3)]
    run = make_run(recs)
    path = to_html_map(run, tmp_path / "map.html", positive_only=True)
    data = extract_html_data(path.read_text())
    assert len(data["features"]) == 5
    assert all(f["positive"] for f in data["features"])


def test_html_mixed_run_has_both_classes(tmp_path):
    recs = [geo_record(0, predicted="pos"), geo_record(1, predicted="neg")]
    html = html_text(make_run(recs))
    data = extract_html_data(html)
    assert {f["positive"] for f in data["features"]} == {True, False}
    assert data["positive_label"] == "pos"


def test_html_uses_chosen_label_over_predicted():
    recs = [geo_record(0, predicted="neg", chosen="pos")]
    data = extract_html_data(html_text(make_run(recs), positive_only=True))
    assert len(data["features"]) == 1


def test_html_skips_geoless_records():
    recs = [geo_record(0), record(1)]
    data = extract_html_data(html_text(make_run(recs)))
    assert len(data["features"]) == 1


def test_html_requires_geo_tagged_records():
    with pytest.raises(ExportError):
        html_text(make_run([record(0), record(1)]))


def test_html_rectangle_bounds_present():
    data = extract_html_data(html_text(make_run([geo_record(0)])))
    f = data["features"][0]
    assert f["bounds"] is not None and len(f["bounds"]) == 4
    assert f["lat"] == pytest.approx(34.9) and f["lon"] == pytest.approx(33.0)


def test_html_is_self_contained_page():
    html = html_text(make_run([geo_record(0)]))
    assert html.startswith("<!DOCTYPE html>")
    assert '<script type="application/json" id="run-data">' in html
    assert "leaflet" in html
