"""Run exports: CSV, JSON, and a self-contained interactive HTML map.

Formats are fixed for byte-determinism: coordinates at 6 decimal places,
percentages at 2, RFC-4180 CSV, JSON with stable key order. The HTML map
embeds its data as a single machine-readable JSON block delimited by
``<script type="application/json" id="run-data">`` and renders one
rectangle per geo-tagged record (a circle marker when only the center
point is known) on an open slippy-map tile layer.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .errors import DataError, ExportError
from .geogrid import GeoPoint
from .inference import (
    PredictionRecord,
    PredictionRun,
    maps_link,
    record_from_dict,
    summarize,
)

__all__ = ["maps_link", "to_csv", "parse_csv", "to_json", "parse_json", "to_html_map", "records_equal"]

CSV_COLUMNS = (
    "filename",
    "predicted",
    "actual_or_chosen",
    "confidence_pct",
    "significance_pct",
    "lat",
    "lon",
    "maps_link",
)


def _fmt_pct(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}"


def _record_row(r: PredictionRecord) -> list[str]:
    return [
        r.filename,
        r.predicted,
        r.actual_or_chosen or "",
        _fmt_pct(r.confidence_pct),
        _fmt_pct(r.significance_pct),
        f"{r.geo.lat:.6f}" if r.geo else "",
        f"{r.geo.lon:.6f}" if r.geo else "",
        r.maps_link or "",
    ]


def csv_text(run: PredictionRun) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for r in run.records:
        writer.writerow(_record_row(r))
    return buf.getvalue()


def to_csv(run: PredictionRun, path: str | Path) -> Path:
    out = Path(path)
    out.write_text(csv_text(run), encoding="utf-8")
    return out


def parse_csv(text: str) -> tuple[PredictionRecord, ...]:
    """Records back from CSV text (at export precision, without images)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise DataError(f"unexpected CSV header {header}; expected {list(CSV_COLUMNS)}")
    records = []
    for row in reader:
        if not row:
            continue
        fname, predicted, chosen, conf, sig, lat, lon, link = row
        geo = GeoPoint(float(lat), float(lon)) if lat and lon else None
        records.append(
            PredictionRecord(
                filename=fname,
                predicted=predicted,
                actual_or_chosen=chosen or None,
                confidence_pct=float(conf),
                significance_pct=float(sig) if sig else None,
                geo=geo,
                maps_link=link or None,
            )
        )
    return tuple(records)


def _record_json(r: PredictionRecord) -> dict:
    return {
        "filename": r.filename,
        "predicted": r.predicted,
        "actual_or_chosen": r.actual_or_chosen,
        "confidence_pct": round(r.confidence_pct, 2),
        "significance_pct": None if r.significance_pct is None else round(r.significance_pct, 2),
        "lat": None if r.geo is None else round(r.geo.lat, 6),
        "lon": None if r.geo is None else round(r.geo.lon, 6),
        "maps_link": r.maps_link,
        "bounds": None if r.bounds is None else [round(b, 6) for b in r.bounds],
    }


def json_text(run: PredictionRun) -> str:
    doc = {
        "checkpoint_id": run.checkpoint_id,
        "mode": run.mode,
        "created_at": run.created_at,
        "source": run.source,
        "label_order": list(run.label_order),
        "records": [_record_json(r) for r in run.records],
        "summary": summarize(run).to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def to_json(run: PredictionRun, path: str | Path) -> Path:
    out = Path(path)
    out.write_text(json_text(run), encoding="utf-8")
    return out


def parse_json(text: str) -> PredictionRun:
    doc = json.loads(text)
    return PredictionRun(
        checkpoint_id=doc["checkpoint_id"],
        mode=doc["mode"],
        records=tuple(record_from_dict(d) for d in doc["records"]),
        label_order=tuple(doc["label_order"]),
        created_at=doc["created_at"],
        source=doc["source"],
    )


def records_equal(a: PredictionRecord, b: PredictionRecord, pct_tol: float = 0.005, coord_tol: float = 5e-7) -> bool:
    """Equality at export precision (2 dp percentages, 6 dp coordinates)."""
    if (a.filename, a.predicted, a.actual_or_chosen) != (b.filename, b.predicted, b.actual_or_chosen):
        return False
    if abs(a.confidence_pct - b.confidence_pct) > pct_tol:
        return False
    if (a.significance_pct is None) != (b.significance_pct is None):
        return False
    if a.significance_pct is not None and abs(a.significance_pct - b.significance_pct) > pct_tol:
        return False
    if (a.geo is None) != (b.geo is None):
        return False
    if a.geo is not None:
        if abs(a.geo.lat - b.geo.lat) > coord_tol or abs(a.geo.lon - b.geo.lon) > coord_tol:
            return False
    return True


# ---------------------------------------------------------------------------
# HTML map
# ---------------------------------------------------------------------------

_HTML_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>Prediction map</title>
<meta name="viewport" content="width=device-width, initial-scale=1.0">
<link rel="stylesheet" href="https://unpkg.com/leaflet@1.9.4/dist/leaflet.css">
<script src="https://unpkg.com/leaflet@1.9.4/dist/leaflet.js"></script>
<style>
  html, body, #map { height: 100%; margin: 0; }
  .legend { background: white; padding: 6px 10px; border-radius: 4px; font: 13px sans-serif; }
</style>
</head>
<body>
<div id="map"></div>
<script type="application/json" id="run-data">__DATA__</script>
<script>
var data = JSON.parse(document.getElementById('run-data').textContent);
var map = L.map('map');
L.tileLayer('https://tile.openstreetmap.org/{z}/{x}/{y}.png', {
  maxZoom: 19,
  attribution: '&copy; OpenStreetMap contributors'
}).addTo(map);
var layer = L.featureGroup();
data.features.forEach(function (f) {
  var color = f.positive ? '#1d5fd6' : '#d62b1d';
  var shape;
  if (f.bounds) {
    shape = L.rectangle([[f.bounds[1], f.bounds[3]], [f.bounds[0], f.bounds[2]]],
                        { color: color, weight: 1, fillOpacity: 0.35 });
  } else {
    shape = L.circleMarker([f.lat, f.lon], { radius: 6, color: color, fillOpacity: 0.6 });
  }
  var sig = f.significance_pct === null ? 'n/a' : f.significance_pct + '%';
  shape.bindPopup('<b>' + f.filename + '</b><br>class: ' + f.label +
                  '<br>confidence: ' + f.confidence_pct + '%<br>significance: ' + sig);
  shape.addTo(layer);
});
layer.addTo(map);
if (data.features.length > 0) { map.fitBounds(layer.getBounds().pad(0.1)); }
else { map.setView([0, 0], 2); }
var legend = L.control({position: 'bottomright'});
legend.onAdd = function () {
  var div = L.DomUtil.create('div', 'legend');
  div.innerHTML = '<span style="color:#1d5fd6">&#9632;</span> ' + data.positive_label +
    ' &nbsp; <span style="color:#d62b1d">&#9632;</span> ' + data.negative_label +
    '<br>' + data.features.length + ' patches';
  return div;
};
legend.addTo(map);
</script>
</body>
</html>
"""


def html_text(run: PredictionRun, positive_only: bool = False) -> str:
    positive = run.label_order[1]
    features = []
    for r in run.records:
        if r.geo is None:
            continue
        label = r.actual_or_chosen if r.actual_or_chosen is not None else r.predicted
        if positive_only and label != positive:
            continue
        features.append(
            {
                "filename": r.filename,
                "label": label,
                "positive": label == positive,
                "confidence_pct": round(r.confidence_pct, 2),
                "significance_pct": None if r.significance_pct is None else round(r.significance_pct, 2),
                "lat": round(r.geo.lat, 6),
                "lon": round(r.geo.lon, 6),
                "bounds": None if r.bounds is None else [round(b, 6) for b in r.bounds],
            }
        )
    if not features:
        raise ExportError("no geo-tagged records to place on a map")
    data = {
        "positive_label": positive,
        "negative_label": run.label_order[0],
        "mode": run.mode,
        "created_at": run.created_at,
        "features": features,
    }
    # '</' must not terminate the embedding script block early
    blob = json.dumps(data, sort_keys=True).replace("</", "<\\/")
    return _HTML_TEMPLATE.replace("__DATA__", blob)


def to_html_map(run: PredictionRun, path: str | Path, positive_only: bool = False) -> Path:
    out = Path(path)
    out.write_text(html_text(run, positive_only), encoding="utf-8")
    return out


def extract_html_data(text: str) -> dict:
    """Pull the embedded JSON data block back out of an exported map."""
    marker = '<script type="application/json" id="run-data">'
    start = text.index(marker) + len(marker)
    end = text.index("</script>", start)
    return json.loads(text[start:end].replace("<\\/", "</"))
