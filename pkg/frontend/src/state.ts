// Pure view logic shared by the views: label cycling, record sorting, and
// epoch-series bookkeeping. No DOM, no fetch — unit-testable in isolation.

import type { EpochEvent, JobEvent, RecordRow } from "./api.js";

// Left click walks positive -> cleared; right click walks negative -> cleared.
export function nextLabel(
  current: string | null,
  click: "primary" | "secondary",
  labels: [string, string],
): string | null {
  const [negative, positive] = labels;
  const target = click === "primary" ? positive : negative;
  return current === target ? null : target;
}

export type SortKey =
  | "filename"
  | "predicted"
  | "actual_or_chosen"
  | "confidence_pct"
  | "significance_pct"
  | "coordinate";

export function sortRecords(
  records: readonly RecordRow[],
  key: SortKey,
  descending: boolean,
): RecordRow[] {
  const numeric = key === "confidence_pct" || key === "significance_pct" || key === "coordinate";
  const value = (r: RecordRow): string | number => {
    const v = key === "coordinate" ? r.lat : r[key];
    if (v === null || v === undefined) return numeric ? Number.NEGATIVE_INFINITY : "";
    return v;
  };
  const out = [...records];
  out.sort((a, b) => {
    const va = value(a);
    const vb = value(b);
    const cmp = typeof va === "number" && typeof vb === "number"
      ? va - vb
      : String(va).localeCompare(String(vb));
    return descending ? -cmp : cmp;
  });
  return out;
}

export function chosenOrPredicted(r: RecordRow): string {
  return r.actual_or_chosen ?? r.predicted;
}

export interface EpochSeries {
  epochs: number[];
  trainLoss: number[];
  valLoss: number[];
  trainAcc: number[];
  valAcc: number[];
}

export function emptySeries(): EpochSeries {
  return { epochs: [], trainLoss: [], valLoss: [], trainAcc: [], valAcc: [] };
}

export function appendEpoch(series: EpochSeries, e: EpochEvent): EpochSeries {
  return {
    epochs: [...series.epochs, e.epoch],
    trainLoss: [...series.trainLoss, e.train_loss],
    valLoss: [...series.valLoss, e.val_loss],
    trainAcc: [...series.trainAcc, e.train_accuracy],
    valAcc: [...series.valAcc, e.val_accuracy],
  };
}

export function epochsContiguous(series: EpochSeries): boolean {
  return series.epochs.every((e, i) => e === i + 1);
}

export function consoleLine(e: JobEvent): string {
  if (e.type === "state") {
    return `run ${e.state}`;
  }
  return (
    `epoch ${e.epoch}: loss ${e.train_loss.toFixed(4)} acc ${e.train_accuracy.toFixed(3)} ` +
    `val_loss ${e.val_loss.toFixed(4)} val_acc ${e.val_accuracy.toFixed(3)}`
  );
}

export function formatPct(v: number | null): string {
  return v === null ? "n/a" : `${v.toFixed(2)}%`;
}

export function formatCoordinate(lat: number | null, lon: number | null): string {
  if (lat === null || lon === null) return "";
  return `${lat.toFixed(6)}, ${lon.toFixed(6)}`;
}
