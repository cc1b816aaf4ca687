// Typed client for the landpatch service API. Every mutation the UI makes
// goes through here, so the UI stays a pure projection of API state.

export interface PatchRow {
  filename: string;
  label: string | null;
  lat: number | null;
  lon: number | null;
}

export interface RecordRow {
  filename: string;
  predicted: string;
  actual_or_chosen: string | null;
  confidence_pct: number;
  significance_pct: number | null;
  lat: number | null;
  lon: number | null;
  maps_link: string | null;
  bounds: number[] | null;
}

export interface RunDoc {
  id: string;
  checkpoint_id: string;
  mode: string;
  label_order: [string, string];
  records: RecordRow[];
  summary: RunSummary | null;
}

export interface RunSummary {
  total: number;
  counts: Record<string, number>;
  percentages: Record<string, number>;
  displayed: Record<string, string>;
  confusion?: { tp: number; fp: number; fn: number; tn: number };
  metrics?: { accuracy: number; precision: number; recall: number; f1: number; mcc: number };
}

export interface JobDoc {
  id: string;
  kind: string;
  state: string;
  progress: number;
  result: Record<string, unknown> | null;
  error: string | null;
}

export interface EpochEvent {
  type: "epoch";
  epoch: number;
  train_loss: number;
  train_accuracy: number;
  val_loss: number;
  val_accuracy: number;
}

export interface StateEvent {
  type: "state";
  state: string;
}

export type JobEvent = EpochEvent | StateEvent;

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    const body = await resp.text();
    throw new Error(`${init?.method ?? "GET"} ${url} -> ${resp.status}: ${body}`);
  }
  return (await resp.json()) as T;
}

function post<T>(url: string, body?: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: body === undefined ? "{}" : JSON.stringify(body),
  });
}

export class Api {
  constructor(private base: string = "") {}

  url(path: string): string {
    return this.base + path;
  }

  listDatasets(): Promise<{ id: string; kind: string; patches: number }[]> {
    return request(this.url("/datasets"));
  }

  patches(datasetId: string): Promise<PatchRow[]> {
    return request(this.url(`/datasets/${datasetId}/patches`));
  }

  imageUrl(datasetId: string, filename: string): string {
    return this.url(`/datasets/${datasetId}/images/${encodeURIComponent(filename)}`);
  }

  setLabel(datasetId: string, filename: string, label: string | null): Promise<PatchRow> {
    return post(this.url(`/datasets/${datasetId}/labels`), { filename, label });
  }

  submitTrain(datasetId: string, config: Record<string, unknown>): Promise<{ job_id: string }> {
    return post(this.url("/jobs/train"), { dataset_id: datasetId, train_config: config });
  }

  job(jobId: string): Promise<JobDoc> {
    return request(this.url(`/jobs/${jobId}`));
  }

  control(jobId: string, command: "pause" | "resume" | "stop" | "reset"): Promise<JobDoc> {
    return post(this.url(`/jobs/${jobId}/control`), { command });
  }

  eventsUrl(jobId: string): string {
    return this.url(`/jobs/${jobId}/events`);
  }

  run(runId: string): Promise<RunDoc> {
    return request(this.url(`/runs/${runId}`));
  }

  filterRun(
    runId: string,
    filters: { confidence?: number; significance?: number; sample?: { k: number; seed: number } },
  ): Promise<RunDoc> {
    return post(this.url(`/runs/${runId}/filters`), filters);
  }

  toggleRecord(runId: string, index: number): Promise<RecordRow> {
    return post(this.url(`/runs/${runId}/records/${index}/toggle`));
  }

  heatmapUrl(runId: string, index: number): string {
    return this.url(`/runs/${runId}/records/${index}/heatmap.png`);
  }
}
