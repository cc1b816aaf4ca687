// Prediction review: sortable record table with confidence/significance/
// sample filter inputs (each calls the run-filter endpoint and renders the
// response), plus the details popup with prediction toggle, heatmap, and
// map link. All mutations round-trip through the API.

import { Api, RecordRow, RunDoc } from "./api.js";
import { SortKey, chosenOrPredicted, formatCoordinate, formatPct, sortRecords } from "./state.js";

const COLUMNS: { key: SortKey; title: string }[] = [
  { key: "filename", title: "filename" },
  { key: "predicted", title: "predicted" },
  { key: "actual_or_chosen", title: "chosen" },
  { key: "confidence_pct", title: "confidence" },
  { key: "significance_pct", title: "significance" },
  { key: "coordinate", title: "coordinate" },
];

export class ReviewView {
  readonly root: HTMLElement;
  run: RunDoc | null = null;
  displayRunId: string;
  private sortKey: SortKey = "filename";
  private descending = false;
  private tableEl: HTMLElement;
  private popupEl: HTMLElement | null = null;
  private savedScroll = 0;

  constructor(private api: Api, private runId: string, doc: Document = document) {
    this.displayRunId = runId;
    this.root = doc.createElement("div");
    this.root.className = "review";

    const bar = doc.createElement("div");
    bar.className = "filter-bar";
    bar.appendChild(this.filterInput(doc, "confidence", "min confidence %"));
    bar.appendChild(this.filterInput(doc, "significance", "min significance %"));
    bar.appendChild(this.sampleInput(doc));
    const resetBtn = doc.createElement("button");
    resetBtn.textContent = "show all";
    resetBtn.dataset.action = "reset-filters";
    resetBtn.addEventListener("click", () => void this.load());
    bar.appendChild(resetBtn);
    this.root.appendChild(bar);

    this.tableEl = doc.createElement("div");
    this.root.appendChild(this.tableEl);
  }

  private filterInput(doc: Document, kind: "confidence" | "significance", label: string): HTMLElement {
    const wrap = doc.createElement("label");
    wrap.textContent = label + " ";
    const input = doc.createElement("input");
    input.type = "number";
    input.min = "0";
    input.max = "100";
    input.dataset.filter = kind;
    input.addEventListener("change", () => {
      const v = parseFloat(input.value);
      if (!Number.isNaN(v)) void this.applyFilter({ [kind]: v });
    });
    wrap.appendChild(input);
    return wrap;
  }

  private sampleInput(doc: Document): HTMLElement {
    const wrap = doc.createElement("span");
    const k = doc.createElement("input");
    k.type = "number";
    k.placeholder = "sample k";
    k.dataset.filter = "sample-k";
    const seed = doc.createElement("input");
    seed.type = "number";
    seed.placeholder = "seed";
    seed.value = "0";
    seed.dataset.filter = "sample-seed";
    const btn = doc.createElement("button");
    btn.textContent = "sample";
    btn.dataset.action = "sample";
    btn.addEventListener("click", () => {
      const kv = parseInt(k.value, 10);
      if (!Number.isNaN(kv)) {
        void this.applyFilter({ sample: { k: kv, seed: parseInt(seed.value || "0", 10) } });
      }
    });
    wrap.append(k, seed, btn);
    return wrap;
  }

  async load(): Promise<void> {
    this.run = await this.api.run(this.runId);
    this.displayRunId = this.runId;
    this.renderTable();
  }

  private async applyFilter(filters: Record<string, unknown>): Promise<void> {
    this.run = await this.api.filterRun(this.runId, filters);
    this.displayRunId = this.run.id;
    this.renderTable();
  }

  visibleRecords(): RecordRow[] {
    if (!this.run) return [];
    return sortRecords(this.run.records, this.sortKey, this.descending);
  }

  setSort(key: SortKey): void {
    if (this.sortKey === key) this.descending = !this.descending;
    else {
      this.sortKey = key;
      this.descending = false;
    }
    this.renderTable();
  }

  renderTable(): void {
    const doc = this.root.ownerDocument;
    this.tableEl.innerHTML = "";
    const table = doc.createElement("table");
    table.className = "records";

    const thead = doc.createElement("thead");
    const hr = doc.createElement("tr");
    for (const col of COLUMNS) {
      const th = doc.createElement("th");
      th.textContent = col.title + (this.sortKey === col.key ? (this.descending ? " ↓" : " ↑") : "");
      th.dataset.key = col.key;
      th.addEventListener("click", () => this.setSort(col.key));
      hr.appendChild(th);
    }
    hr.appendChild(doc.createElement("th")); // map link column
    thead.appendChild(hr);
    table.appendChild(thead);

    const tbody = doc.createElement("tbody");
    for (const record of this.visibleRecords()) {
      const tr = doc.createElement("tr");
      tr.dataset.filename = record.filename;

      const thumb = doc.createElement("td");
      const img = doc.createElement("img");
      img.className = "thumb";
      img.alt = record.filename;
      img.addEventListener("click", () => this.openPopup(record));
      thumb.append(img, doc.createTextNode(record.filename));
      tr.appendChild(thumb);

      for (const text of [
        record.predicted,
        record.actual_or_chosen ?? "",
        formatPct(record.confidence_pct),
        formatPct(record.significance_pct),
        formatCoordinate(record.lat, record.lon),
      ]) {
        const td = doc.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }

      const linkTd = doc.createElement("td");
      if (record.maps_link) {
        const a = doc.createElement("a");
        a.href = record.maps_link;
        a.target = "_blank";
        a.textContent = "map";
        linkTd.appendChild(a);
      }
      tr.appendChild(linkTd);
      tbody.appendChild(tr);
    }
    table.appendChild(tbody);
    this.tableEl.appendChild(table);

    if (this.run?.summary) {
      const s = this.run.summary;
      const summary = doc.createElement("div");
      summary.className = "summary";
      const parts = Object.keys(s.counts).map((k) => `${k}: ${s.counts[k]} (${s.displayed[k]})`);
      let text = `${s.total} records — ${parts.join(", ")}`;
      if (s.metrics) text += ` — accuracy ${s.metrics.accuracy.toFixed(4)}, MCC ${s.metrics.mcc.toFixed(4)}`;
      summary.textContent = text;
      this.tableEl.appendChild(summary);
    }
  }

  recordIndex(record: RecordRow): number {
    return this.run ? this.run.records.findIndex((r) => r.filename === record.filename) : -1;
  }

  openPopup(record: RecordRow): void {
    this.savedScroll = this.root.ownerDocument.defaultView?.scrollY ?? 0;
    const doc = this.root.ownerDocument;
    this.closePopup(false);

    const popup = doc.createElement("div");
    popup.className = "details-popup";
    popup.dataset.filename = record.filename;

    const title = doc.createElement("h3");
    title.textContent = record.filename;
    popup.appendChild(title);

    const big = doc.createElement("img");
    big.className = "enlarged";
    big.alt = `enlarged ${record.filename}`;
    popup.appendChild(big);

    const chosen = doc.createElement("div");
    chosen.className = "chosen-class";
    chosen.textContent = chosenOrPredicted(record);
    popup.appendChild(chosen);

    const toggleBtn = doc.createElement("button");
    toggleBtn.textContent = "toggle prediction";
    toggleBtn.dataset.action = "toggle";
    toggleBtn.addEventListener("click", () => void this.toggle(record, chosen));
    popup.appendChild(toggleBtn);

    const heatBtn = doc.createElement("button");
    heatBtn.textContent = "show heatmap";
    heatBtn.dataset.action = "heatmap";
    heatBtn.addEventListener("click", () => {
      const index = this.recordIndex(record);
      big.src = this.api.heatmapUrl(this.displayRunId, index);
      big.dataset.heatmap = "1";
    });
    popup.appendChild(heatBtn);

    if (record.maps_link) {
      const mapBtn = doc.createElement("a");
      mapBtn.textContent = "show on map";
      mapBtn.href = record.maps_link;
      mapBtn.target = "_blank";
      popup.appendChild(mapBtn);
    }

    const closeBtn = doc.createElement("button");
    closeBtn.textContent = "close";
    closeBtn.dataset.action = "close";
    closeBtn.addEventListener("click", () => this.closePopup(true));
    popup.appendChild(closeBtn);

    this.root.appendChild(popup);
    this.popupEl = popup;
  }

  private async toggle(record: RecordRow, chosenEl: HTMLElement): Promise<void> {
    const index = this.recordIndex(record);
    const updated = await this.api.toggleRecord(this.displayRunId, index);
    if (this.run) {
      const records = [...this.run.records];
      records[index] = updated;
      this.run = { ...this.run, records };
    }
    record.actual_or_chosen = updated.actual_or_chosen;
    chosenEl.textContent = chosenOrPredicted(updated);
    this.renderTable();
  }

  closePopup(restoreScroll: boolean): void {
    if (this.popupEl) {
      this.popupEl.remove();
      this.popupEl = null;
      if (restoreScroll) {
        this.root.ownerDocument.defaultView?.scrollTo(0, this.savedScroll);
      }
    }
  }

  get popup(): HTMLElement | null {
    return this.popupEl;
  }
}
