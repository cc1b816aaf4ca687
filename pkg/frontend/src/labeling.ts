// Labeling grid: patch thumbnails, left click = positive (blue border),
// right click = negative (red border), same click again clears. Every
// change is POSTed immediately; the grid re-renders from the API response
// so a reload shows exactly what the server has. A two-button mode covers
// environments where suppressing the context menu is unwanted.

import { Api, PatchRow } from "./api.js";
import { nextLabel } from "./state.js";

export interface LabelingOptions {
  labels: [string, string]; // (negative, positive)
  buttonMode?: boolean;
}

export class LabelingView {
  readonly root: HTMLElement;
  private patches: PatchRow[] = [];
  private focusIndex = 0;

  constructor(
    private api: Api,
    private datasetId: string,
    private options: LabelingOptions,
    doc: Document = document,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "labeling-grid";
    this.root.tabIndex = 0;
    this.root.addEventListener("keydown", (e) => this.onKey(e as KeyboardEvent));
  }

  async load(): Promise<void> {
    this.patches = await this.api.patches(this.datasetId);
    this.render();
  }

  patchCount(): number {
    return this.patches.length;
  }

  labelOf(filename: string): string | null {
    const row = this.patches.find((p) => p.filename === filename);
    return row ? row.label : null;
  }

  private borderClass(label: string | null): string {
    const [negative, positive] = this.options.labels;
    if (label === positive) return "patch positive";
    if (label === negative) return "patch negative";
    return "patch unlabeled";
  }

  private async applyClick(index: number, click: "primary" | "secondary"): Promise<void> {
    const row = this.patches[index];
    if (!row) return;
    const label = nextLabel(row.label, click, this.options.labels);
    const updated = await this.api.setLabel(this.datasetId, row.filename, label);
    // trust the server's answer, not the local guess
    this.patches[index] = { ...row, label: updated.label };
    this.render();
  }

  private onKey(e: KeyboardEvent): void {
    const cols = 6;
    if (e.key === "ArrowRight") this.focusIndex = Math.min(this.focusIndex + 1, this.patches.length - 1);
    else if (e.key === "ArrowLeft") this.focusIndex = Math.max(this.focusIndex - 1, 0);
    else if (e.key === "ArrowDown") this.focusIndex = Math.min(this.focusIndex + cols, this.patches.length - 1);
    else if (e.key === "ArrowUp") this.focusIndex = Math.max(this.focusIndex - cols, 0);
    else if (e.key === "p") void this.applyClick(this.focusIndex, "primary");
    else if (e.key === "n") void this.applyClick(this.focusIndex, "secondary");
    else return;
    e.preventDefault();
    this.render();
  }

  render(): void {
    this.root.innerHTML = "";
    this.patches.forEach((row, index) => {
      const cell = this.root.ownerDocument.createElement("div");
      cell.className = this.borderClass(row.label);
      if (index === this.focusIndex) cell.classList.add("focused");
      cell.dataset.filename = row.filename;
      cell.dataset.label = row.label ?? "";

      const img = this.root.ownerDocument.createElement("img");
      img.src = this.api.imageUrl(this.datasetId, row.filename);
      img.alt = row.filename;
      img.draggable = false;
      cell.appendChild(img);

      cell.addEventListener("click", () => {
        this.focusIndex = index;
        void this.applyClick(index, "primary");
      });
      cell.addEventListener("contextmenu", (e) => {
        e.preventDefault();
        this.focusIndex = index;
        void this.applyClick(index, "secondary");
      });

      if (this.options.buttonMode) {
        const bar = this.root.ownerDocument.createElement("div");
        bar.className = "label-buttons";
        for (const click of ["primary", "secondary"] as const) {
          const btn = this.root.ownerDocument.createElement("button");
          btn.textContent = click === "primary" ? "+" : "-";
          btn.className = click;
          btn.addEventListener("click", (e) => {
            e.stopPropagation();
            void this.applyClick(index, click);
          });
          bar.appendChild(btn);
        }
        cell.appendChild(bar);
      }
      this.root.appendChild(cell);
    });
  }
}
