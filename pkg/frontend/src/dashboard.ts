// Training dashboard: accuracy/loss curves drawn onto a canvas from the
// job's server-sent event stream, a text console of epoch lines, and the
// four run-control buttons. Reset clears the curves and reconnects.

import { Api, EpochEvent, JobEvent } from "./api.js";
import { EpochSeries, appendEpoch, consoleLine, emptySeries } from "./state.js";

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface EventSourceLike {
  onmessage: ((e: { data: string }) => void) | null;
  close(): void;
}

const defaultFactory: EventSourceFactory = (url) => new EventSource(url) as unknown as EventSourceLike;

export class DashboardView {
  readonly root: HTMLElement;
  series: EpochSeries = emptySeries();
  jobState = "unknown";
  private source: EventSourceLike | null = null;
  private consoleEl: HTMLElement;
  private stateEl: HTMLElement;
  private canvas: HTMLCanvasElement;

  constructor(
    private api: Api,
    private jobId: string,
    private factory: EventSourceFactory = defaultFactory,
    doc: Document = document,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "dashboard";

    this.stateEl = doc.createElement("div");
    this.stateEl.className = "job-state";
    this.root.appendChild(this.stateEl);

    const controls = doc.createElement("div");
    controls.className = "controls";
    for (const command of ["pause", "resume", "stop", "reset"] as const) {
      const btn = doc.createElement("button");
      btn.textContent = command;
      btn.dataset.command = command;
      btn.addEventListener("click", () => void this.sendControl(command));
      controls.appendChild(btn);
    }
    this.root.appendChild(controls);

    this.canvas = doc.createElement("canvas");
    this.canvas.width = 640;
    this.canvas.height = 240;
    this.root.appendChild(this.canvas);

    this.consoleEl = doc.createElement("pre");
    this.consoleEl.className = "console";
    this.root.appendChild(this.consoleEl);
  }

  connect(): void {
    this.source?.close();
    this.source = this.factory(this.api.eventsUrl(this.jobId));
    this.source.onmessage = (e) => this.onEvent(JSON.parse(e.data) as JobEvent);
  }

  private async sendControl(command: "pause" | "resume" | "stop" | "reset"): Promise<void> {
    const doc = await this.api.control(this.jobId, command);
    this.jobState = doc.state;
    if (command === "reset") {
      this.series = emptySeries();
      this.consoleEl.textContent = "";
      this.connect(); // new run, new stream
    }
    this.render();
  }

  onEvent(event: JobEvent): void {
    if (event.type === "epoch") {
      this.series = appendEpoch(this.series, event as EpochEvent);
    } else if (event.type === "state") {
      this.jobState = event.state;
    }
    this.consoleEl.textContent += consoleLine(event) + "\n";
    this.render();
  }

  epochSequence(): number[] {
    return [...this.series.epochs];
  }

  render(): void {
    this.stateEl.textContent = `job ${this.jobId}: ${this.jobState}`;
    this.stateEl.dataset.state = this.jobState;
    this.drawCurves();
  }

  private drawCurves(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return; // headless test environments have no 2d context
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);
    if (this.series.epochs.length === 0) return;

    const maxLoss = Math.max(...this.series.trainLoss, ...this.series.valLoss, 1e-9);
    const n = this.series.epochs.length;
    const x = (i: number) => (n === 1 ? 0 : (i / (n - 1)) * (width - 20)) + 10;

    const drawLine = (values: number[], scale: number, color: string) => {
      ctx.strokeStyle = color;
      ctx.beginPath();
      values.forEach((v, i) => {
        const y = height - 10 - (v / scale) * (height - 20);
        if (i === 0) ctx.moveTo(x(i), y);
        else ctx.lineTo(x(i), y);
      });
      ctx.stroke();
    };

    drawLine(this.series.trainLoss, maxLoss, "#c2501b");
    drawLine(this.series.valLoss, maxLoss, "#e09a3c");
    drawLine(this.series.trainAcc, 1.0, "#1d5fd6");
    drawLine(this.series.valAcc, 1.0, "#59a0e8");
  }
}
