// Entry point: a 3-tab shell (label / train / review) wired to the
// service API on the same origin. Which dataset, job, or run a tab shows
// is chosen through simple pickers backed by the listing endpoints.

import { Api } from "./api.js";
import { DashboardView } from "./dashboard.js";
import { LabelingView } from "./labeling.js";
import { ReviewView } from "./review.js";

const api = new Api("");

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

function clear(el: HTMLElement): void {
  el.innerHTML = "";
}

async function showLabeling(): Promise<void> {
  const host = byId("view");
  clear(host);
  const datasets = await api.listDatasets();
  if (datasets.length === 0) {
    host.textContent = "No datasets in the workspace yet. Import one via the API or CLI.";
    return;
  }
  const picker = document.createElement("select");
  for (const d of datasets) {
    const opt = document.createElement("option");
    opt.value = d.id;
    opt.textContent = `${d.id} (${d.kind}, ${d.patches} patches)`;
    picker.appendChild(opt);
  }
  host.appendChild(picker);

  let view: LabelingView | null = null;
  const mount = async () => {
    if (view) view.root.remove();
    view = new LabelingView(api, picker.value, {
      labels: ["negative", "positive"],
      buttonMode: true,
    });
    host.appendChild(view.root);
    await view.load();
  };
  picker.addEventListener("change", () => void mount());
  await mount();
}

async function showDashboard(): Promise<void> {
  const host = byId("view");
  clear(host);
  const form = document.createElement("form");
  form.innerHTML = `
    <label>job id <input name="job" placeholder="training job id"></label>
    <button type="submit">attach</button>
  `;
  host.appendChild(form);
  form.addEventListener("submit", (e) => {
    e.preventDefault();
    const jobId = (form.elements.namedItem("job") as HTMLInputElement).value.trim();
    if (!jobId) return;
    const old = host.querySelector(".dashboard");
    if (old) old.remove();
    const view = new DashboardView(api, jobId);
    host.appendChild(view.root);
    view.connect();
    view.render();
  });
}

async function showReview(): Promise<void> {
  const host = byId("view");
  clear(host);
  const form = document.createElement("form");
  form.innerHTML = `
    <label>run id <input name="run" placeholder="prediction run id"></label>
    <button type="submit">open</button>
  `;
  host.appendChild(form);
  form.addEventListener("submit", (e) => {
    e.preventDefault();
    const runId = (form.elements.namedItem("run") as HTMLInputElement).value.trim();
    if (!runId) return;
    const old = host.querySelector(".review");
    if (old) old.remove();
    const view = new ReviewView(api, runId);
    host.appendChild(view.root);
    void view.load();
  });
}

const tabs: Record<string, () => Promise<void>> = {
  label: showLabeling,
  train: showDashboard,
  review: showReview,
};

export function boot(): void {
  for (const name of Object.keys(tabs)) {
    byId(`tab-${name}`).addEventListener("click", () => void tabs[name]());
  }
  void showLabeling();
}

if (typeof document !== "undefined" && document.getElementById("view")) {
  boot();
}
