/** Workbench wiring: selections drive fetches, fetches drive renders.
 *
 * All data access is asynchronous through ApiClient channels; stale
 * responses are discarded by request-sequence tokens, so rapid clicking
 * can never paint an older state over a newer one.
 */

import { ApiClient, StaleResponse } from "./api.js";
import { buildEvaluationTableVM, renderEvaluationTable } from "./evaluationTable.js";
import {
  buildLocalGeometryVM,
  DEFAULT_LOCAL_OPTIONS,
  rectBrush,
  renderLocalGeometry,
  type BrushRect,
  type LocalGeometryVM,
} from "./localGeometry.js";
import { buildGlobalGeometryVM, renderGlobalGeometry } from "./globalGeometry.js";
import { metricDifferenceBrush } from "./metricBrush.js";
import {
  comparedCombo,
  initialState,
  referenceCombo,
  setBrush,
  setClass,
  setCompareMode,
  setSubset,
  toggleCombination,
  type ViewState,
} from "./state.js";
import { TRAJECTORY_CATEGORIES, type MetricName, type TrajectoryCategory } from "./types.js";

const api = new ApiClient("");
let state: ViewState = initialState();
let lastLocalVM: LocalGeometryVM | null = null;
let lastTrajectories: Awaited<ReturnType<ApiClient["trajectories"]>> | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string): void {
  el<HTMLElement>("status").textContent = text;
}

async function refreshCombinations(): Promise<void> {
  const payload = await api.combinations();
  const list = el<HTMLElement>("combinations");
  list.replaceChildren();
  for (const combo of payload.combinations) {
    const item = document.createElement("button");
    item.className = "combo-item";
    item.dataset.comboId = combo.id;
    const pct = (combo.clean_accuracy * 100).toFixed(1);
    item.textContent = `${combo.id} · ${combo.method} @ ${combo.prune_rate} · ${pct}%`;
    item.addEventListener("click", () => {
      state = toggleCombination(state, combo.id);
      void refreshAll();
    });
    list.appendChild(item);
  }
}

function syncSelectionUi(): void {
  for (const item of document.querySelectorAll<HTMLElement>(".combo-item")) {
    const id = item.dataset.comboId ?? "";
    item.classList.toggle("selected-ref", referenceCombo(state) === id);
    item.classList.toggle("selected-cmp", comparedCombo(state) === id);
  }
  const compareToggle = el<HTMLInputElement>("compare-toggle");
  compareToggle.disabled = state.selected.length !== 2;
  compareToggle.checked = state.compareMode;
  el<HTMLElement>("subset-indicator").textContent = state.subsetId
    ? `subset: ${state.subsetId}`
    : "no subset";
}

async function refreshTable(): Promise<void> {
  try {
    const payload = await api.latest("table", () =>
      api.evaluationTable(state.subsetId ? { subset: state.subsetId } : undefined),
    );
    renderEvaluationTable(el("evaluation-table"), buildEvaluationTableVM(payload));
  } catch (err) {
    if (!(err instanceof StaleResponse)) throw err;
  }
}

async function refreshLocal(): Promise<void> {
  const ref = referenceCombo(state);
  if (ref === null || state.selectedClass === null) {
    el("local-geometry").replaceChildren();
    lastLocalVM = null;
    return;
  }
  const cls = state.selectedClass;
  try {
    const vm = await api.latest("local", async () => {
      const combo = (await api.combinations()).combinations.find((c) => c.id === ref);
      const dataset = combo?.dataset_id ?? "clean";
      const [snapshot, angle, length, margin] = await Promise.all([
        api.snapshot(ref, dataset, cls),
        api.density(ref, dataset, "angle_true", cls),
        api.density(ref, dataset, "length", cls),
        api.density(ref, dataset, "margin", cls),
      ]);
      const cmp = comparedCombo(state);
      if (state.compareMode && cmp !== null) {
        const [trajectories, cmpSnapshot] = await Promise.all([
          api.trajectories(ref, cmp, cls, dataset),
          api.snapshot(cmp, dataset, cls),
        ]);
        lastTrajectories = trajectories;
        return buildLocalGeometryVM(snapshot, { angle, length, margin }, {
          ...DEFAULT_LOCAL_OPTIONS,
          compare: {
            trajectories,
            cmpSnapshot,
            categoryFilters: state.categoryFilters,
          },
        });
      }
      lastTrajectories = null;
      return buildLocalGeometryVM(snapshot, { angle, length, margin });
    });
    lastLocalVM = vm;
    renderLocalGeometry(el("local-geometry"), vm);
    attachScatterBrush();
  } catch (err) {
    if (!(err instanceof StaleResponse)) throw err;
  }
}

async function refreshGlobal(): Promise<void> {
  const ref = referenceCombo(state);
  if (ref === null || state.selectedClass === null) {
    el("global-geometry").replaceChildren();
    return;
  }
  const cls = state.selectedClass;
  try {
    const vm = await api.latest("global", async () => {
      const combo = (await api.combinations()).combinations.find((c) => c.id === ref);
      const dataset = combo?.dataset_id ?? "clean";
      const snapshot = await api.snapshot(ref, dataset, cls);
      const cmp = comparedCombo(state);
      if (state.compareMode && cmp !== null) {
        const cmpSnapshot = await api.snapshot(cmp, dataset, cls);
        return buildGlobalGeometryVM(snapshot, cls, {
          width: 720,
          height: 300,
          axisCap: 12,
          densityBins: 12,
          compare: { cmpSnapshot },
        });
      }
      return buildGlobalGeometryVM(snapshot, cls);
    });
    renderGlobalGeometry(el("global-geometry"), vm);
  } catch (err) {
    if (!(err instanceof StaleResponse)) throw err;
  }
}

async function createSubsetFromIds(ids: string[], note: string): Promise<void> {
  if (ids.length === 0) {
    setStatus("selection matched no samples; nothing posted");
    return;
  }
  const created = await api.createSubset(ids, note);
  state = setSubset(state, created.id);
  setStatus(`created ${created.id} (${created.size} samples)`);
  await refreshAll();
}

function attachScatterBrush(): void {
  const svg = document.querySelector<SVGSVGElement>("#local-geometry svg.local-geometry");
  if (!svg) return;
  let start: { x: number; y: number } | null = null;
  svg.addEventListener("pointerdown", (event) => {
    const rect = svg.getBoundingClientRect();
    start = { x: event.clientX - rect.left, y: event.clientY - rect.top };
  });
  svg.addEventListener("pointerup", (event) => {
    if (!start || !lastLocalVM) return;
    const rect = svg.getBoundingClientRect();
    const brush: BrushRect = {
      x0: start.x,
      y0: start.y,
      x1: event.clientX - rect.left,
      y1: event.clientY - rect.top,
    };
    start = null;
    const ids = rectBrush(lastLocalVM, brush);
    void createSubsetFromIds(ids, "scatter brush");
  });
}

function wireControls(): void {
  el<HTMLInputElement>("compare-toggle").addEventListener("change", (event) => {
    const on = (event.target as HTMLInputElement).checked;
    try {
      state = setCompareMode(state, on);
    } catch (err) {
      setStatus(String(err));
      (event.target as HTMLInputElement).checked = false;
      return;
    }
    void refreshAll();
  });

  el<HTMLSelectElement>("class-select").addEventListener("change", (event) => {
    const value = (event.target as HTMLSelectElement).value;
    state = setClass(state, value === "" ? null : Number(value));
    void refreshAll();
  });

  el<HTMLButtonElement>("clear-subset").addEventListener("click", () => {
    state = setSubset(state, null);
    void refreshAll();
  });

  const filters = el<HTMLElement>("category-filters");
  for (const category of TRAJECTORY_CATEGORIES) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = true;
    box.addEventListener("change", () => {
      state = {
        ...state,
        categoryFilters: box.checked
          ? [...state.categoryFilters, category as TrajectoryCategory]
          : state.categoryFilters.filter((c) => c !== category),
      };
      void refreshLocal();
    });
    label.append(box, document.createTextNode(category));
    filters.appendChild(label);
  }

  el<HTMLButtonElement>("apply-metric-brush").addEventListener("click", () => {
    const metric = el<HTMLSelectElement>("brush-metric").value as MetricName;
    const predicate = el<HTMLSelectElement>("brush-predicate").value as
      | "increased"
      | "decreased"
      | "abs_at_least";
    const thresholdText = el<HTMLInputElement>("brush-threshold").value;
    const threshold = thresholdText === "" ? null : Number(thresholdText);
    try {
      state = setBrush(state, { metric, predicate, threshold });
    } catch (err) {
      setStatus(String(err));
      return;
    }
    if (!lastTrajectories) {
      setStatus("metric-difference brush needs compare mode with trajectories loaded");
      return;
    }
    const ids = metricDifferenceBrush(lastTrajectories.pairs, state.brush!);
    void createSubsetFromIds(ids, `metric brush ${metric} ${predicate}`);
  });
}

async function populateClassSelect(): Promise<void> {
  const combos = (await api.combinations()).combinations;
  const first = combos[0];
  if (!first) return;
  const snapshot = await api.snapshot(first.id, first.dataset_id);
  const select = el<HTMLSelectElement>("class-select");
  select.replaceChildren(new Option("all classes", ""));
  for (let j = 0; j < snapshot.class_count; j++) {
    select.appendChild(new Option(`class ${j}`, String(j)));
  }
}

async function refreshAll(): Promise<void> {
  syncSelectionUi();
  await Promise.all([refreshTable(), refreshLocal(), refreshGlobal()]);
}

export async function boot(): Promise<void> {
  wireControls();
  await refreshCombinations();
  await populateClassSelect();
  await refreshAll();
  setStatus("ready");
}

if (typeof document !== "undefined" && document.getElementById("combinations")) {
  void boot().catch((err) => setStatus(`boot failed: ${err}`));
}
