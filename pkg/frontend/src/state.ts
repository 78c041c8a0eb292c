/** Workbench selection state and its legal transitions.
 *
 * Invariants enforced here: at most two selected combinations (reference
 * first, compared second), compare mode only with exactly two, category
 * filters drawn from the four trajectory categories.
 */

import { TRAJECTORY_CATEGORIES, type MetricName, type TrajectoryCategory } from "./types.js";

export type BrushPredicate = "increased" | "decreased" | "abs_at_least";

export interface MetricBrush {
  metric: MetricName;
  predicate: BrushPredicate;
  threshold: number | null;
}

export interface ViewState {
  /** [reference] or [reference, compared]. */
  selected: string[];
  selectedClass: number | null;
  subsetId: string | null;
  compareMode: boolean;
  categoryFilters: TrajectoryCategory[];
  brush: MetricBrush | null;
}

export function initialState(): ViewState {
  return {
    selected: [],
    selectedClass: null,
    subsetId: null,
    compareMode: false,
    categoryFilters: [...TRAJECTORY_CATEGORIES],
    brush: null,
  };
}

export function referenceCombo(state: ViewState): string | null {
  return state.selected[0] ?? null;
}

export function comparedCombo(state: ViewState): string | null {
  return state.selected[1] ?? null;
}

/** Toggle a combination: select as reference, then compared; selecting a
 * third replaces the compared slot; re-selecting removes it. */
export function toggleCombination(state: ViewState, comboId: string): ViewState {
  let selected: string[];
  if (state.selected.includes(comboId)) {
    selected = state.selected.filter((c) => c !== comboId);
  } else if (state.selected.length < 2) {
    selected = [...state.selected, comboId];
  } else {
    selected = [state.selected[0]!, comboId];
  }
  const compareMode = state.compareMode && selected.length === 2;
  return { ...state, selected, compareMode };
}

export function setCompareMode(state: ViewState, on: boolean): ViewState {
  if (on && state.selected.length !== 2) {
    throw new Error("compare mode requires exactly 2 selected combinations");
  }
  return { ...state, compareMode: on };
}

export function setClass(state: ViewState, classLabel: number | null): ViewState {
  if (classLabel !== null && (!Number.isInteger(classLabel) || classLabel < 0)) {
    throw new Error(`invalid class label ${classLabel}`);
  }
  return { ...state, selectedClass: classLabel };
}

export function setSubset(state: ViewState, subsetId: string | null): ViewState {
  return { ...state, subsetId };
}

export function toggleCategoryFilter(state: ViewState, category: TrajectoryCategory): ViewState {
  if (!TRAJECTORY_CATEGORIES.includes(category)) {
    throw new Error(`unknown trajectory category ${category}`);
  }
  const active = state.categoryFilters.includes(category);
  const categoryFilters = active
    ? state.categoryFilters.filter((c) => c !== category)
    : [...state.categoryFilters, category];
  return { ...state, categoryFilters };
}

export function setBrush(state: ViewState, brush: MetricBrush | null): ViewState {
  if (brush && brush.predicate === "abs_at_least" && brush.threshold === null) {
    throw new Error("abs_at_least brush needs a threshold");
  }
  return { ...state, brush };
}
