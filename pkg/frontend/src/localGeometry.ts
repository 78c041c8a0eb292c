/** Local geometry view: angle vs length scatter for one class.
 *
 * Marginal density strips come straight from /api/density; the margin
 * density sits top-right.  Correct samples are gray, incorrect red.  In
 * compare mode each joined sample draws a straight segment from its
 * reference position to its compared position, colored by its category
 * and filterable to any subset of the four categories.  A rectangular
 * brush over the scatter yields the sample ids inside it (the UI posts
 * them as a subset).
 */

import { densityPolygon, extent, formatPercent, linearScale, svgPolylinePoints, type Scale } from "./layout.js";
import type {
  DensityPayload,
  SnapshotPayload,
  TrajectoriesPayload,
  TrajectoryCategory,
} from "./types.js";

export const CATEGORY_COLORS: Record<TrajectoryCategory, string> = {
  both_correct: "#9aa0a6",
  both_wrong: "#8e44ad",
  ref_correct_only: "#d93025",
  cmp_correct_only: "#1a73e8",
};

export interface ScatterPointVM {
  sampleId: string;
  angle: number;
  length: number;
  x: number;
  y: number;
  correct: boolean;
  color: string;
  series: "single" | "ref" | "cmp";
}

export interface TrajectorySegmentVM {
  sampleId: string;
  category: TrajectoryCategory;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  color: string;
}

export interface LocalGeometryVM {
  classLabel: number | null;
  accuracyLabel: string;
  countBadge: number;
  points: ScatterPointVM[];
  degenerate: string[];
  xScale: Scale;
  yScale: Scale;
  angleMarginal: string;
  lengthMarginal: string;
  marginMarginal: string;
  trajectories: TrajectorySegmentVM[];
}

export interface LocalGeometryOptions {
  width: number;
  height: number;
  marginalThickness: number;
  compare?: {
    trajectories: TrajectoriesPayload;
    cmpSnapshot: SnapshotPayload;
    categoryFilters: TrajectoryCategory[];
  };
}

export const DEFAULT_LOCAL_OPTIONS: LocalGeometryOptions = {
  width: 420,
  height: 320,
  marginalThickness: 48,
};

function marginalPath(density: DensityPayload, valueScale: Scale, thickness: number, flip = false): string {
  const heightScale = linearScale(
    [0, Math.max(...density.heights, 1e-12)],
    flip ? [0, thickness] : [thickness, 0],
  );
  return svgPolylinePoints(densityPolygon(density.bin_edges, density.heights, valueScale, heightScale));
}

export function buildLocalGeometryVM(
  snapshot: SnapshotPayload,
  densities: { angle: DensityPayload; length: DensityPayload; margin: DensityPayload },
  options: LocalGeometryOptions = DEFAULT_LOCAL_OPTIONS,
): LocalGeometryVM {
  const { width, height, marginalThickness, compare } = options;

  const usable = snapshot.samples.filter((s) => !s.degenerate);
  const cmpUsable = compare?.cmpSnapshot.samples.filter((s) => !s.degenerate) ?? [];
  const angles = [...usable, ...cmpUsable].map((s) => s.angle_true as number);
  const lengths = [...usable, ...cmpUsable].map((s) => s.length as number);
  const xScale = linearScale(extent(angles), [0, width]);
  const yScale = linearScale(extent(lengths), [height, 0]);

  const pointOf = (
    s: SnapshotPayload["samples"][number],
    series: "single" | "ref" | "cmp",
  ): ScatterPointVM => ({
    sampleId: s.sample_id,
    angle: s.angle_true as number,
    length: s.length as number,
    x: xScale.apply(s.angle_true as number),
    y: yScale.apply(s.length as number),
    correct: s.correct,
    color:
      series === "single"
        ? s.correct
          ? "#9aa0a6"
          : "#d93025"
        : series === "ref"
          ? "#9aa0a6"
          : "#f9ab00",
    series,
  });

  const points = compare
    ? [...usable.map((s) => pointOf(s, "ref")), ...cmpUsable.map((s) => pointOf(s, "cmp"))]
    : usable.map((s) => pointOf(s, "single"));

  let trajectories: TrajectorySegmentVM[] = [];
  if (compare) {
    const active = new Set(compare.categoryFilters);
    trajectories = compare.trajectories.pairs
      .filter((p) => active.has(p.category))
      .filter((p) => !p.ref.degenerate && !p.cmp.degenerate)
      .map((p) => ({
        sampleId: p.sample_id,
        category: p.category,
        x1: xScale.apply(p.ref.angle_true as number),
        y1: yScale.apply(p.ref.length as number),
        x2: xScale.apply(p.cmp.angle_true as number),
        y2: yScale.apply(p.cmp.length as number),
        color: CATEGORY_COLORS[p.category],
      }));
  }

  return {
    classLabel: snapshot.class_label,
    accuracyLabel: formatPercent(snapshot.accuracy),
    countBadge: snapshot.n,
    points,
    degenerate: snapshot.samples.filter((s) => s.degenerate).map((s) => s.sample_id),
    xScale,
    yScale,
    angleMarginal: marginalPath(densities.angle, xScale, marginalThickness),
    lengthMarginal: marginalPath(densities.length, yScale, marginalThickness, true),
    marginMarginal: marginalPath(
      densities.margin,
      linearScale(extent(densities.margin.bin_edges), [0, marginalThickness * 2]),
      marginalThickness,
    ),
    trajectories,
  };
}

export interface BrushRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

/** Sample ids inside a pixel-space brush rectangle (reference series only
 * in compare mode, so a brush always selects base samples exactly once). */
export function rectBrush(vm: LocalGeometryVM, rect: BrushRect): string[] {
  const xLo = Math.min(rect.x0, rect.x1);
  const xHi = Math.max(rect.x0, rect.x1);
  const yLo = Math.min(rect.y0, rect.y1);
  const yHi = Math.max(rect.y0, rect.y1);
  const ids = vm.points
    .filter((p) => p.series !== "cmp")
    .filter((p) => p.x >= xLo && p.x <= xHi && p.y >= yLo && p.y <= yHi)
    .map((p) => p.sampleId);
  return [...new Set(ids)].sort();
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderLocalGeometry(container: HTMLElement, vm: LocalGeometryVM): void {
  container.replaceChildren();

  const header = document.createElement("div");
  header.className = "view-header";
  const badge = document.createElement("span");
  badge.className = "count-badge";
  badge.textContent = String(vm.countBadge);
  const accuracy = document.createElement("span");
  accuracy.className = "accuracy-text";
  accuracy.textContent = vm.accuracyLabel;
  header.append(badge, accuracy);
  container.appendChild(header);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "local-geometry");
  svg.setAttribute("width", String(vm.xScale.range[1] + 80));
  svg.setAttribute("height", String(vm.yScale.range[0] + 80));

  for (const [cls, pts] of [
    ["marginal-angle", vm.angleMarginal],
    ["marginal-length", vm.lengthMarginal],
    ["marginal-margin", vm.marginMarginal],
  ] as const) {
    const poly = document.createElementNS(SVG_NS, "polyline");
    poly.setAttribute("class", cls);
    poly.setAttribute("points", pts);
    svg.appendChild(poly);
  }

  for (const seg of vm.trajectories) {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("class", `trajectory trajectory-${seg.category}`);
    line.setAttribute("x1", String(seg.x1));
    line.setAttribute("y1", String(seg.y1));
    line.setAttribute("x2", String(seg.x2));
    line.setAttribute("y2", String(seg.y2));
    line.setAttribute("stroke", seg.color);
    line.dataset.sampleId = seg.sampleId;
    svg.appendChild(line);
  }

  for (const point of vm.points) {
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("class", `sample-point series-${point.series}`);
    circle.setAttribute("cx", String(point.x));
    circle.setAttribute("cy", String(point.y));
    circle.setAttribute("r", "2.5");
    circle.setAttribute("fill", point.color);
    circle.dataset.sampleId = point.sampleId;
    svg.appendChild(circle);
  }
  container.appendChild(svg);

  const degenerate = document.createElement("div");
  degenerate.className = "degenerate-list";
  degenerate.textContent = vm.degenerate.length
    ? `degenerate (not plotted): ${vm.degenerate.join(", ")}`
    : "";
  container.appendChild(degenerate);
}
