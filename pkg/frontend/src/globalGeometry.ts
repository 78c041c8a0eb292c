/** Global geometry view: parallel coordinates over all class directions.
 *
 * One axis per class angle (capped; a ranked pre-selection kicks in for
 * many-class datasets), then a length axis and a margin axis.  One
 * polyline per sample of the selected class.  In compare mode the
 * reference model draws gray and the compared model in the accent color,
 * with a per-axis density pair showing the distribution shift.  Axis
 * brushes intersect across axes and compose with the other selections.
 */

import { extent, linearScale, svgPolylinePoints, type Scale } from "./layout.js";
import type { SamplePayload, SnapshotPayload } from "./types.js";

export interface AxisVM {
  key: string; // "angle:<class>" | "length" | "margin"
  label: string;
  x: number;
  scale: Scale;
}

export interface PolylineVM {
  sampleId: string;
  series: "ref" | "cmp";
  correct: boolean;
  values: number[]; // one per axis, server numbers
  points: Array<[number, number]>;
  svgPoints: string;
}

export interface AxisDensityVM {
  axisKey: string;
  series: "ref" | "cmp";
  polyline: string;
}

export interface GlobalGeometryVM {
  classLabel: number;
  countBadge: number;
  axes: AxisVM[];
  polylines: PolylineVM[];
  axisDensities: AxisDensityVM[];
  selectedClasses: number[];
  capped: boolean;
  degenerate: string[];
}

export interface GlobalGeometryOptions {
  width: number;
  height: number;
  axisCap: number;
  densityBins: number;
  compare?: { cmpSnapshot: SnapshotPayload };
}

export const DEFAULT_GLOBAL_OPTIONS: GlobalGeometryOptions = {
  width: 720,
  height: 300,
  axisCap: 12,
  densityBins: 12,
};

function meanAbs(values: number[]): number {
  if (values.length === 0) return 0;
  return values.reduce((a, b) => a + Math.abs(b), 0) / values.length;
}

/** Rank class axes by how informative they are for the displayed samples:
 * distance of the mean angle from the uninformative 90 degrees; in compare
 * mode, by how much the angle moved between the models. */
export function rankClasses(
  snapshot: SnapshotPayload,
  cmpSnapshot?: SnapshotPayload,
): number[] {
  const c = snapshot.class_count;
  const scores: Array<[number, number]> = [];
  const cmpById = new Map<string, SamplePayload>(
    (cmpSnapshot?.samples ?? []).map((s) => [s.sample_id, s]),
  );
  for (let j = 0; j < c; j++) {
    if (cmpSnapshot) {
      const deltas: number[] = [];
      for (const s of snapshot.samples) {
        const other = cmpById.get(s.sample_id);
        const a = s.angles[j];
        const b = other?.angles[j];
        if (a != null && b != null) deltas.push(b - a);
      }
      scores.push([j, meanAbs(deltas)]);
    } else {
      const offsets = snapshot.samples
        .map((s) => s.angles[j])
        .filter((a): a is number => a != null)
        .map((a) => a - 90.0);
      scores.push([j, meanAbs(offsets)]);
    }
  }
  return scores.sort((a, b) => b[1] - a[1] || a[0] - b[0]).map(([j]) => j);
}

export function buildGlobalGeometryVM(
  snapshot: SnapshotPayload,
  classLabel: number,
  options: GlobalGeometryOptions = DEFAULT_GLOBAL_OPTIONS,
): GlobalGeometryVM {
  const { width, height, axisCap, densityBins, compare } = options;
  const c = snapshot.class_count;

  const capped = c > axisCap;
  let selectedClasses: number[];
  if (capped) {
    const ranked = rankClasses(snapshot, compare?.cmpSnapshot);
    selectedClasses = ranked.slice(0, axisCap).sort((a, b) => a - b);
    if (!selectedClasses.includes(classLabel)) {
      selectedClasses = [classLabel, ...selectedClasses.slice(0, axisCap - 1)].sort(
        (a, b) => a - b,
      );
    }
  } else {
    selectedClasses = Array.from({ length: c }, (_, j) => j);
  }

  const refSamples = snapshot.samples.filter((s) => !s.degenerate);
  const cmpSamples = (compare?.cmpSnapshot.samples ?? []).filter((s) => !s.degenerate);
  const all = [...refSamples, ...cmpSamples];

  const axisCount = selectedClasses.length + 2;
  const step = axisCount > 1 ? width / (axisCount - 1) : width;

  const axes: AxisVM[] = selectedClasses.map((j, i) => ({
    key: `angle:${j}`,
    label: `angle to class ${j}`,
    x: i * step,
    scale: linearScale([0, 180], [height, 0]),
  }));
  const lengthExtent = extent(all.map((s) => s.length as number));
  const marginExtent = extent(all.map((s) => s.margin as number));
  axes.push({
    key: "length",
    label: "length",
    x: selectedClasses.length * step,
    scale: linearScale(lengthExtent, [height, 0]),
  });
  axes.push({
    key: "margin",
    label: "margin",
    x: (selectedClasses.length + 1) * step,
    scale: linearScale(marginExtent, [height, 0]),
  });

  const lineOf = (s: SamplePayload, series: "ref" | "cmp"): PolylineVM => {
    const values = [
      ...selectedClasses.map((j) => s.angles[j] as number),
      s.length as number,
      s.margin as number,
    ];
    const points = values.map(
      (v, i) => [axes[i]!.x, axes[i]!.scale.apply(v)] as [number, number],
    );
    return {
      sampleId: s.sample_id,
      series,
      correct: s.correct,
      values,
      points,
      svgPoints: svgPolylinePoints(points),
    };
  };

  const polylines = [
    ...refSamples.map((s) => lineOf(s, "ref")),
    ...cmpSamples.map((s) => lineOf(s, "cmp")),
  ];

  const axisDensities: AxisDensityVM[] = [];
  if (compare) {
    for (const [series, lines] of [
      ["ref", polylines.filter((p) => p.series === "ref")],
      ["cmp", polylines.filter((p) => p.series === "cmp")],
    ] as const) {
      axes.forEach((axis, axisIndex) => {
        const values = lines.map((p) => p.values[axisIndex]!);
        if (values.length === 0) return;
        const [lo, hi] = axis.scale.domain;
        const binWidth = (hi - lo) / densityBins;
        const counts = new Array<number>(densityBins).fill(0);
        for (const v of values) {
          const bin = Math.min(densityBins - 1, Math.max(0, Math.floor((v - lo) / binWidth)));
          counts[bin]! += 1;
        }
        const maxCount = Math.max(...counts, 1);
        const pts: Array<[number, number]> = counts.map((count, bin) => [
          axis.x + (count / maxCount) * (step * 0.35),
          axis.scale.apply(lo + (bin + 0.5) * binWidth),
        ]);
        axisDensities.push({
          axisKey: axis.key,
          series,
          polyline: svgPolylinePoints(pts),
        });
      });
    }
  }

  return {
    classLabel,
    countBadge: snapshot.n,
    axes,
    polylines,
    axisDensities,
    selectedClasses,
    capped,
    degenerate: snapshot.samples.filter((s) => s.degenerate).map((s) => s.sample_id),
  };
}

export type AxisBrushes = Map<string, [number, number]>;

/** Sample ids whose value lies inside every active axis brush (data units).
 * Brushes on different axes intersect; an empty map selects everything. */
export function axisBrushSelect(vm: GlobalGeometryVM, brushes: AxisBrushes): string[] {
  const axisIndex = new Map(vm.axes.map((a, i) => [a.key, i]));
  const ids = new Set<string>();
  for (const line of vm.polylines) {
    if (line.series === "cmp") continue;
    let inside = true;
    for (const [key, [lo, hi]] of brushes) {
      const idx = axisIndex.get(key);
      if (idx === undefined) {
        inside = false;
        break;
      }
      const v = line.values[idx]!;
      if (v < Math.min(lo, hi) || v > Math.max(lo, hi)) {
        inside = false;
        break;
      }
    }
    if (inside) ids.add(line.sampleId);
  }
  return [...ids].sort();
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderGlobalGeometry(container: HTMLElement, vm: GlobalGeometryVM): void {
  container.replaceChildren();

  const header = document.createElement("div");
  header.className = "view-header";
  const badge = document.createElement("span");
  badge.className = "count-badge";
  badge.textContent = String(vm.countBadge);
  header.appendChild(badge);
  if (vm.capped) {
    const note = document.createElement("span");
    note.className = "axis-cap-note";
    note.textContent = `showing ${vm.selectedClasses.length} ranked class axes`;
    header.appendChild(note);
  }
  container.appendChild(header);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "global-geometry");
  const width = (vm.axes[vm.axes.length - 1]?.x ?? 0) + 60;
  const height = (vm.axes[0]?.scale.range[0] ?? 0) + 40;
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));

  for (const density of vm.axisDensities) {
    const poly = document.createElementNS(SVG_NS, "polyline");
    poly.setAttribute("class", `axis-density axis-density-${density.series}`);
    poly.setAttribute("points", density.polyline);
    svg.appendChild(poly);
  }

  for (const line of vm.polylines) {
    const poly = document.createElementNS(SVG_NS, "polyline");
    poly.setAttribute(
      "class",
      `sample-line series-${line.series} ${line.correct ? "correct" : "incorrect"}`,
    );
    poly.setAttribute("points", line.svgPoints);
    poly.dataset.sampleId = line.sampleId;
    svg.appendChild(poly);
  }

  for (const axis of vm.axes) {
    const lineEl = document.createElementNS(SVG_NS, "line");
    lineEl.setAttribute("class", "axis-line");
    lineEl.setAttribute("x1", String(axis.x));
    lineEl.setAttribute("x2", String(axis.x));
    lineEl.setAttribute("y1", String(axis.scale.range[1]));
    lineEl.setAttribute("y2", String(axis.scale.range[0]));
    lineEl.dataset.axis = axis.key;
    svg.appendChild(lineEl);
    const text = document.createElementNS(SVG_NS, "text");
    text.setAttribute("class", "axis-label");
    text.setAttribute("x", String(axis.x));
    text.setAttribute("y", String(height - 8));
    text.textContent = axis.label;
    svg.appendChild(text);
  }
  container.appendChild(svg);
}
