/** Evaluation table view: accuracy histograms per corruption row.
 *
 * Within a row, method series are stacked in the server's ranking order
 * (best on top).  Bars plot accuracy against the prune-rate grid; with an
 * active subset the server's per-cell deltas render as green (gain) or
 * red (loss) side bars whose length is proportional to the delta.
 */

import { formatPercent, formatSignedPercent, linearScale } from "./layout.js";
import type { TablePayload, TableRowPayload } from "./types.js";

export interface TableGeometry {
  barWidth: number;
  barGap: number;
  cellHeight: number;
  deltaWidth: number;
  labelDecimals: number;
}

export const DEFAULT_TABLE_GEOMETRY: TableGeometry = {
  barWidth: 22,
  barGap: 10,
  cellHeight: 64,
  deltaWidth: 6,
  labelDecimals: 1,
};

export interface BarVM {
  method: string;
  rate: string;
  accuracy: number;
  label: string;
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface DeltaBarVM {
  method: string;
  rate: string;
  delta: number;
  label: string;
  color: "green" | "red";
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface MethodSeriesVM {
  method: string;
  rankIndex: number;
  bars: BarVM[];
  deltaBars: DeltaBarVM[];
}

export interface RowVM {
  row: string;
  ranking: string[];
  series: MethodSeriesVM[];
}

export interface EvaluationTableVM {
  rates: string[];
  subsetId: string | null;
  rows: RowVM[];
  cellWidth: number;
  cellHeight: number;
}

function buildSeries(
  rowPayload: TableRowPayload,
  rates: string[],
  geometry: TableGeometry,
): MethodSeriesVM[] {
  const { barWidth, barGap, cellHeight, deltaWidth, labelDecimals } = geometry;
  const accuracyScale = linearScale([0, 1], [0, cellHeight]);
  return rowPayload.ranking.map((method, rankIndex) => {
    const cells = rowPayload.cells[method] ?? {};
    const deltas = rowPayload.deltas?.[method];
    const bars: BarVM[] = [];
    const deltaBars: DeltaBarVM[] = [];
    rates.forEach((rate, i) => {
      const accuracy = cells[rate];
      if (accuracy === undefined) return;
      const height = accuracyScale.apply(accuracy);
      const x = i * (barWidth + deltaWidth + barGap);
      bars.push({
        method,
        rate,
        accuracy,
        label: formatPercent(accuracy, labelDecimals),
        x,
        y: cellHeight - height,
        width: barWidth,
        height,
      });
      const delta = deltas?.[rate];
      if (delta !== undefined) {
        const deltaHeight = accuracyScale.apply(Math.abs(delta));
        deltaBars.push({
          method,
          rate,
          delta,
          label: formatSignedPercent(delta, labelDecimals),
          color: delta >= 0 ? "green" : "red",
          x: x + barWidth,
          y: cellHeight - deltaHeight,
          width: deltaWidth,
          height: deltaHeight,
        });
      }
    });
    return { method, rankIndex, bars, deltaBars };
  });
}

export function buildEvaluationTableVM(
  payload: TablePayload,
  geometry: TableGeometry = DEFAULT_TABLE_GEOMETRY,
): EvaluationTableVM {
  const cellWidth =
    payload.rates.length * (geometry.barWidth + geometry.deltaWidth + geometry.barGap);
  return {
    rates: payload.rates,
    subsetId: payload.subset_id,
    rows: payload.rows.map((row) => ({
      row: row.row,
      ranking: row.ranking,
      series: buildSeries(row, payload.rates, geometry),
    })),
    cellWidth,
    cellHeight: geometry.cellHeight,
  };
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderEvaluationTable(container: HTMLElement, vm: EvaluationTableVM): void {
  container.replaceChildren();
  const table = document.createElement("div");
  table.className = "evaluation-table";
  for (const row of vm.rows) {
    const rowEl = document.createElement("div");
    rowEl.className = "evaluation-row";
    rowEl.dataset.row = row.row;

    const name = document.createElement("div");
    name.className = "row-name";
    name.textContent = row.row;
    rowEl.appendChild(name);

    for (const series of row.series) {
      const cell = document.createElement("div");
      cell.className = "method-cell";
      cell.dataset.method = series.method;
      cell.dataset.rank = String(series.rankIndex);

      const label = document.createElement("div");
      label.className = "method-name";
      label.textContent = series.method;
      cell.appendChild(label);

      const svg = document.createElementNS(SVG_NS, "svg");
      svg.setAttribute("width", String(vm.cellWidth));
      svg.setAttribute("height", String(vm.cellHeight + 16));
      for (const bar of series.bars) {
        const rect = document.createElementNS(SVG_NS, "rect");
        rect.setAttribute("class", "accuracy-bar");
        rect.setAttribute("x", String(bar.x));
        rect.setAttribute("y", String(bar.y));
        rect.setAttribute("width", String(bar.width));
        rect.setAttribute("height", String(bar.height));
        rect.dataset.rate = bar.rate;
        svg.appendChild(rect);
        const text = document.createElementNS(SVG_NS, "text");
        text.setAttribute("class", "accuracy-label");
        text.setAttribute("x", String(bar.x));
        text.setAttribute("y", String(vm.cellHeight + 12));
        text.dataset.method = bar.method;
        text.dataset.rate = bar.rate;
        text.textContent = bar.label;
        svg.appendChild(text);
      }
      for (const deltaBar of series.deltaBars) {
        const rect = document.createElementNS(SVG_NS, "rect");
        rect.setAttribute("class", `delta-bar delta-${deltaBar.color}`);
        rect.setAttribute("x", String(deltaBar.x));
        rect.setAttribute("y", String(deltaBar.y));
        rect.setAttribute("width", String(deltaBar.width));
        rect.setAttribute("height", String(deltaBar.height));
        rect.dataset.method = deltaBar.method;
        rect.dataset.rate = deltaBar.rate;
        rect.dataset.label = deltaBar.label;
        svg.appendChild(rect);
      }
      cell.appendChild(svg);
      rowEl.appendChild(cell);
    }
    table.appendChild(rowEl);
  }
  container.appendChild(table);
}
