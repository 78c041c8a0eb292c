/** Pure pixel-scaling helpers. The only math the UI does to server data. */

export interface Scale {
  domain: [number, number];
  range: [number, number];
  apply(value: number): number;
  invert(px: number): number;
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 === 0 ? 1 : d1 - d0;
  return {
    domain,
    range,
    apply: (v) => r0 + ((v - d0) / span) * (r1 - r0),
    invert: (px) => d0 + ((px - r0) / (r1 - r0 === 0 ? 1 : r1 - r0)) * span,
  };
}

export function extent(values: number[]): [number, number] {
  if (values.length === 0) return [0, 1];
  let lo = values[0]!;
  let hi = values[0]!;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

/** Percentage text exactly as displayed next to table bars. */
export function formatPercent(fraction: number, decimals = 1): string {
  return `${(fraction * 100).toFixed(decimals)}%`;
}

/** Signed percentage for subset delta bars ("+5.0%", "-2.3%"). */
export function formatSignedPercent(fraction: number, decimals = 1): string {
  const text = (fraction * 100).toFixed(decimals);
  return `${fraction >= 0 ? "+" : ""}${text}%`;
}

export function svgPolylinePoints(points: Array<[number, number]>): string {
  return points.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
}

/** Density curve as a baseline-anchored polygon for a marginal strip. */
export function densityPolygon(
  binEdges: number[],
  heights: number[],
  valueScale: Scale,
  heightScale: Scale,
): Array<[number, number]> {
  const points: Array<[number, number]> = [];
  const baseline = heightScale.apply(0);
  if (binEdges.length === 0) return points;
  points.push([valueScale.apply(binEdges[0]!), baseline]);
  for (let i = 0; i < heights.length; i++) {
    const x0 = valueScale.apply(binEdges[i]!);
    const x1 = valueScale.apply(binEdges[i + 1]!);
    const y = heightScale.apply(heights[i]!);
    points.push([x0, y], [x1, y]);
  }
  points.push([valueScale.apply(binEdges[binEdges.length - 1]!), baseline]);
  return points;
}
