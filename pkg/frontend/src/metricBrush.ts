/** Metric-difference selection over trajectory pairs.
 *
 * Mirrors the server's selection semantics: delta = compared - reference,
 * "increased" keeps positive deltas, "decreased" negative ones,
 * "abs_at_least" keeps |delta| >= threshold; degenerate pairs never
 * match.  The resulting ids are posted back as a subset, so the server
 * remains the source of truth for everything derived from the selection.
 */

import type { MetricBrush } from "./state.js";
import type { TrajectoryPairPayload } from "./types.js";

export function pairDelta(
  pair: TrajectoryPairPayload,
  metric: MetricBrush["metric"],
): number | null {
  if (pair.ref.degenerate || pair.cmp.degenerate) return null;
  const pick = (s: TrajectoryPairPayload["ref"]) =>
    metric === "angle_true" ? s.angle_true : metric === "length" ? s.length : s.margin;
  const a = pick(pair.ref);
  const b = pick(pair.cmp);
  if (a === null || b === null) return null;
  return b - a;
}

export function metricDifferenceBrush(
  pairs: TrajectoryPairPayload[],
  brush: MetricBrush,
): string[] {
  const selected: string[] = [];
  for (const pair of pairs) {
    const delta = pairDelta(pair, brush.metric);
    if (delta === null) continue;
    const keep =
      (brush.predicate === "increased" && delta > 0) ||
      (brush.predicate === "decreased" && delta < 0) ||
      (brush.predicate === "abs_at_least" && Math.abs(delta) >= (brush.threshold ?? 0));
    if (keep) selected.push(pair.sample_id);
  }
  return [...new Set(selected)].sort();
}
