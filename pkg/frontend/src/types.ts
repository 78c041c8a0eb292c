/** Wire types mirroring the prunescope JSON API, field for field. */

export interface CombinationInfo {
  id: string;
  architecture: string;
  method: string;
  prune_rate: number;
  dataset_id: string;
  clean_accuracy: number;
  checkpoint_path: string;
}

export interface CombinationsPayload {
  combinations: CombinationInfo[];
}

export interface SamplePayload {
  sample_id: string;
  true_label: number;
  predicted_label: number;
  angles: (number | null)[];
  angle_true: number | null;
  length: number | null;
  margin: number | null;
  correct: boolean;
  degenerate: boolean;
}

export interface SnapshotPayload {
  combination_id: string;
  dataset_id: string;
  class_count: number;
  created_at: string;
  accuracy: number;
  class_label: number | null;
  n: number;
  samples: SamplePayload[];
}

/** cells/deltas are keyed method -> rate string -> value. */
export interface TableRowPayload {
  row: string;
  ranking: string[];
  cells: Record<string, Record<string, number>>;
  deltas?: Record<string, Record<string, number>>;
}

export interface TablePayload {
  rates: string[];
  subset_id: string | null;
  rows: TableRowPayload[];
}

export type TrajectoryCategory =
  | "both_correct"
  | "both_wrong"
  | "ref_correct_only"
  | "cmp_correct_only";

export const TRAJECTORY_CATEGORIES: readonly TrajectoryCategory[] = [
  "both_correct",
  "both_wrong",
  "ref_correct_only",
  "cmp_correct_only",
];

export interface TrajectoryPairPayload {
  sample_id: string;
  category: TrajectoryCategory;
  ref: SamplePayload;
  cmp: SamplePayload;
}

export interface TrajectoriesPayload {
  class_label: number;
  dataset_id: string;
  n_pairs: number;
  pairs: TrajectoryPairPayload[];
  missing_in_ref: string[];
  missing_in_cmp: string[];
}

export type MetricName = "angle_true" | "length" | "margin";

export interface DensityPayload {
  combination_id: string;
  dataset_id: string;
  class_label: number | null;
  metric: string;
  bin_edges: number[];
  heights: number[];
}

export interface CorrelationsPayload {
  combination_id: string;
  rc_angle: number;
  rc_l2: number;
  rc_margin: number;
  n: number;
}

export interface SubsetCreatedPayload {
  id: string;
  size: number;
  note: string;
}

export interface MarginShiftSidePayload {
  combination_id: string;
  clean_accuracy: number;
  median: number;
  n: number;
  trimmed_low: number;
  trimmed_high: number;
  excluded_small_reference: number;
  density: { bin_edges: number[]; heights: number[] };
}

export interface MarginShiftPayload {
  ref: MarginShiftSidePayload;
  cmp: MarginShiftSidePayload;
  accuracy_gap: number;
  accuracy_matched: boolean;
  median_difference: number;
  verdict: "pass" | "warn";
}
