/** Typed client for the prunescope JSON API.
 *
 * Responses are used verbatim: the UI performs no metric math, it only
 * scales server numbers to pixels.  Each logical channel (table, local
 * view, global view, ...) carries a request-sequence token so a response
 * that arrives after a newer request on the same channel is discarded.
 */

import type {
  CombinationsPayload,
  CorrelationsPayload,
  DensityPayload,
  MarginShiftPayload,
  MetricName,
  SnapshotPayload,
  SubsetCreatedPayload,
  TablePayload,
  TrajectoriesPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class StaleResponse extends Error {
  constructor(channel: string) {
    super(`stale response discarded on channel ${channel}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private sequence = new Map<string, number>();

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string, params?: Record<string, string | number | undefined>): Promise<T> {
    const search = new URLSearchParams();
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value !== undefined) search.set(key, String(value));
    }
    const query = search.size > 0 ? `?${search.toString()}` : "";
    const response = await this.fetchImpl(`${this.baseUrl}${path}${query}`);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = ((await response.json()) as { detail?: string }).detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  /** Run a request on a channel; reject with StaleResponse if a newer
   * request on the same channel started before this one resolved. */
  async latest<T>(channel: string, request: () => Promise<T>): Promise<T> {
    const token = (this.sequence.get(channel) ?? 0) + 1;
    this.sequence.set(channel, token);
    const result = await request();
    if (this.sequence.get(channel) !== token) {
      throw new StaleResponse(channel);
    }
    return result;
  }

  combinations(): Promise<CombinationsPayload> {
    return this.getJson("/api/combinations");
  }

  evaluationTable(options?: {
    subset?: string;
    corruptions?: string;
    perSeverity?: boolean;
  }): Promise<TablePayload> {
    return this.getJson("/api/evaluation-table", {
      subset: options?.subset,
      corruptions: options?.corruptions,
      per_severity: options?.perSeverity ? "true" : undefined,
    });
  }

  snapshot(combo: string, dataset: string, classLabel?: number): Promise<SnapshotPayload> {
    return this.getJson(`/api/snapshot/${combo}/${dataset}`, { class: classLabel });
  }

  trajectories(
    ref: string,
    cmp: string,
    classLabel: number,
    dataset?: string,
  ): Promise<TrajectoriesPayload> {
    return this.getJson("/api/trajectories", { ref, cmp, class: classLabel, dataset });
  }

  density(
    combo: string,
    dataset: string,
    metric: MetricName,
    classLabel?: number,
    bins?: number,
  ): Promise<DensityPayload> {
    return this.getJson("/api/density", { combo, dataset, metric, class: classLabel, bins });
  }

  correlations(combo: string): Promise<CorrelationsPayload> {
    return this.getJson("/api/correlations", { combo });
  }

  marginShift(ref: string, cmp: string): Promise<MarginShiftPayload> {
    return this.getJson("/api/margin-shift", { ref, cmp });
  }

  async createSubset(sampleIds: string[], note = ""): Promise<SubsetCreatedPayload> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/subsets`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ sample_ids: sampleIds, note }),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = ((await response.json()) as { detail?: string }).detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as SubsetCreatedPayload;
  }
}
