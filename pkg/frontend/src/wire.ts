// Wire types shared with the clustering service. The feedback batch format
// is the canonical one: {"kept": {"0": [ids]}, "moved": [[id, src, dst]],
// "frozen": [ids]}.

export interface FeedbackBatchWire {
  kept: Record<string, number[]>;
  moved: [number, number, number][];
  frozen: number[];
}

export interface LatentWindow {
  t0: number;
  t1: number;
  swapped: boolean;
}

export type Polyline = [number, number, number][]; // [t, x, y]

export interface SampleSummary {
  id: number;
  latent_tag: string;
  latent_window?: LatentWindow | null;
  label?: string | null;
  polyline?: Record<string, Polyline>;
}

export interface ClusterInfo {
  index: number;
  size: number;
  samples: SampleSummary[];
}

export interface ClustersResponse {
  round: number;
  k: number;
  clusters: ClusterInfo[];
}

export interface StatusResponse {
  id: string;
  status: "idle" | "solving" | "error";
  error?: string;
  round?: number;
  n_samples?: number;
  last_round?: {
    round: number;
    objective: number;
    method_purity: number | null;
    converged: boolean;
  };
}

export interface FeedbackAccepted {
  accepted: true;
  constraints: { must_groups: number; cannot_pairs: number };
}

export interface FeedbackRejected {
  accepted: false;
  error: string;
  ids: number[];
}

export interface CurvePoint {
  round: number;
  method_purity: number | null;
  manual_purity: number | null;
  moved_count: number;
  constraint_must: number;
  constraint_cannot: number;
}

export interface CurveResponse {
  rounds: CurvePoint[];
}

export interface IterateResponse {
  status: "idle" | "solving";
  round: number;
  objective?: number;
  method_purity?: number | null;
  converged?: boolean;
}

/** Normalize a batch for transmission: cluster keys as strings, id lists
 * sorted ascending, frozen sorted. Move order is preserved (it records the
 * user's edit sequence). */
export function normalizeBatch(batch: FeedbackBatchWire): FeedbackBatchWire {
  const kept: Record<string, number[]> = {};
  for (const key of Object.keys(batch.kept).sort((a, b) => Number(a) - Number(b))) {
    kept[key] = [...batch.kept[key]].sort((a, b) => a - b);
  }
  return {
    kept,
    moved: batch.moved.map((m) => [...m] as [number, number, number]),
    frozen: [...batch.frozen].sort((a, b) => a - b),
  };
}

export function isEmptyBatch(batch: FeedbackBatchWire): boolean {
  const keptCount = Object.values(batch.kept).reduce((n, ids) => n + ids.length, 0);
  return keptCount === 0 && batch.moved.length === 0 && batch.frozen.length === 0;
}
