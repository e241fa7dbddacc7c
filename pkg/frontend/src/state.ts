// Board state: the server's cluster listing plus the user's pending edits.
// The board never computes constraints; it only assembles a feedback batch
// (keep marks, moves, freezes) for the service to interpret.

import type { ClustersResponse, FeedbackBatchWire, SampleSummary } from "./wire.js";
import { isEmptyBatch, normalizeBatch } from "./wire.js";

export interface PendingMove {
  sampleId: number;
  from: number;
  to: number;
}

export type EditOp =
  | { op: "keep"; sampleId: number }
  | { op: "unkeep"; sampleId: number }
  | { op: "move"; sampleId: number; to: number }
  | { op: "freeze"; cluster: number }
  | { op: "unfreeze"; cluster: number };

export class ClusterBoard {
  round = 0;
  k = 0;
  private homeCluster = new Map<number, number>(); // server-side placement
  private samples = new Map<number, SampleSummary>();
  private keptMarks = new Set<number>();
  private moves = new Map<number, PendingMove>();
  private frozen = new Set<number>();
  private conflicts = new Set<number>();

  /** Replace the board contents with a fresh server listing; pending edits
   * belong to the previous round and are dropped. */
  load(listing: ClustersResponse): void {
    this.round = listing.round;
    this.k = listing.k;
    this.homeCluster.clear();
    this.samples.clear();
    this.clearEdits();
    for (const cluster of listing.clusters) {
      for (const sample of cluster.samples) {
        this.homeCluster.set(sample.id, cluster.index);
        this.samples.set(sample.id, sample);
      }
    }
  }

  clearEdits(): void {
    this.keptMarks.clear();
    this.moves.clear();
    this.frozen.clear();
    this.conflicts.clear();
  }

  sample(sampleId: number): SampleSummary | undefined {
    return this.samples.get(sampleId);
  }

  /** The panel a card is displayed on: its pending target if moved, else
   * its server-side cluster. Every known sample has exactly one panel. */
  displayedCluster(sampleId: number): number {
    const move = this.moves.get(sampleId);
    if (move !== undefined) {
      return move.to;
    }
    const home = this.homeCluster.get(sampleId);
    if (home === undefined) {
      throw new Error(`unknown sample ${sampleId}`);
    }
    return home;
  }

  panel(cluster: number): SampleSummary[] {
    const out: SampleSummary[] = [];
    for (const [sampleId, sample] of this.samples) {
      if (this.displayedCluster(sampleId) === cluster) {
        out.push(sample);
      }
    }
    out.sort((a, b) => a.id - b.id);
    return out;
  }

  isKept(sampleId: number): boolean {
    return this.keptMarks.has(sampleId);
  }

  isMoved(sampleId: number): boolean {
    return this.moves.has(sampleId);
  }

  isFrozen(cluster: number): boolean {
    return this.frozen.has(cluster);
  }

  isConflicted(sampleId: number): boolean {
    return this.conflicts.has(sampleId);
  }

  markKept(sampleId: number): void {
    if (!this.homeCluster.has(sampleId)) {
      throw new Error(`unknown sample ${sampleId}`);
    }
    if (this.moves.has(sampleId)) {
      throw new Error(`sample ${sampleId} has a pending move; a card is either kept or moved`);
    }
    this.keptMarks.add(sampleId);
  }

  unmarkKept(sampleId: number): void {
    this.keptMarks.delete(sampleId);
  }

  toggleKept(sampleId: number): void {
    if (this.keptMarks.has(sampleId)) {
      this.unmarkKept(sampleId);
    } else {
      this.markKept(sampleId);
    }
  }

  /** Record a drag of a card to another panel. Dropping a card back on its
   * server-side cluster cancels the pending move. */
  moveSample(sampleId: number, target: number): void {
    const home = this.homeCluster.get(sampleId);
    if (home === undefined) {
      throw new Error(`unknown sample ${sampleId}`);
    }
    if (target < 0 || target >= this.k) {
      throw new Error(`cluster ${target} is not on the board`);
    }
    if (this.keptMarks.has(sampleId)) {
      throw new Error(`sample ${sampleId} is marked kept; unmark it before moving`);
    }
    if (target === home) {
      this.moves.delete(sampleId);
      return;
    }
    this.moves.set(sampleId, { sampleId, from: home, to: target });
  }

  toggleFrozen(cluster: number): void {
    if (cluster < 0 || cluster >= this.k) {
      throw new Error(`cluster ${cluster} is not on the board`);
    }
    if (this.frozen.has(cluster)) {
      this.frozen.delete(cluster);
    } else {
      this.frozen.add(cluster);
    }
  }

  /** Highlight the cards named in a contradiction response; edits stay. */
  flagConflicts(ids: number[]): void {
    this.conflicts = new Set(ids);
  }

  hasEdits(): boolean {
    return !isEmptyBatch(this.assembleBatch());
  }

  /** Serialize the pending edits into the service wire format. Every panel
   * appears under "kept" (possibly empty), keep marks are grouped by the
   * cluster the card currently sits on, moves keep their edit order. */
  assembleBatch(): FeedbackBatchWire {
    const kept: Record<string, number[]> = {};
    for (let cluster = 0; cluster < this.k; cluster += 1) {
      kept[String(cluster)] = [];
    }
    for (const sampleId of this.keptMarks) {
      kept[String(this.displayedCluster(sampleId))].push(sampleId);
    }
    const moved = [...this.moves.values()].map(
      (move) => [move.sampleId, move.from, move.to] as [number, number, number],
    );
    return normalizeBatch({ kept, moved, frozen: [...this.frozen] });
  }

  /** Replay a recorded edit script (used by tests and by the round-trip
   * fixture shared with the service tests). */
  applyScript(script: EditOp[]): void {
    for (const step of script) {
      switch (step.op) {
        case "keep":
          this.markKept(step.sampleId);
          break;
        case "unkeep":
          this.unmarkKept(step.sampleId);
          break;
        case "move":
          this.moveSample(step.sampleId, step.to);
          break;
        case "freeze":
          if (!this.frozen.has(step.cluster)) {
            this.toggleFrozen(step.cluster);
          }
          break;
        case "unfreeze":
          if (this.frozen.has(step.cluster)) {
            this.toggleFrozen(step.cluster);
          }
          break;
      }
    }
  }
}
