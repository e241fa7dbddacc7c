// App bootstrap: session form, board + curve wiring, submit-and-iterate
// flow with polling. One in-flight mutation at a time.

import { ApiClient, ApiError } from "./api.js";
import { renderBoard, renderCurve } from "./render.js";
import { ClusterBoard } from "./state.js";
import { isEmptyBatch } from "./wire.js";

const DEMO_CONFIG = {
  data: {
    synthetic: {
      n_classes: 3,
      samples_per_class: 10,
      window_frames: 20,
      stride: 10,
      noise_xy: 0.3,
      noise_rel: 0.1,
    },
  },
  variant_spec: {
    window_frames: 20,
    stride: 10,
    n_velocity_components: 4,
    n_distance_bins: 4,
  },
  solve_spec: { lambda: 10.0 },
  k: 3,
  m: 3,
  c: 2,
  max_rounds: 8,
  seeds: [0],
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

class App {
  private readonly api = new ApiClient("");
  private readonly board = new ClusterBoard();
  private sessionId: string | null = null;
  private busy = false;

  start(): void {
    el<HTMLTextAreaElement>("config").value = JSON.stringify(DEMO_CONFIG, null, 2);
    el<HTMLButtonElement>("create").addEventListener("click", () => {
      void this.createSession();
    });
    el<HTMLButtonElement>("submit").addEventListener("click", () => {
      void this.submitAndIterate();
    });
    el<HTMLButtonElement>("discard").addEventListener("click", () => {
      this.board.clearEdits();
      this.paint();
    });
    this.paint();
  }

  private setStatus(text: string, isError = false): void {
    const node = el<HTMLElement>("status");
    node.textContent = text;
    node.classList.toggle("error", isError);
  }

  private paint(): void {
    renderBoard(el("board"), this.board, {
      onToggleKept: (sampleId) => {
        try {
          this.board.toggleKept(sampleId);
        } catch (error) {
          this.setStatus(String(error), true);
        }
        this.paint();
      },
      onMove: (sampleId, target) => {
        try {
          this.board.moveSample(sampleId, target);
        } catch (error) {
          this.setStatus(String(error), true);
        }
        this.paint();
      },
      onToggleFrozen: (cluster) => {
        this.board.toggleFrozen(cluster);
        this.paint();
      },
      onInspect: (sampleId) => void this.inspect(sampleId),
    });
    const submit = el<HTMLButtonElement>("submit");
    submit.disabled = this.busy || this.sessionId === null || !this.board.hasEdits();
    el<HTMLButtonElement>("discard").disabled = !this.board.hasEdits();
    el<HTMLElement>("round").textContent =
      this.sessionId === null ? "" : `round ${this.board.round}`;
  }

  private async createSession(): Promise<void> {
    if (this.busy) {
      return;
    }
    this.busy = true;
    try {
      const config = JSON.parse(el<HTMLTextAreaElement>("config").value);
      this.setStatus("creating session...");
      const { id } = await this.api.createSession(config);
      this.sessionId = id;
      await this.api.pollUntilIdle(id, {
        onTick: (status) => this.setStatus(`session ${id}: ${status.status}`),
      });
      await this.refresh();
      this.setStatus(`session ${id}: round 0 ready`);
    } catch (error) {
      this.setStatus(`session failed: ${String(error)}`, true);
    } finally {
      this.busy = false;
      this.paint();
    }
  }

  private async refresh(): Promise<void> {
    if (!this.sessionId) {
      return;
    }
    this.board.load(await this.api.clusters(this.sessionId));
    try {
      const curve = await this.api.curve(this.sessionId);
      renderCurve(el("chart"), curve.rounds);
    } catch (error) {
      if (!(error instanceof ApiError && error.status === 400)) {
        throw error; // 400 = no labels, curve simply unavailable
      }
      renderCurve(el("chart"), []);
    }
    this.paint();
  }

  private async submitAndIterate(): Promise<void> {
    if (!this.sessionId || this.busy) {
      return;
    }
    const batch = this.board.assembleBatch();
    if (isEmptyBatch(batch)) {
      return;
    }
    this.busy = true;
    this.paint();
    try {
      const outcome = await this.api.postFeedback(this.sessionId, batch);
      if (!outcome.accepted) {
        this.board.flagConflicts(outcome.ids);
        this.setStatus(`rejected: ${outcome.error}`, true);
        return;
      }
      this.setStatus(
        `accepted (${outcome.constraints.must_groups} groups, ` +
          `${outcome.constraints.cannot_pairs} cannot pairs); re-clustering...`,
      );
      await this.api.iterate(this.sessionId);
      await this.api.pollUntilIdle(this.sessionId, {
        onTick: (status) => this.setStatus(`solving... (${status.status})`),
      });
      await this.refresh();
      this.setStatus(`round ${this.board.round} ready`);
    } catch (error) {
      this.setStatus(String(error), true);
    } finally {
      this.busy = false;
      this.paint();
    }
  }

  private async inspect(sampleId: number): Promise<void> {
    if (!this.sessionId) {
      return;
    }
    const detail = await this.api.sample(this.sessionId, sampleId);
    const lines = [
      `sample #${detail.id}`,
      `cluster ${detail.cluster}`,
      `latent ${detail.latent_tag}`,
    ];
    if (detail.label != null) {
      lines.push(`label ${detail.label}`);
    }
    this.setStatus(lines.join(" | "));
  }
}

new App().start();
