// DOM rendering for the cluster board and the purity chart. All state
// changes go through the ClusterBoard; this module only draws and wires
// browser events to the handler callbacks.

import { curveGeometry } from "./curve.js";
import type { ClusterBoard } from "./state.js";
import type { CurvePoint, Polyline, SampleSummary } from "./wire.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface BoardHandlers {
  onToggleKept: (sampleId: number) => void;
  onMove: (sampleId: number, target: number) => void;
  onToggleFrozen: (cluster: number) => void;
  onInspect: (sampleId: number) => void;
}

function bounds(lines: Polyline[]): { x0: number; y0: number; x1: number; y1: number } {
  let x0 = Infinity, y0 = Infinity, x1 = -Infinity, y1 = -Infinity;
  for (const line of lines) {
    for (const [, x, y] of line) {
      x0 = Math.min(x0, x); x1 = Math.max(x1, x);
      y0 = Math.min(y0, y); y1 = Math.max(y1, y);
    }
  }
  if (!isFinite(x0)) {
    return { x0: 0, y0: 0, x1: 1, y1: 1 };
  }
  const padX = Math.max(1e-6, (x1 - x0) * 0.08);
  const padY = Math.max(1e-6, (y1 - y0) * 0.08);
  return { x0: x0 - padX, y0: y0 - padY, x1: x1 + padX, y1: y1 + padY };
}

function polylineSegments(
  svg: SVGSVGElement,
  line: Polyline,
  hue: number,
  width: number,
  highlight?: { t0: number; t1: number },
): void {
  const tMin = line[0][0];
  const tMax = line[line.length - 1][0];
  const span = Math.max(1e-9, tMax - tMin);
  for (let i = 1; i < line.length; i += 1) {
    const [t, x, y] = line[i];
    const [, px, py] = line[i - 1];
    const seg = document.createElementNS(SVG_NS, "line");
    seg.setAttribute("x1", String(px));
    seg.setAttribute("y1", String(py));
    seg.setAttribute("x2", String(x));
    seg.setAttribute("y2", String(y));
    const inWindow = highlight !== undefined && t >= highlight.t0 && t <= highlight.t1;
    const lightness = 70 - 40 * ((t - tMin) / span); // time runs dark
    seg.setAttribute("stroke", `hsl(${hue}, 80%, ${lightness}%)`);
    seg.setAttribute("stroke-width", String(inWindow ? width * 2.5 : width));
    seg.setAttribute("stroke-linecap", "round");
    svg.appendChild(seg);
  }
}

export function sketchSvg(sample: SampleSummary): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.classList.add("sketch");
  const polyline = sample.polyline ?? {};
  const lines = Object.values(polyline).filter((line) => line.length > 0);
  const box = bounds(lines);
  svg.setAttribute(
    "viewBox",
    `${box.x0} ${box.y0} ${box.x1 - box.x0} ${box.y1 - box.y0}`,
  );
  svg.setAttribute("preserveAspectRatio", "xMidYMid meet");
  const scale = Math.max(box.x1 - box.x0, box.y1 - box.y0) / 60;
  const window = sample.latent_window ?? undefined;
  if (polyline.nearest_vehicle) {
    polylineSegments(svg, polyline.nearest_vehicle, 28, scale);
  }
  if (polyline.nearest_person) {
    polylineSegments(svg, polyline.nearest_person, 180, scale);
  }
  if (polyline.focal) {
    polylineSegments(svg, polyline.focal, 258, scale * 1.4,
      window ? { t0: window.t0, t1: window.t1 } : undefined);
  }
  return svg;
}

function sampleCard(
  board: ClusterBoard,
  sample: SampleSummary,
  handlers: BoardHandlers,
): HTMLElement {
  const card = document.createElement("div");
  card.className = "card";
  card.dataset.sampleId = String(sample.id);
  card.draggable = true;
  if (board.isKept(sample.id)) card.classList.add("kept");
  if (board.isMoved(sample.id)) card.classList.add("moved");
  if (board.isConflicted(sample.id)) card.classList.add("conflict");

  card.appendChild(sketchSvg(sample));

  const meta = document.createElement("div");
  meta.className = "meta";
  const title = document.createElement("span");
  title.textContent = `#${sample.id}`;
  meta.appendChild(title);
  if (sample.label != null) {
    const label = document.createElement("span");
    label.className = "truth";
    label.textContent = String(sample.label);
    meta.appendChild(label);
  }
  const keep = document.createElement("button");
  keep.className = "keep";
  keep.textContent = board.isKept(sample.id) ? "kept" : "keep";
  keep.title = "mark as a correct example of this cluster (must-link)";
  keep.addEventListener("click", (event) => {
    event.stopPropagation();
    handlers.onToggleKept(sample.id);
  });
  meta.appendChild(keep);
  card.appendChild(meta);

  card.addEventListener("click", () => handlers.onInspect(sample.id));
  card.addEventListener("dragstart", (event) => {
    event.dataTransfer?.setData("text/sample-id", String(sample.id));
    event.dataTransfer!.effectAllowed = "move";
  });
  return card;
}

export function renderBoard(
  root: HTMLElement,
  board: ClusterBoard,
  handlers: BoardHandlers,
): void {
  root.replaceChildren();
  for (let cluster = 0; cluster < board.k; cluster += 1) {
    const panel = document.createElement("section");
    panel.className = "panel";
    panel.dataset.cluster = String(cluster);
    if (board.isFrozen(cluster)) panel.classList.add("frozen");

    const header = document.createElement("header");
    const name = document.createElement("h3");
    const members = board.panel(cluster);
    name.textContent = `cluster ${cluster} (${members.length})`;
    header.appendChild(name);
    const freeze = document.createElement("button");
    freeze.textContent = board.isFrozen(cluster) ? "frozen" : "freeze";
    freeze.title = "declare this cluster pure; it will not be broken up";
    freeze.addEventListener("click", () => handlers.onToggleFrozen(cluster));
    header.appendChild(freeze);
    panel.appendChild(header);

    const drop = document.createElement("div");
    drop.className = "cards";
    panel.addEventListener("dragover", (event) => {
      event.preventDefault();
      panel.classList.add("droppable");
    });
    panel.addEventListener("dragleave", () => panel.classList.remove("droppable"));
    panel.addEventListener("drop", (event) => {
      event.preventDefault();
      panel.classList.remove("droppable");
      const raw = event.dataTransfer?.getData("text/sample-id");
      if (raw) {
        handlers.onMove(Number(raw), cluster);
      }
    });
    for (const sample of members) {
      drop.appendChild(sampleCard(board, sample, handlers));
    }
    panel.appendChild(drop);
    root.appendChild(panel);
  }
}

export function renderCurve(root: HTMLElement, points: CurvePoint[]): void {
  root.replaceChildren();
  if (points.length === 0) {
    return;
  }
  const geometry = curveGeometry(points);
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", "0 0 420 220");
  svg.classList.add("curve");

  for (const tick of geometry.yTicks) {
    const grid = document.createElementNS(SVG_NS, "line");
    grid.setAttribute("x1", "36");
    grid.setAttribute("x2", "410");
    grid.setAttribute("y1", String(tick.y));
    grid.setAttribute("y2", String(tick.y));
    grid.setAttribute("class", "grid");
    svg.appendChild(grid);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", "2");
    label.setAttribute("y", String(tick.y + 4));
    label.setAttribute("class", "tick");
    label.textContent = tick.label;
    svg.appendChild(label);
  }
  for (const tick of geometry.xTicks) {
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(tick.x - 3));
    label.setAttribute("y", "214");
    label.setAttribute("class", "tick");
    label.textContent = tick.label;
    svg.appendChild(label);
  }

  const manual = document.createElementNS(SVG_NS, "path");
  manual.setAttribute("d", geometry.manualPath);
  manual.setAttribute("class", "manual");
  svg.appendChild(manual);
  const method = document.createElementNS(SVG_NS, "path");
  method.setAttribute("d", geometry.methodPath);
  method.setAttribute("class", "method");
  svg.appendChild(method);
  root.appendChild(svg);
}
