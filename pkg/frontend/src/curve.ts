// Purity-curve geometry: pure helpers that turn the service's per-round
// series into SVG path strings. Rendering attaches them to the DOM.

import type { CurvePoint } from "./wire.js";

export interface ChartLayout {
  width: number;
  height: number;
  padLeft: number;
  padBottom: number;
  padTop: number;
  padRight: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 420,
  height: 220,
  padLeft: 36,
  padBottom: 24,
  padTop: 10,
  padRight: 10,
};

export interface CurveGeometry {
  methodPath: string;
  manualPath: string;
  xTicks: { x: number; label: string }[];
  yTicks: { y: number; label: string }[];
}

function scales(rounds: number[], layout: ChartLayout) {
  const maxRound = Math.max(1, ...rounds);
  const x0 = layout.padLeft;
  const x1 = layout.width - layout.padRight;
  const y0 = layout.height - layout.padBottom;
  const y1 = layout.padTop;
  return {
    x: (round: number) => x0 + ((x1 - x0) * round) / maxRound,
    y: (purity: number) => y0 + (y1 - y0) * purity,
    maxRound,
  };
}

/** "M x,y L x,y ..." through the non-null points, rounded to 0.01 px. */
export function linePath(
  rounds: number[],
  values: (number | null)[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  const { x, y } = scales(rounds, layout);
  const parts: string[] = [];
  rounds.forEach((round, i) => {
    const value = values[i];
    if (value === null || value === undefined) {
      return;
    }
    const cmd = parts.length === 0 ? "M" : "L";
    parts.push(`${cmd}${(x(round)).toFixed(2)},${y(value).toFixed(2)}`);
  });
  return parts.join(" ");
}

export function curveGeometry(
  points: CurvePoint[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): CurveGeometry {
  const rounds = points.map((p) => p.round);
  const { x, y, maxRound } = scales(rounds, layout);
  const xTicks = [];
  for (let r = 0; r <= maxRound; r += 1) {
    xTicks.push({ x: x(r), label: String(r) });
  }
  const yTicks = [0, 0.25, 0.5, 0.75, 1.0].map((p) => ({ y: y(p), label: p.toFixed(2) }));
  return {
    methodPath: linePath(rounds, points.map((p) => p.method_purity), layout),
    manualPath: linePath(rounds, points.map((p) => p.manual_purity), layout),
    xTicks,
    yTicks,
  };
}
