/** Canvas renderers: density-matrix bar grids and metric traces.
 *
 * Bars use a fixed height scale of +/-0.5 so separable and entangled
 * frames are visually comparable; values outside the scale clip.
 * Carried-forward frames render greyed.
 */

import { rhoIm, rhoRe } from "./schema.js";
import { TraceRing } from "./ring.js";
import { WireFrame } from "./types.js";

export const Z_SCALE = 0.5;
const LABELS = ["HH", "HV", "VH", "VV"];
const POSITIVE = "#4f8fd8";
const NEGATIVE = "#d85f5f";
const POSITIVE_GREY = "#8a8f98";
const NEGATIVE_GREY = "#6b6f76";

export function isCarriedForward(frame: WireFrame): boolean {
  return frame.flags.includes("carried_forward");
}

export function renderDensityGrid(
  ctx: CanvasRenderingContext2D,
  frame: WireFrame,
  part: "re" | "im",
): void {
  const { width, height } = ctx.canvas;
  const greyed = isCarriedForward(frame);
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#14161a";
  ctx.fillRect(0, 0, width, height);

  const marginLeft = 34;
  const marginTop = 18;
  const cellW = (width - marginLeft - 6) / 4;
  const cellH = (height - marginTop - 24) / 4;
  const barW = cellW * 0.58;

  ctx.font = "11px system-ui, sans-serif";
  ctx.fillStyle = "#9aa3ad";
  ctx.textAlign = "center";
  for (let j = 0; j < 4; j++) {
    ctx.fillText(LABELS[j] ?? "", marginLeft + (j + 0.5) * cellW, height - 8);
  }
  ctx.textAlign = "right";
  for (let i = 0; i < 4; i++) {
    ctx.fillText(LABELS[i] ?? "", marginLeft - 6, marginTop + (i + 0.62) * cellH);
  }

  for (let i = 0; i < 4; i++) {
    for (let j = 0; j < 4; j++) {
      const value = part === "re" ? rhoRe(frame.rho, i, j) : rhoIm(frame.rho, i, j);
      const x = marginLeft + j * cellW + (cellW - barW) / 2;
      const zero = marginTop + (i + 0.5) * cellH;
      const extent = Math.max(-1, Math.min(1, value / Z_SCALE)) * (cellH * 0.48);
      ctx.strokeStyle = "#2a2e35";
      ctx.strokeRect(marginLeft + j * cellW, marginTop + i * cellH, cellW, cellH);
      ctx.fillStyle =
        value >= 0 ? (greyed ? POSITIVE_GREY : POSITIVE) : (greyed ? NEGATIVE_GREY : NEGATIVE);
      if (extent >= 0) {
        ctx.fillRect(x, zero - extent, barW, Math.max(extent, 0.5));
      } else {
        ctx.fillRect(x, zero, barW, -extent);
      }
      ctx.strokeStyle = "#3a3f47";
      ctx.beginPath();
      ctx.moveTo(marginLeft + j * cellW, zero);
      ctx.lineTo(marginLeft + (j + 1) * cellW, zero);
      ctx.stroke();
    }
  }
}

export function renderTrace(
  ctx: CanvasRenderingContext2D,
  ring: TraceRing,
  color: string,
  label: string,
): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#14161a";
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = "#2a2e35";
  for (const level of [0, 0.5, 1]) {
    const y = height - 12 - level * (height - 24);
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(width, y);
    ctx.stroke();
  }
  const values = ring.values();
  const step = width / Math.max(ring.capacity - 1, 1);
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  let pen = false;
  values.forEach((value, index) => {
    if (value === null) {
      pen = false; // gap from a disconnect
      return;
    }
    const x = index * step;
    const y = height - 12 - Math.max(0, Math.min(1, value)) * (height - 24);
    if (pen) {
      ctx.lineTo(x, y);
    } else {
      ctx.moveTo(x, y);
      pen = true;
    }
  });
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = color;
  ctx.font = "11px system-ui, sans-serif";
  ctx.textAlign = "left";
  const last = ring.last();
  ctx.fillText(`${label} ${last === null ? "--" : last.toFixed(3)}`, 6, 14);
}
