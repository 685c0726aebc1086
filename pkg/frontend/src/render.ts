/**
 * Deterministic SVG line chart: same series and spec always produce the
 * same bytes (fixed canvas, fixed palette, fixed number formatting, no
 * timestamps).
 */

import { PlotSpec } from "./plotspec";
import { Series } from "./series";

const WIDTH = 760;
const HEIGHT = 480;
const MARGIN = { left: 64, right: 160, top: 40, bottom: 48 };

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f",
];

function fmt(v: number): string {
  return (Math.round(v * 100) / 100).toFixed(2);
}

function tickLabel(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 10000 || a < 0.001) return v.toExponential(1);
  return String(Math.round(v * 1000) / 1000);
}

interface Scale {
  (v: number): number;
  ticks: number[];
}

function linearScale(lo: number, hi: number, out0: number, out1: number): Scale {
  if (hi <= lo) hi = lo + 1;
  const f = ((v: number) => out0 + ((v - lo) / (hi - lo)) * (out1 - out0)) as Scale;
  const step = niceStep((hi - lo) / 5);
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12; t += step) {
    ticks.push(Math.round(t / step) * step);
  }
  f.ticks = ticks;
  return f;
}

function logScale(lo: number, hi: number, out0: number, out1: number): Scale {
  const llo = Math.log10(Math.max(lo, 1e-12));
  const lhi = Math.log10(Math.max(hi, lo * 10));
  const f = ((v: number) =>
    out0 + ((Math.log10(Math.max(v, 1e-12)) - llo) / (lhi - llo)) * (out1 - out0)) as Scale;
  const ticks: number[] = [];
  for (let p = Math.ceil(llo); p <= Math.floor(lhi); p++) {
    ticks.push(Math.pow(10, p));
  }
  f.ticks = ticks.length >= 2 ? ticks : [lo, hi];
  return f;
}

function niceStep(rough: number): number {
  const mag = Math.pow(10, Math.floor(Math.log10(Math.max(rough, 1e-12))));
  const r = rough / mag;
  const unit = r >= 5 ? 10 : r >= 2 ? 5 : r >= 1 ? 2 : 1;
  return unit * mag;
}

export function renderSvg(series: Series[], spec: PlotSpec): string {
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const ys = series.flatMap((s) => s.points.map((p) => p.mean));
  const refs = spec.referenceLines ?? [];
  const xLo = Math.min(...xs, ...(refs.length ? refs : xs));
  const xHi = Math.max(...xs, ...(refs.length ? refs : xs));
  let yLo = spec.logY ? Math.max(Math.min(...ys), 1e-6) : 0;
  const yHi = Math.max(...ys) * 1.05 || 1;

  const px0 = MARGIN.left;
  const px1 = WIDTH - MARGIN.right;
  const py0 = HEIGHT - MARGIN.bottom;
  const py1 = MARGIN.top;
  const sx = linearScale(xLo, xHi, px0, px1);
  const sy = spec.logY
    ? logScale(yLo, yHi, py0, py1)
    : linearScale(yLo, yHi, py0, py1);

  const out: string[] = [];
  out.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`,
  );
  out.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  if (spec.title) {
    out.push(
      `<text x="${(px0 + px1) / 2}" y="22" text-anchor="middle" font-size="15">${escapeXml(spec.title)}</text>`,
    );
  }

  // axes and grid
  for (const t of sx.ticks) {
    const x = fmt(sx(t));
    out.push(
      `<line x1="${x}" y1="${py0}" x2="${x}" y2="${py1}" stroke="#eeeeee" stroke-width="1"/>`,
    );
    out.push(
      `<text x="${x}" y="${py0 + 18}" text-anchor="middle" font-size="11">${tickLabel(t)}</text>`,
    );
  }
  for (const t of sy.ticks) {
    const y = fmt(sy(t));
    out.push(
      `<line x1="${px0}" y1="${y}" x2="${px1}" y2="${y}" stroke="#eeeeee" stroke-width="1"/>`,
    );
    out.push(
      `<text x="${px0 - 6}" y="${y}" text-anchor="end" dominant-baseline="middle" font-size="11">${tickLabel(t)}</text>`,
    );
  }
  out.push(
    `<line x1="${px0}" y1="${py0}" x2="${px1}" y2="${py0}" stroke="black" stroke-width="1"/>`,
  );
  out.push(
    `<line x1="${px0}" y1="${py0}" x2="${px0}" y2="${py1}" stroke="black" stroke-width="1"/>`,
  );
  if (spec.xLabel) {
    out.push(
      `<text x="${(px0 + px1) / 2}" y="${HEIGHT - 10}" text-anchor="middle" font-size="12">${escapeXml(spec.xLabel)}</text>`,
    );
  }
  if (spec.yLabel) {
    out.push(
      `<text x="16" y="${(py0 + py1) / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 ${(py0 + py1) / 2})">${escapeXml(spec.yLabel)}</text>`,
    );
  }

  // analytic reference lines
  for (const r of refs) {
    const x = fmt(sx(r));
    out.push(
      `<line class="reference" x1="${x}" y1="${py0}" x2="${x}" y2="${py1}" stroke="#555555" stroke-width="1" stroke-dasharray="5,4"/>`,
    );
    out.push(
      `<text x="${x}" y="${py1 - 4}" text-anchor="middle" font-size="10" fill="#555555">${tickLabel(r)}</text>`,
    );
  }

  // series lines, error bars, legend
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = s.points
      .map((p) => `${fmt(sx(p.x))},${fmt(sy(clampY(p.mean, yLo)))}`)
      .join(" ");
    out.push(
      `<polyline class="series" points="${pts}" fill="none" stroke="${color}" stroke-width="1.8"/>`,
    );
    for (const p of s.points) {
      const cx = fmt(sx(p.x));
      out.push(
        `<circle cx="${cx}" cy="${fmt(sy(clampY(p.mean, yLo)))}" r="2.6" fill="${color}"/>`,
      );
      if (p.stderr > 0) {
        const yA = fmt(sy(clampY(p.mean - p.stderr, yLo)));
        const yB = fmt(sy(clampY(p.mean + p.stderr, yLo)));
        out.push(
          `<line x1="${cx}" y1="${yA}" x2="${cx}" y2="${yB}" stroke="${color}" stroke-width="1.2"/>`,
        );
      }
    }
    const ly = MARGIN.top + 16 * i;
    out.push(
      `<line x1="${px1 + 10}" y1="${ly}" x2="${px1 + 34}" y2="${ly}" stroke="${color}" stroke-width="2"/>`,
    );
    out.push(
      `<text x="${px1 + 40}" y="${ly + 4}" font-size="11">${escapeXml(s.label)}</text>`,
    );
  });

  out.push("</svg>");
  return out.join("\n") + "\n";
}

function clampY(v: number, lo: number): number {
  return v < lo ? lo : v;
}

function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}
