/**
 * SVG renderers.  No chart library: the console draws a scatter of the
 * revealed rows with the current region overlaid, a budget gauge, and the
 * test-history table, all as plain DOM/SVG nodes.
 */

import type { LedgerView, RegionView, RevealedRow, TestRow } from "./api.js";
import {
  budgetGauge,
  chooseAxes,
  dataBounds,
  projectRows,
  regionOverlay,
  testTable,
  formatLevel,
  type RegionRect,
} from "./model.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K, attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, String(v));
  return el;
}

interface Scale {
  sx: (v: number) => number;
  sy: (v: number) => number;
}

function makeScale(bounds: RegionRect, w: number, h: number, pad: number): Scale {
  const dx = bounds.x1 - bounds.x0 || 1;
  const dy = bounds.y1 - bounds.y0 || 1;
  return {
    sx: (v) => pad + ((v - bounds.x0) / dx) * (w - 2 * pad),
    // SVG y grows downward; data y grows upward
    sy: (v) => h - pad - ((v - bounds.y0) / dy) * (h - 2 * pad),
  };
}

export function renderScatter(
  host: HTMLElement,
  rows: RevealedRow[],
  region: RegionView,
  d: number,
  featureNames: string[],
): void {
  host.textContent = "";
  const w = 460;
  const h = 360;
  const pad = 28;
  const svg = svgEl("svg", {
    viewBox: `0 0 ${w} ${h}`,
    width: "100%",
    role: "img",
    "aria-label": "revealed rows and current region",
  });

  const axes = chooseAxes(d);
  const points = projectRows(rows, axes, region);
  const bounds = dataBounds(points);
  const { sx, sy } = makeScale(bounds, w, h, pad);

  // frame
  svg.appendChild(svgEl("rect", {
    x: pad, y: pad, width: w - 2 * pad, height: h - 2 * pad,
    fill: "none", stroke: "#99a", "stroke-width": 1,
  }));

  // region overlay under the points
  const overlay = regionOverlay(region, axes, bounds, rows);
  if (overlay.kind === "rect" && overlay.rect) {
    const r = overlay.rect;
    svg.appendChild(svgEl("rect", {
      x: sx(r.x0),
      y: sy(r.y1),
      width: Math.max(0, sx(r.x1) - sx(r.x0)),
      height: Math.max(0, sy(r.y0) - sy(r.y1)),
      fill: "#4f7bd9", "fill-opacity": 0.15,
      stroke: "#4f7bd9", "stroke-dasharray": "4 3",
    }));
  } else if (overlay.kind === "slice" && overlay.cells) {
    for (const c of overlay.cells) {
      svg.appendChild(svgEl("rect", {
        x: sx(c.x0),
        y: sy(c.y1),
        width: Math.max(0, sx(c.x1) - sx(c.x0)),
        height: Math.max(0, sy(c.y0) - sy(c.y1)),
        fill: "#4f7bd9", "fill-opacity": 0.12,
      }));
    }
  }

  for (const p of points) {
    svg.appendChild(svgEl("circle", {
      cx: sx(p.px),
      cy: sy(p.py),
      r: 3.2,
      fill: p.y > 0 ? "#c2503c" : "#3a7d44",
      "fill-opacity": p.inRegion ? 0.95 : 0.35,
      stroke: p.inRegion ? "#222" : "none",
      "stroke-width": p.inRegion ? 0.6 : 0,
    }));
  }

  // axis labels
  const xName = featureNames[axes.x] ?? `x${axes.x}`;
  const yName = axes.y === null ? "reveal order" : featureNames[axes.y] ?? `x${axes.y}`;
  const xLab = svgEl("text", {
    x: w / 2, y: h - 6, "text-anchor": "middle", "font-size": 11, fill: "#444",
  });
  xLab.textContent = xName;
  svg.appendChild(xLab);
  const yLab = svgEl("text", {
    x: 10, y: h / 2, "font-size": 11, fill: "#444",
    transform: `rotate(-90 10 ${h / 2})`, "text-anchor": "middle",
  });
  yLab.textContent = yName;
  svg.appendChild(yLab);

  host.appendChild(svg);
  const caption = document.createElement("div");
  caption.className = "caption";
  caption.textContent = overlay.label;
  host.appendChild(caption);
}

export function renderGauge(host: HTMLElement, ledger: LedgerView): void {
  host.textContent = "";
  const g = budgetGauge(ledger);
  const w = 460;
  const h = 26;
  const svg = svgEl("svg", {
    viewBox: `0 0 ${w} ${h}`,
    width: "100%",
    role: "img",
    "aria-label": "error-budget gauge",
  });
  svg.appendChild(svgEl("rect", {
    x: 0, y: 6, width: w, height: 14, fill: "#e4e6ee", rx: 4,
  }));
  svg.appendChild(svgEl("rect", {
    x: 0, y: 6, width: w * g.spentFrac, height: 14, fill: "#c2503c", rx: 4,
  }));
  host.appendChild(svg);
  const label = document.createElement("div");
  label.className = "caption";
  label.textContent =
    `spent ${formatLevel(g.spent)} of ${formatLevel(g.total)}` +
    ` — ${formatLevel(g.remaining)} remaining`;
  host.appendChild(label);
}

export function renderTests(host: HTMLElement, tests: TestRow[]): void {
  host.textContent = "";
  if (tests.length === 0) {
    const p = document.createElement("p");
    p.className = "caption";
    p.textContent = "no tests yet";
    host.appendChild(p);
    return;
  }
  const table = document.createElement("table");
  const head = document.createElement("tr");
  for (const col of ["t", "n_t", "requested", "spent", "m_t", "verdict"]) {
    const th = document.createElement("th");
    th.textContent = col;
    head.appendChild(th);
  }
  table.appendChild(head);
  for (const row of testTable(tests)) {
    const tr = document.createElement("tr");
    tr.className = row.verdict;
    const cells = [
      String(row.t), String(row.nT), row.requested, row.spent, row.mT,
      row.verdict,
    ];
    for (const c of cells) {
      const td = document.createElement("td");
      td.textContent = c;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  host.appendChild(table);
}
