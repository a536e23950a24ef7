/**
 * Pure view-model helpers: everything here is DOM-free and synchronous so
 * it can be unit-tested directly.  The functions translate server state
 * (budget ledger, region geometry, test history) into what the console
 * renders and which controls it enables.
 */

import type {
  ConstraintView,
  IntervalView,
  LedgerView,
  RegionView,
  RevealedRow,
  ScorerView,
  TestRow,
  WireNumber,
} from "./api.js";
import { num, numOrNull } from "./api.js";

// ---------------------------------------------------------------------------
// Budget / test form state

export interface TestSubmitState {
  disabled: boolean;
  tooltip: string;
}

/**
 * Decide whether the "run test" button is live for a requested level.
 *
 * The server grants at most what remains in the budget, so a request above
 * the remainder is legal on the wire — but the console keeps the analyst
 * honest by refusing to submit one, and says how much is actually left.
 */
export function testSubmitState(
  requested: number, remaining: number,
): TestSubmitState {
  if (!Number.isFinite(requested) || requested <= 0) {
    return { disabled: true, tooltip: "enter a level in (0, 1)" };
  }
  if (requested >= 1) {
    return { disabled: true, tooltip: "level must be below 1" };
  }
  if (remaining <= 0) {
    return { disabled: true, tooltip: "budget exhausted: 0 remaining" };
  }
  if (requested > remaining) {
    return {
      disabled: true,
      tooltip: `exceeds remaining budget ${formatLevel(remaining)}`,
    };
  }
  return { disabled: false, tooltip: `spends up to ${formatLevel(requested)}` };
}

/** Budget gauge geometry: fractions of the total, each in [0, 1]. */
export interface BudgetGauge {
  spentFrac: number;
  remainingFrac: number;
  spent: number;
  remaining: number;
  total: number;
}

export function budgetGauge(ledger: LedgerView): BudgetGauge {
  const total = ledger.alpha_total;
  const spent = ledger.spent_aggregate;
  const remaining = ledger.remaining;
  const safe = (x: number) => (total > 0 ? Math.min(1, Math.max(0, x / total)) : 0);
  return {
    spentFrac: safe(spent),
    remainingFrac: safe(remaining),
    spent,
    remaining,
    total,
  };
}

export function formatLevel(x: number): string {
  if (!Number.isFinite(x)) return String(x);
  if (x === 0) return "0";
  if (x >= 0.0001) return x.toFixed(4).replace(/0+$/, "").replace(/\.$/, "");
  return x.toExponential(2);
}

// ---------------------------------------------------------------------------
// Axis projection for the scatter plot

export interface AxisChoice {
  x: number;
  y: number | null; // null: single-feature dataset, plot index jitter on y
}

/** Pick plot axes: first two features when available, else feature-0 vs rank. */
export function chooseAxes(d: number): AxisChoice {
  if (d >= 2) return { x: 0, y: 1 };
  return { x: 0, y: null };
}

export interface PlotPoint {
  index: number;
  px: number;
  py: number;
  y: number;
  inRegion: boolean;
}

export function projectRows(
  rows: RevealedRow[], axes: AxisChoice, region: RegionView,
): PlotPoint[] {
  return rows.map((row, i) => ({
    index: row.index,
    px: row.x[axes.x] ?? 0,
    py: axes.y === null ? i : row.x[axes.y] ?? 0,
    y: row.y,
    inRegion: regionContains(region, row.x),
  }));
}

// ---------------------------------------------------------------------------
// Region geometry

interface Interval {
  lo: number;
  hi: number;
  loStrict: boolean;
  hiStrict: boolean;
}

function reviveInterval(iv: IntervalView): Interval {
  return {
    lo: num(iv.lo),
    hi: num(iv.hi),
    loStrict: iv.lo_strict,
    hiStrict: iv.hi_strict,
  };
}

function intervalContains(iv: Interval, v: number): boolean {
  if (iv.loStrict ? v <= iv.lo : v < iv.lo) return false;
  if (iv.hiStrict ? v >= iv.hi : v > iv.hi) return false;
  return true;
}

/** Evaluate an affine/coordinate/constant scorer at a point. */
export function scoreAt(scorer: ScorerView, x: number[]): number {
  switch (scorer.family) {
    case "coordinate":
      return x[scorer.dim ?? 0] ?? NaN;
    case "constant":
      return num(scorer.value ?? "nan");
    default: {
      // affine families serialize coef + intercept
      const coef = scorer.coef;
      if (!coef) return NaN;
      let s = numOrNull(scorer.intercept ?? null) ?? 0;
      for (let j = 0; j < coef.length; j++) {
        s += num(coef[j] as WireNumber) * (x[j] ?? 0);
      }
      return s;
    }
  }
}

function constraintSatisfied(c: ConstraintView, x: number[]): boolean {
  if (c.kind === "aux") {
    // aux-rank constraints depend on the masked ordering, which the
    // console cannot see; treat them as non-binding for display
    return true;
  }
  if (!c.scorer) return true;
  const s = scoreAt(c.scorer, x);
  const thr = num(c.threshold);
  return s >= thr;
}

/** Point-membership test of a revealed point against the current region. */
export function regionContains(region: RegionView, x: number[]): boolean {
  if (region.hyperrect) {
    for (const [dim, iv] of Object.entries(region.hyperrect)) {
      const j = Number(dim);
      if (!intervalContains(reviveInterval(iv), x[j] ?? 0)) return false;
    }
    return true;
  }
  return region.constraints.every((c) => constraintSatisfied(c, x));
}

export interface RegionRect {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

/**
 * Reduce the region to a drawable overlay on the chosen axes.
 *
 * A hyperrectangular region projects exactly: its interval on each plotted
 * axis, clipped to the data range.  A general score region is summarised as
 * the set of grid cells whose centre lies inside the score slice taken at
 * the revealed-data medians of the unplotted coordinates — honest about
 * being a slice, hence the label.
 */
export interface RegionOverlay {
  kind: "rect" | "slice" | "none";
  rect?: RegionRect;
  cells?: RegionRect[];
  label: string;
}

export function medians(rows: RevealedRow[], d: number): number[] {
  const out: number[] = [];
  for (let j = 0; j < d; j++) {
    const vals = rows.map((r) => r.x[j] ?? 0).sort((a, b) => a - b);
    if (vals.length === 0) {
      out.push(0);
    } else {
      const mid = vals.length >> 1;
      const lo = vals[vals.length % 2 === 0 ? mid - 1 : mid] ?? 0;
      const hi = vals[mid] ?? 0;
      out.push((lo + hi) / 2);
    }
  }
  return out;
}

export function regionOverlay(
  region: RegionView,
  axes: AxisChoice,
  bounds: RegionRect,
  rows: RevealedRow[],
  gridN = 24,
): RegionOverlay {
  if (region.hyperrect) {
    const ivx = region.hyperrect[String(axes.x)];
    const xi: Interval = ivx
      ? reviveInterval(ivx)
      : { lo: -Infinity, hi: Infinity, loStrict: false, hiStrict: false };
    let y0 = bounds.y0;
    let y1 = bounds.y1;
    if (axes.y !== null) {
      const ivy = region.hyperrect[String(axes.y)];
      if (ivy) {
        const yi = reviveInterval(ivy);
        y0 = Math.max(bounds.y0, yi.lo);
        y1 = Math.min(bounds.y1, yi.hi);
      }
    }
    const rect: RegionRect = {
      x0: Math.max(bounds.x0, xi.lo),
      x1: Math.min(bounds.x1, xi.hi),
      y0,
      y1,
    };
    if (rect.x0 > rect.x1 || rect.y0 > rect.y1) {
      return { kind: "none", label: "region empty on these axes" };
    }
    return { kind: "rect", rect, label: "region (exact projection)" };
  }

  const score = region.constraints.filter((c) => c.kind === "score" && c.scorer);
  if (score.length === 0) {
    return { kind: "none", label: "no score constraints yet" };
  }
  const med = medians(rows, region.d);
  const cells: RegionRect[] = [];
  const dx = (bounds.x1 - bounds.x0) / gridN;
  const dy = (bounds.y1 - bounds.y0) / gridN;
  for (let i = 0; i < gridN; i++) {
    for (let j = 0; j < gridN; j++) {
      const cx = bounds.x0 + (i + 0.5) * dx;
      const cy = bounds.y0 + (j + 0.5) * dy;
      const pt = med.slice();
      pt[axes.x] = cx;
      if (axes.y !== null) pt[axes.y] = cy;
      if (regionContains(region, pt)) {
        cells.push({
          x0: bounds.x0 + i * dx,
          x1: bounds.x0 + (i + 1) * dx,
          y0: bounds.y0 + j * dy,
          y1: bounds.y0 + (j + 1) * dy,
        });
      }
    }
  }
  const label =
    region.d <= 2 || axes.y === null
      ? "region (score level set)"
      : "region slice at median of unplotted features";
  return { kind: "slice", cells, label };
}

// ---------------------------------------------------------------------------
// Test history table

export interface TestTableRow {
  t: number;
  nT: number;
  requested: string;
  spent: string;
  mT: string;
  verdict: "rejected" | "accepted" | "auto";
}

export function testTable(tests: TestRow[]): TestTableRow[] {
  return tests.map((rec) => ({
    t: rec.t,
    nT: rec.n_t,
    requested: formatLevel(rec.alpha_requested),
    spent: formatLevel(rec.alpha_t),
    mT: rec.m_t === undefined ? "—" : String(num(rec.m_t)),
    verdict: rec.auto_accepted ? "auto" : rec.rejected ? "rejected" : "accepted",
  }));
}

/** Data bounds with a small margin so points never sit on the frame. */
export function dataBounds(points: PlotPoint[]): RegionRect {
  if (points.length === 0) return { x0: 0, x1: 1, y0: 0, y1: 1 };
  let x0 = Infinity;
  let x1 = -Infinity;
  let y0 = Infinity;
  let y1 = -Infinity;
  for (const p of points) {
    x0 = Math.min(x0, p.px);
    x1 = Math.max(x1, p.px);
    y0 = Math.min(y0, p.py);
    y1 = Math.max(y1, p.py);
  }
  const mx = (x1 - x0 || 1) * 0.06;
  const my = (y1 - y0 || 1) * 0.06;
  return { x0: x0 - mx, x1: x1 + mx, y0: y0 - my, y1: y1 + my };
}
