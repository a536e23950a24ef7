/**
 * Typed HTTP client for the session service.
 *
 * The wire format is strict JSON: the server writes non-finite floats as
 * the strings "inf" / "-inf" / "nan", and shrink caps travel the other way
 * using the same convention.  Every helper here revives or encodes those
 * tokens so the rest of the console works with plain numbers.
 */

export type WireNumber = number | "inf" | "-inf" | "nan";

/** Revive a wire float; non-finite tokens become real IEEE values. */
export function num(v: WireNumber): number {
  if (typeof v === "number") return v;
  if (v === "inf") return Infinity;
  if (v === "-inf") return -Infinity;
  return NaN;
}

/** Optional variant: null/undefined pass through untouched. */
export function numOrNull(v: WireNumber | null | undefined): number | null {
  return v === null || v === undefined ? null : num(v);
}

/**
 * Encode a user-entered cap for the chisel command.  Blank means "no cap"
 * (the sweep stops only at the masked minimum), which the wire spells
 * "inf"; otherwise the value must parse as a real number or a signed
 * infinity token.
 */
export function encodeCap(raw: string): number | "inf" | "-inf" {
  const token = raw.trim().toLowerCase();
  if (token === "" || token === "inf" || token === "+inf"
      || token === "infinity" || token === "+infinity") {
    return "inf";
  }
  if (token === "-inf" || token === "-infinity") return "-inf";
  const value = Number(token);
  if (!Number.isFinite(value)) {
    throw new Error(`cap ${JSON.stringify(raw)} is not a number or inf`);
  }
  return value;
}

// ---------------------------------------------------------------------------
// Wire shapes

export interface DgpCreate {
  family: string;
  n: number;
  cutoff?: number | null;
  params?: Record<string, unknown>;
}

export interface ModeDict {
  mode: "binary" | "gaussian";
  cutoff: number;
  eps: number;
  alpha_min: WireNumber | null;
  n_min: number;
  deterministic_rounding: boolean;
  strict: boolean;
  clip_nonneg: boolean;
  tiebreak_aux: boolean;
}

export interface CreateSessionBody {
  csv?: string;
  dgp?: DgpCreate;
  schema?: Record<string, string>;
  mode?: Partial<ModeDict>;
  alpha?: number;
  seed?: number;
  session_seed?: number | null;
}

export interface SessionInfo {
  id: string;
  n: number;
  d: number;
  dataset_id: string;
  alpha: number;
  mode: ModeDict;
  digest: string;
}

export interface LedgerView {
  alpha_total: number;
  spends: number[];
  spent_aggregate: number;
  remaining: number;
}

export interface RevealedRow {
  index: number;
  x: number[];
  y: number;
  w?: number;
  y_obs?: number;
  e?: number;
}

export interface ScorerView {
  family: string;
  coef?: WireNumber[];
  intercept?: WireNumber;
  dim?: number;
  value?: WireNumber;
  [extra: string]: unknown;
}

export interface ConstraintView {
  kind: "score" | "aux";
  threshold: WireNumber;
  aux_threshold: WireNumber | null;
  scorer: ScorerView | null;
}

export interface IntervalView {
  lo: WireNumber;
  hi: WireNumber;
  lo_strict: boolean;
  hi_strict: boolean;
}

export interface RegionView {
  d: number;
  constraints: ConstraintView[];
  hyperrect: Record<string, IntervalView> | null;
}

/** One row of the analyst-visible test history (already redacted server-side). */
export interface TestRow {
  t: number;
  mode: "binary" | "gaussian";
  n_t: number;
  alpha_requested: number;
  alpha_t: number;
  cutoff: number;
  rejected: boolean;
  auto_accepted: boolean;
  rng_draw: number | null;
  m_t?: WireNumber;
  c_t?: WireNumber;
  crit_count?: number;
  trunc_count?: number;
  statistic?: number | null;
  sigma2_hat?: number | null;
}

export interface DatasetSummary {
  dataset_id: string;
  n: number;
  d: number;
  feature_names: string[];
  causal: boolean;
}

export interface SessionView {
  id?: string;
  dataset: DatasetSummary;
  mode_config: ModeDict;
  alpha: number;
  n_masked: number;
  revealed: RevealedRow[];
  region: RegionView;
  ledger: LedgerView;
  tests: TestRow[];
  t: number;
  finalized: boolean;
  rejected: boolean;
  rng_draws: number;
  digest: string;
}

export interface ChiselResult {
  scorer_id: string;
  psi: WireNumber;
  revealed_idx: number[];
  n_remaining: number;
  aux_threshold: number | null;
  n_masked: number;
}

export interface RevealResult {
  psi: WireNumber;
  revealed_idx: number[];
  n_remaining: number;
  aux_threshold: number | null;
  n_masked: number;
}

export interface TestResult extends TestRow {
  finalized: boolean;
  remaining: number;
}

export interface ProposeAlphaResult {
  requested: number;
  granted: number;
  remaining: number;
}

export interface FinalizeResult {
  finalized: boolean;
  rejected: boolean;
}

export interface CommandResponse<T> {
  kind: string;
  seq: number;
  digest: string;
  rng_draws: number;
  result: T;
}

export type ScorerSpecBody = {
  family: string;
  params?: Record<string, unknown>;
  refit_batch?: number | null;
};

export type CommandBody =
  | { kind: "chisel"; scorer: ScorerSpecBody; cap: number | "inf" | "-inf" }
  | { kind: "chisel"; scorer_id: string; cap: number | "inf" | "-inf" }
  | { kind: "reveal_random"; k: number }
  | { kind: "test"; alpha: number }
  | { kind: "finalize" }
  | { kind: "view" }
  | { kind: "propose_alpha"; alpha: number }
  | { kind: "replay" };

// ---------------------------------------------------------------------------
// Errors

/** Server-reported failure (HTTP 4xx/5xx with a JSON `detail`). */
export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

// ---------------------------------------------------------------------------
// Client

export class ChiselClient {
  readonly baseUrl: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, fetchImpl: typeof fetch = fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(
    method: string, path: string, body?: unknown,
  ): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await res.text();
    if (!res.ok) {
      let detail = text;
      try {
        const parsed = JSON.parse(text) as { detail?: unknown };
        if (typeof parsed.detail === "string") detail = parsed.detail;
      } catch {
        // non-JSON error body: keep the raw text
      }
      throw new ApiError(res.status, detail);
    }
    return JSON.parse(text) as T;
  }

  createSession(body: CreateSessionBody): Promise<SessionInfo> {
    return this.request<SessionInfo>("POST", "/sessions", body);
  }

  view(id: string): Promise<SessionView> {
    return this.request<SessionView>("GET", `/sessions/${id}`);
  }

  command<T>(id: string, body: CommandBody): Promise<CommandResponse<T>> {
    return this.request<CommandResponse<T>>(
      "POST", `/sessions/${id}/commands`, body);
  }

  /** The analyst's copy of the event log (dataset content redacted), as raw JSONL. */
  async log(id: string): Promise<string> {
    const res = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/log`);
    const text = await res.text();
    if (!res.ok) throw new ApiError(res.status, text);
    return text;
  }

  // Convenience wrappers for each command kind -----------------------------

  chiselFit(
    id: string, scorer: ScorerSpecBody, cap: number | "inf" | "-inf",
  ): Promise<CommandResponse<ChiselResult>> {
    return this.command<ChiselResult>(id, { kind: "chisel", scorer, cap });
  }

  chiselFrozen(
    id: string, scorerId: string, cap: number | "inf" | "-inf",
  ): Promise<CommandResponse<ChiselResult>> {
    return this.command<ChiselResult>(
      id, { kind: "chisel", scorer_id: scorerId, cap });
  }

  revealRandom(id: string, k: number): Promise<CommandResponse<RevealResult>> {
    return this.command<RevealResult>(id, { kind: "reveal_random", k });
  }

  test(id: string, alpha: number): Promise<CommandResponse<TestResult>> {
    return this.command<TestResult>(id, { kind: "test", alpha });
  }

  proposeAlpha(
    id: string, alpha: number,
  ): Promise<CommandResponse<ProposeAlphaResult>> {
    return this.command<ProposeAlphaResult>(id, { kind: "propose_alpha", alpha });
  }

  finalize(id: string): Promise<CommandResponse<FinalizeResult>> {
    return this.command<FinalizeResult>(id, { kind: "finalize" });
  }
}
