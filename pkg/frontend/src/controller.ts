/**
 * Session controller: orchestrates multi-command flows against the HTTP
 * service and holds the console's working state.  DOM-free — the render
 * layer subscribes to `onChange` and draws whatever state this exposes.
 */

import type {
  ChiselClient,
  ChiselResult,
  CommandResponse,
  CreateSessionBody,
  ScorerSpecBody,
  SessionInfo,
  SessionView,
  TestResult,
} from "./api.js";
import { ApiError } from "./api.js";

export interface ControllerState {
  info: SessionInfo | null;
  view: SessionView | null;
  busy: boolean;
  lastError: string | null;
  /** Most recent frozen scorer handle, reused by the boundary walk. */
  scorerId: string | null;
}

export type Listener = (state: ControllerState) => void;

export class SessionController {
  private readonly client: ChiselClient;
  private state: ControllerState = {
    info: null,
    view: null,
    busy: false,
    lastError: null,
    scorerId: null,
  };
  private listeners: Listener[] = [];

  constructor(client: ChiselClient) {
    this.client = client;
  }

  onChange(fn: Listener): void {
    this.listeners.push(fn);
  }

  getState(): ControllerState {
    return this.state;
  }

  private emit(partial: Partial<ControllerState>): void {
    this.state = { ...this.state, ...partial };
    for (const fn of this.listeners) fn(this.state);
  }

  private async guarded<T>(work: () => Promise<T>): Promise<T | null> {
    if (this.state.busy) return null;
    this.emit({ busy: true, lastError: null });
    try {
      const out = await work();
      this.emit({ busy: false });
      return out;
    } catch (err) {
      const msg = err instanceof ApiError ? err.detail : String(err);
      this.emit({ busy: false, lastError: msg });
      return null;
    }
  }

  private async refresh(): Promise<void> {
    const info = this.state.info;
    if (!info) return;
    const view = await this.client.view(info.id);
    this.emit({ view });
  }

  async create(body: CreateSessionBody): Promise<SessionInfo | null> {
    return this.guarded(async () => {
      const info = await this.client.createSession(body);
      this.emit({ info, scorerId: null });
      await this.refresh();
      return info;
    });
  }

  /** Reveal floor(p·n) rows by auxiliary order — the data-split opening move. */
  async revealFraction(p: number): Promise<void> {
    await this.guarded(async () => {
      const info = this.requireSession();
      const k = Math.floor(p * info.n);
      if (k <= 0) throw new Error(`fraction ${p} reveals no rows at n=${info.n}`);
      await this.client.revealRandom(info.id, k);
      await this.refresh();
    });
  }

  async revealCount(k: number): Promise<void> {
    await this.guarded(async () => {
      const info = this.requireSession();
      await this.client.revealRandom(info.id, k);
      await this.refresh();
    });
  }

  /** One chisel step: fit (or refit) a scorer and shrink to `cap`. */
  async chiselFit(
    scorer: ScorerSpecBody, cap: number | "inf" | "-inf",
  ): Promise<CommandResponse<ChiselResult> | null> {
    return this.guarded(async () => {
      const info = this.requireSession();
      const res = await this.client.chiselFit(info.id, scorer, cap);
      this.emit({ scorerId: res.result.scorer_id });
      await this.refresh();
      return res;
    });
  }

  /**
   * Walk the region to the score boundary with a single frozen scorer:
   * fit once, then keep re-applying the same scorer handle until a step
   * reveals nothing.  With `cap` at the test cutoff this reproduces the
   * deterministic half of a split-then-test run.
   */
  async boundaryWalk(
    scorer: ScorerSpecBody, cap: number | "inf" | "-inf",
  ): Promise<number> {
    const out = await this.guarded(async () => {
      const info = this.requireSession();
      let steps = 0;
      let res = await this.client.chiselFit(info.id, scorer, cap);
      this.emit({ scorerId: res.result.scorer_id });
      const scorerId = res.result.scorer_id;
      while (res.result.revealed_idx.length > 0) {
        steps += 1;
        res = await this.client.chiselFrozen(info.id, scorerId, cap);
      }
      await this.refresh();
      return steps;
    });
    return out ?? 0;
  }

  /**
   * Shrink to the boundary while refitting every `batch` reveals — the
   * adaptive counterpart of `boundaryWalk`.
   */
  async adaptiveWalk(
    scorer: ScorerSpecBody, cap: number | "inf" | "-inf", batch: number,
  ): Promise<number> {
    const out = await this.guarded(async () => {
      const info = this.requireSession();
      let steps = 0;
      let sinceFit = Infinity; // force an initial fit
      let scorerId: string | null = null;
      for (;;) {
        let res: CommandResponse<ChiselResult>;
        if (sinceFit >= batch || scorerId === null) {
          res = await this.client.chiselFit(info.id, scorer, cap);
          scorerId = res.result.scorer_id;
          this.emit({ scorerId });
          sinceFit = 0;
        } else {
          res = await this.client.chiselFrozen(info.id, scorerId, cap);
        }
        const revealed = res.result.revealed_idx.length;
        if (revealed === 0) break;
        steps += 1;
        sinceFit += revealed;
      }
      await this.refresh();
      return steps;
    });
    return out ?? 0;
  }

  async runTest(alpha: number): Promise<CommandResponse<TestResult> | null> {
    return this.guarded(async () => {
      const info = this.requireSession();
      const res = await this.client.test(info.id, alpha);
      await this.refresh();
      return res;
    });
  }

  async proposeAlpha(alpha: number): Promise<number | null> {
    const out = await this.guarded(async () => {
      const info = this.requireSession();
      const res = await this.client.proposeAlpha(info.id, alpha);
      return res.result.granted;
    });
    return out;
  }

  async finalize(): Promise<void> {
    await this.guarded(async () => {
      const info = this.requireSession();
      await this.client.finalize(info.id);
      await this.refresh();
    });
  }

  async fetchLog(): Promise<string | null> {
    return this.guarded(async () => {
      const info = this.requireSession();
      return this.client.log(info.id);
    });
  }

  private requireSession(): SessionInfo {
    const info = this.state.info;
    if (!info) throw new Error("no active session");
    return info;
  }
}
