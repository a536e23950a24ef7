/**
 * Console entry point: binds one session per tab to the DOM.  All state
 * transitions go through SessionController; this file only reads form
 * fields, dispatches, and re-renders on change.
 */

import { ChiselClient, encodeCap } from "./api.js";
import { SessionController, type ControllerState } from "./controller.js";
import { testSubmitState } from "./model.js";
import { renderGauge, renderScatter, renderTests } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function numField(id: string, fallback: number): number {
  const raw = el<HTMLInputElement>(id).value.trim();
  const v = Number(raw);
  return raw === "" || !Number.isFinite(v) ? fallback : v;
}

export function boot(baseUrl: string): SessionController {
  const client = new ChiselClient(baseUrl);
  const controller = new SessionController(client);

  const errorBox = el<HTMLDivElement>("error");
  const statusBox = el<HTMLDivElement>("status");
  const scatterHost = el<HTMLDivElement>("scatter");
  const gaugeHost = el<HTMLDivElement>("gauge");
  const testsHost = el<HTMLDivElement>("tests");
  const testBtn = el<HTMLButtonElement>("run-test");
  const alphaInput = el<HTMLInputElement>("test-alpha");

  function syncTestButton(state: ControllerState): void {
    const remaining = state.view?.ledger.remaining ?? 0;
    const requested = Number(alphaInput.value);
    const gate = testSubmitState(requested, remaining);
    const blocked = gate.disabled || state.busy
      || (state.view?.finalized ?? true);
    testBtn.disabled = blocked;
    testBtn.title = gate.tooltip;
  }

  controller.onChange((state) => {
    errorBox.textContent = state.lastError ?? "";
    errorBox.hidden = !state.lastError;
    const v = state.view;
    if (v) {
      statusBox.textContent =
        `session ${state.info?.id ?? "?"} — masked ${v.n_masked}, ` +
        `revealed ${v.revealed.length}, tests ${v.tests.length}` +
        (v.finalized ? (v.rejected ? " — REJECTED" : " — finalized") : "");
      renderScatter(
        scatterHost, v.revealed, v.region, v.dataset.d,
        v.dataset.feature_names);
      renderGauge(gaugeHost, v.ledger);
      renderTests(testsHost, v.tests);
    }
    syncTestButton(state);
  });

  alphaInput.addEventListener("input", () => syncTestButton(controller.getState()));

  el<HTMLButtonElement>("create").addEventListener("click", () => {
    const csv = el<HTMLTextAreaElement>("csv").value.trim();
    const mode = el<HTMLSelectElement>("mode").value as "binary" | "gaussian";
    const cutoff = numField("cutoff", 0.5);
    const alpha = numField("alpha", 0.05);
    const seed = numField("seed", 0);
    if (csv) {
      void controller.create({
        csv, mode: { mode, cutoff }, alpha, seed,
      });
    } else {
      const n = numField("dgp-n", 200);
      void controller.create({
        dgp: { family: "null_setting1", n, params: { outcome: mode } },
        mode: { mode, cutoff },
        alpha,
        seed,
      });
    }
  });

  el<HTMLButtonElement>("reveal").addEventListener("click", () => {
    void controller.revealFraction(numField("reveal-p", 0.2));
  });

  el<HTMLButtonElement>("walk").addEventListener("click", () => {
    const cap = encodeCap(el<HTMLInputElement>("cap").value);
    void controller.boundaryWalk({ family: "linear" }, cap);
  });

  el<HTMLButtonElement>("walk-adaptive").addEventListener("click", () => {
    const cap = encodeCap(el<HTMLInputElement>("cap").value);
    const batch = Math.max(1, Math.floor(numField("refit-batch", 40)));
    void controller.adaptiveWalk({ family: "linear" }, cap, batch);
  });

  testBtn.addEventListener("click", () => {
    void controller.runTest(Number(alphaInput.value));
  });

  el<HTMLButtonElement>("finalize").addEventListener("click", () => {
    void controller.finalize();
  });

  return controller;
}

// Browser bootstrap; tests import boot() directly instead.
if (typeof document !== "undefined" && document.getElementById("create")) {
  boot(window.location.origin);
}
