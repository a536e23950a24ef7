/**
 * End-to-end checks against a live server, with every HTTP exchange
 * captured by a recording proxy:
 *
 *  1. a console-driven session (reveal 20% → frozen boundary walk → one
 *     full-budget test) leaves a server log that `replay` verifies and that
 *     reports identically to the equivalent CLI preset run;
 *  2. an over-budget level is blocked client-side, with the remaining
 *     budget named in the tooltip and no request emitted;
 *  3. no masked outcome value ever crosses the wire after the initial
 *     upload (sentinel scan over the captured payloads).
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { execFile } from "node:child_process";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync, existsSync } from "node:fs";
import http from "node:http";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { promisify } from "node:util";

import { ChiselClient } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import { formatLevel, testSubmitState } from "../src/model.js";

const execFileP = promisify(execFile);

// ---------------------------------------------------------------------------
// Deterministic test data (generated here; the same file feeds both paths)

/** 31-bit LCG; BigInt keeps the multiply exact. */
function* lcg(seed: number): Generator<number> {
  let state = BigInt(seed) & 0xffffffffn;
  for (;;) {
    state = (1103515245n * state + 12345n) & 0x7fffffffn;
    yield Number(state) / 0x7fffffff;
  }
}

function binaryCsv(n: number, seed: number): string {
  const g = lcg(seed);
  const next = () => g.next().value as number;
  const rows = ["x0,x1,y"];
  for (let i = 0; i < n; i++) {
    const x0 = (next() * 4 - 2).toFixed(6);
    const x1 = (next() * 4 - 2).toFixed(6);
    const y = next() < 0.3 ? 1 : 0;
    rows.push(`${x0},${x1},${y}`);
  }
  return rows.join("\n") + "\n";
}

/** Outcome sentinels 7301.0625 + i: distinct, exactly representable. */
function sentinelY(i: number): number {
  return 7301.0625 + i;
}

function gaussianSentinelCsv(n: number): string {
  const rows = ["x0,x1,y"];
  for (let i = 0; i < n; i++) {
    const x0 = ((i % 10) / 10).toFixed(1);
    const x1 = (Math.floor(i / 10) / 10 + (i % 3) * 0.01).toFixed(2);
    rows.push(`${x0},${x1},${sentinelY(i)}`);
  }
  return rows.join("\n") + "\n";
}

// ---------------------------------------------------------------------------
// Harness: backend process + recording proxy

interface Exchange {
  method: string;
  path: string;
  requestBody: string;
  responseBody: string;
  status: number;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr && typeof addr === "object") {
        const port = addr.port;
        srv.close(() => resolve(port));
      } else {
        srv.close(() => reject(new Error("no port")));
      }
    });
  });
}

async function waitForServer(url: string, ms: number): Promise<void> {
  const deadline = Date.now() + ms;
  for (;;) {
    try {
      const res = await fetch(`${url}/sessions/does-not-exist`);
      if (res.status === 404) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error(`server at ${url} never came up`);
    await new Promise((r) => setTimeout(r, 250));
  }
}

let tmp: string;
let logDir: string;
let backend: ChildProcess;
let backendUrl: string;
let proxy: http.Server;
let proxyUrl: string;
let backendErr = "";
const captured: Exchange[] = [];

beforeAll(async () => {
  tmp = mkdtempSync(path.join(os.tmpdir(), "chisel-ui-"));
  logDir = path.join(tmp, "logs");
  const backendPort = await freePort();
  backendUrl = `http://127.0.0.1:${backendPort}`;
  backend = spawn(
    "python3",
    ["-m", "chisel", "serve", "--port", String(backendPort),
     "--host", "127.0.0.1", "--log-dir", logDir],
    { cwd: tmp, stdio: ["ignore", "ignore", "pipe"] },
  );
  backend.stderr?.on("data", (c: Buffer) => { backendErr += c.toString(); });
  try {
    await waitForServer(backendUrl, 60_000);
  } catch (err) {
    throw new Error(`${String(err)}\nbackend stderr:\n${backendErr}`);
  }

  proxy = http.createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (c: Buffer) => chunks.push(c));
    req.on("end", () => {
      void (async () => {
        const body = Buffer.concat(chunks).toString("utf8");
        const headers: Record<string, string> = {};
        const ct = req.headers["content-type"];
        if (ct) headers["content-type"] = String(ct);
        const upstream = await fetch(`${backendUrl}${req.url ?? ""}`, {
          method: req.method,
          headers,
          body: req.method === "GET" || body === "" ? undefined : body,
        });
        const text = await upstream.text();
        captured.push({
          method: req.method ?? "",
          path: req.url ?? "",
          requestBody: body,
          responseBody: text,
          status: upstream.status,
        });
        res.writeHead(upstream.status, {
          "content-type":
            upstream.headers.get("content-type") ?? "application/json",
        });
        res.end(text);
      })().catch((err) => {
        res.writeHead(502);
        res.end(String(err));
      });
    });
  });
  const proxyPort = await freePort();
  await new Promise<void>((resolve) =>
    proxy.listen(proxyPort, "127.0.0.1", resolve));
  proxyUrl = `http://127.0.0.1:${proxyPort}`;
}, 90_000);

afterAll(async () => {
  backend?.kill("SIGTERM");
  await new Promise<void>((resolve) => {
    if (!proxy) return resolve();
    proxy.close(() => resolve());
  });
});

function freshController(): SessionController {
  return new SessionController(new ChiselClient(proxyUrl));
}

function expectNoError(c: SessionController): void {
  expect(c.getState().lastError).toBeNull();
}

/** Collect every number in a JSON value, recursively. */
function collectNumbers(v: unknown, out: number[]): void {
  if (typeof v === "number") out.push(v);
  else if (Array.isArray(v)) for (const x of v) collectNumbers(x, out);
  else if (v !== null && typeof v === "object") {
    for (const x of Object.values(v)) collectNumbers(x, out);
  }
}

function numbersInPayload(text: string): number[] {
  const out: number[] = [];
  if (text === "") return out;
  // JSONL and single-document JSON both parse line by line
  for (const line of text.split("\n")) {
    const s = line.trim();
    if (s === "") continue;
    try {
      collectNumbers(JSON.parse(s), out);
    } catch {
      // non-JSON payloads (none expected) are skipped
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

const ALPHA = 0.05;
const SEED = 4242;

describe("console flow vs CLI preset", () => {
  it("replays the logged session to the identical report", async () => {
    const csv = binaryCsv(60, SEED);
    const csvPath = path.join(tmp, "split60.csv");
    writeFileSync(csvPath, csv);

    const c = freshController();
    const info = await c.create({
      csv,
      mode: { mode: "binary", cutoff: 0.5 },
      alpha: ALPHA,
      seed: SEED,
    });
    expectNoError(c);
    expect(info).not.toBeNull();
    const sid = info!.id;

    // reveal 20% → frozen-scorer walk to the cutoff → one full-budget test
    await c.revealFraction(0.2);
    expectNoError(c);
    expect(c.getState().view?.revealed.length).toBe(12);

    await c.boundaryWalk({ family: "linear" }, 0.5);
    expectNoError(c);

    const res = await c.runTest(ALPHA);
    expectNoError(c);
    expect(res).not.toBeNull();
    // the comparison below needs the no-rejection branch, where both
    // reports carry a null region; this instance accepts by construction
    expect(res!.result.rejected).toBe(false);

    await c.finalize();
    expectNoError(c);

    const logPath = path.join(logDir, `${sid}.jsonl`);
    expect(existsSync(logPath)).toBe(true);

    const replayOut = path.join(tmp, "replay.json");
    await execFileP("python3", [
      "-m", "chisel", "replay", "--log", logPath, "--out", replayOut,
    ]);
    const replay = JSON.parse(readFileSync(replayOut, "utf8")) as {
      match: boolean;
      report: Record<string, unknown>;
    };
    expect(replay.match).toBe(true);

    const cliOut = path.join(tmp, "cli.json");
    await execFileP("python3", [
      "-m", "chisel", "run", "--data", csvPath, "--preset", "datasplit",
      "--alpha", String(ALPHA), "--cutoff", "0.5", "--mode", "binary",
      "--p", "0.2", "--scorer", "linear", "--seed", String(SEED),
      "--out", cliOut,
    ]);
    const cli = JSON.parse(readFileSync(cliOut, "utf8")) as
      Record<string, unknown>;

    const { meta: _rm, ...replayReport } = replay.report;
    const { meta: _cm, ...cliReport } = cli;
    expect(replayReport).toEqual(cliReport);
  }, 120_000);

  it("blocks an over-budget level client-side with the remainder named", async () => {
    const c = freshController();
    await c.create({
      csv: binaryCsv(60, SEED),
      mode: { mode: "binary", cutoff: 0.5 },
      alpha: ALPHA,
      seed: SEED,
    });
    await c.revealFraction(0.2);
    await c.runTest(0.03);
    expectNoError(c);

    const view = c.getState().view;
    expect(view).not.toBeNull();
    const remaining = view!.ledger.remaining;
    expect(remaining).toBeGreaterThan(0);
    expect(remaining).toBeLessThan(ALPHA);

    const before = captured.length;
    const gate = testSubmitState(remaining + 0.01, remaining);
    expect(gate.disabled).toBe(true);
    expect(gate.tooltip).toContain(formatLevel(remaining));
    // the submit control is disabled, so no command leaves the client
    expect(captured.length).toBe(before);

    // an in-budget level passes the same gate
    expect(testSubmitState(remaining / 2, remaining).disabled).toBe(false);
  }, 60_000);

  it("never lets a masked outcome cross the wire after the upload", async () => {
    const n = 80;
    const markStart = captured.length;
    const c = freshController();
    await c.create({
      csv: gaussianSentinelCsv(n),
      mode: { mode: "gaussian", cutoff: 7340.0 },
      alpha: ALPHA,
      seed: 7,
    });
    expectNoError(c);
    await c.revealFraction(0.2);
    expectNoError(c);
    await c.chiselFit({ family: "linear" }, "inf");
    expectNoError(c);
    await c.runTest(ALPHA);
    expectNoError(c);
    await c.finalize();
    expectNoError(c);
    const log = await c.fetchLog();
    expect(log).not.toBeNull();

    const view = c.getState().view!;
    const revealedIdx = new Set(view.revealed.map((r) => r.index));
    expect(revealedIdx.size).toBeGreaterThanOrEqual(16);
    expect(revealedIdx.size).toBeLessThan(n);

    const masked: number[] = [];
    const revealed: number[] = [];
    for (let i = 0; i < n; i++) {
      (revealedIdx.has(i) ? revealed : masked).push(sentinelY(i));
    }
    expect(masked.length).toBeGreaterThan(0);

    // scan every captured payload for this session except the upload
    // request itself, which by definition carries the whole dataset
    const exchanges = captured.slice(markStart);
    const seen: number[] = [];
    for (const ex of exchanges) {
      collectNumbers(numbersInPayload(ex.responseBody), seen);
      const isUpload = ex.method === "POST" && ex.path === "/sessions";
      if (!isUpload) collectNumbers(numbersInPayload(ex.requestBody), seen);
    }
    const seenSet = new Set(seen);
    for (const y of masked) {
      expect(seenSet.has(y), `masked outcome ${y} crossed the wire`).toBe(false);
    }
    // sensitivity check: revealed outcomes do appear, so the scan would
    // have caught a masked one
    expect(revealed.some((y) => seenSet.has(y))).toBe(true);
  }, 60_000);
});
