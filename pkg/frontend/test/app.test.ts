// @vitest-environment happy-dom
//
// Full UI flow against the fixture-replaying mock server: upload an image,
// check the rendered bars and aggregate against the recorded values.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, beforeEach, describe, expect, it } from "vitest";

import { AuditApiClient, type FetchLike } from "../src/api.js";
import { AuditApp } from "../src/app.js";
import type { MembershipReport } from "../src/types.js";
import { loadFixture, sendJson, startMockServer, type MockServer } from "./mock-server.js";

const probePng = readFileSync(
  join(dirname(fileURLToPath(import.meta.url)), "fixtures", "probe.png"));
const reportFixture = loadFixture<MembershipReport>("report.json");

let server: MockServer;

beforeAll(async () => {
  server = await startMockServer();
});

afterAll(async () => {
  await server.close();
});

function makeApp(baseUrl: string, fetchFn?: FetchLike): { app: AuditApp; root: HTMLElement } {
  const root = document.createElement("main");
  document.body.appendChild(root);
  const app = new AuditApp(root, new AuditApiClient(baseUrl, fetchFn));
  return { app, root };
}

function probeFile(name = "probe.png"): File {
  return new File([probePng], name, { type: "image/png" });
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("uploading an image", () => {
  it("renders one bar per configuration and the aggregate, two decimals", async () => {
    const { app, root } = makeApp(server.url);
    await app.init();
    await app.submitFiles([probeFile()]);

    const bars = root.querySelectorAll(".score-row");
    expect(bars.length).toBe(reportFixture.per_config.length);
    const values = [...root.querySelectorAll(".score-value")].map((n) => n.textContent);
    expect(values).toEqual(reportFixture.per_config.map((c) => (c.score as number).toFixed(2)));

    const aggregate = root.querySelector(".aggregate-value");
    expect(aggregate?.textContent).toBe(reportFixture.aggregate_likelihood.toFixed(2));

    const widths = [...root.querySelectorAll(".score-fill")].map(
      (n) => (n as HTMLElement).style.width);
    expect(widths).toEqual(
      reportFixture.per_config.map((c) => `${((c.score as number) * 100).toFixed(1)}%`));

    expect(root.querySelector(".disclaimer")?.textContent).toBe(reportFixture.disclaimer);
    expect(root.querySelector(".error-banner")).toBeNull();
  });

  it("shows decisions from the payload, never recomputed", async () => {
    const { app, root } = makeApp(server.url);
    await app.init();
    await app.submitFiles([probeFile()]);
    const decisions = [...root.querySelectorAll(".decision")].map((n) => n.textContent);
    expect(decisions).toEqual(reportFixture.per_config.map((c) => c.decision));
  });

  it("keeps one report card per uploaded image", async () => {
    const { app, root } = makeApp(server.url);
    await app.init();
    await app.submitFiles([probeFile("a.png"), probeFile("b.png")]);
    const titles = [...root.querySelectorAll(".report-card h3")].map((n) => n.textContent);
    expect(titles).toEqual(["b.png", "a.png"]);
  });
});

describe("model selector", () => {
  it("lists each model once plus an all-models option", async () => {
    const { app, root } = makeApp(server.url);
    await app.init();
    const options = [...root.querySelectorAll("#model-filter option")].map(
      (o) => o.textContent);
    expect(options).toEqual(["all models", "toy-demo"]);
  });

  it("selection constrains subsequent audits", async () => {
    const { app } = makeApp(server.url);
    await app.init();
    app.selectedModel = "toy-demo";
    await app.submitFiles([probeFile()]);
    const last = server.requests[server.requests.length - 1]!;
    expect((last.body as { model_id?: string }).model_id).toBe("toy-demo");
  });

  it("refresh picks up a restarted registry", async () => {
    const { app, root } = makeApp(server.url);
    await app.init();
    const models = loadFixture<Array<Record<string, unknown>>>("models.json");
    const renamed = models.map((m) => ({ ...m, model_id: "second-gen" }));
    server.setRoute("GET /api/models", (_req, res) => {
      sendJson(res, 200, renamed);
      });
    try {
      await app.refreshModels();
      const options = [...root.querySelectorAll("#model-filter option")].map(
        (o) => o.textContent);
      expect(options).toEqual(["all models", "second-gen"]);
    } finally {
      server.setRoute("GET /api/models", (_req, res) => {
        sendJson(res, 200, models);
        });
    }
  });

  it("explains an empty registry", async () => {
    server.setRoute("GET /api/models", (_req, res) => {
      sendJson(res, 200, []);
      });
    try {
      const { app, root } = makeApp(server.url);
      await app.init();
      expect(root.querySelector(".empty-state")?.textContent).toContain("No auditable models");
    } finally {
      server.setRoute("GET /api/models", (_req, res) => {
        sendJson(res, 200, loadFixture("models.json"));
        });
    }
  });
});

describe("failure paths", () => {
  it("service down shows the error banner with a retry affordance", async () => {
    const { app, root } = makeApp("http://127.0.0.1:1");
    await app.init();
    const banner = root.querySelector(".error-banner");
    expect(banner).not.toBeNull();
    expect(banner?.textContent).toContain("service_unreachable");
    expect(banner?.querySelector(".retry-button")).not.toBeNull();
  });

  it("a malformed report surfaces a schema-validation error inline", async () => {
    server.setRoute("POST /api/audit", (_req, res) => {
      sendJson(res, 200, { sample_id: "x" });
      });
    try {
      const { app, root } = makeApp(server.url);
      await app.init();
      await app.submitFiles([probeFile()]);
      const banner = root.querySelector("#reports .error-banner");
      expect(banner?.textContent).toContain("schema_mismatch");
    } finally {
      server.setRoute("POST /api/audit", (_req, res) => {
        sendJson(res, 200, reportFixture);
        });
    }
  });

  it("an API error is shown inline with its error code", async () => {
    server.setRoute("POST /api/audit", (_req, res) => {
      sendJson(res, 400, { error_code: "invalid_image", message: "not decodable" });
      });
    try {
      const { app, root } = makeApp(server.url);
      await app.init();
      await app.submitFiles([probeFile()]);
      expect(root.querySelector("#reports .error-banner")?.textContent)
        .toContain("invalid_image");
    } finally {
      server.setRoute("POST /api/audit", (_req, res) => {
        sendJson(res, 200, reportFixture);
        });
    }
  });

  it("in-flight state blocks duplicate submission", async () => {
    let auditCalls = 0;
    let release: (() => void) | undefined;
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const fetchFn: FetchLike = async (input, init) => {
      if (String(input).endsWith("/api/audit")) {
        auditCalls += 1;
        await gate;
        return new Response(JSON.stringify(reportFixture),
          { status: 200, headers: { "content-type": "application/json" } });
      }
      return new Response(JSON.stringify(loadFixture("models.json")),
        { status: 200, headers: { "content-type": "application/json" } });
    };

    const { app, root } = makeApp("http://mock", fetchFn);
    await app.init();
    const first = app.submitFiles([probeFile()]);
    const second = app.submitFiles([probeFile()]);  // must no-op while in flight
    expect((root.querySelector("#submit-button") as HTMLButtonElement).disabled).toBe(true);
    release?.();
    await Promise.all([first, second]);
    expect(auditCalls).toBe(1);
    expect((root.querySelector("#submit-button") as HTMLButtonElement).disabled).toBe(false);
  });
});
