// API client against the fixture-replaying mock server (no primary running).

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, AuditApiClient } from "../src/api.js";
import type { MembershipReport, ModelConfig } from "../src/types.js";
import { loadFixture, sendJson, startMockServer, type MockServer } from "./mock-server.js";

const probePng = readFileSync(
  join(dirname(fileURLToPath(import.meta.url)), "fixtures", "probe.png"));

let server: MockServer;
let client: AuditApiClient;

beforeAll(async () => {
  server = await startMockServer();
  client = new AuditApiClient(server.url);
});

afterAll(async () => {
  await server.close();
});

describe("listModels", () => {
  it("returns the recorded model configurations", async () => {
    const models = await client.listModels();
    expect(models).toEqual(loadFixture<ModelConfig[]>("models.json"));
  });

  it("rejects a malformed model list with a schema error", async () => {
    server.setRoute("GET /api/models", (_req, res) => {
      sendJson(res, 200, [{ nonsense: true }]);
      });
    try {
      await expect(client.listModels()).rejects.toMatchObject({
        errorCode: "schema_mismatch",
      });
    } finally {
      server.setRoute("GET /api/models", (_req, res) => {
        sendJson(res, 200, loadFixture("models.json"));
        });
    }
  });
});

describe("auditImage", () => {
  it("uploads and returns the recorded report", async () => {
    const report = await client.auditImage(new Blob([probePng]));
    expect(report).toEqual(loadFixture<MembershipReport>("report.json"));
  });

  it("forwards the model filter", async () => {
    await client.auditImage(new Blob([probePng]), "toy-demo");
    const last = server.requests[server.requests.length - 1]!;
    expect(last.path).toBe("/api/audit");
    expect((last.body as { model_id?: string }).model_id).toBe("toy-demo");
  });

  it("surfaces API error codes", async () => {
    const err = await client.auditImage(new Blob([])).catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).errorCode).toBe("empty_payload");
    expect((err as ApiError).status).toBe(400);
  });

  it("reports the service as unreachable when it is down", async () => {
    const dead = new AuditApiClient("http://127.0.0.1:1");
    const err = await dead.auditImage(new Blob([probePng])).catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).errorCode).toBe("service_unreachable");
  });
});
