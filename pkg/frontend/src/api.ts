import {
  ApiErrorSchema,
  MembershipReport,
  MembershipReportSchema,
  ModelConfig,
  ModelListSchema,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly errorCode: string,
    message: string,
    readonly status?: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function toBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export class AuditApiClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError("service_unreachable", `audit service is unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      const parsed = ApiErrorSchema.safeParse(body);
      if (parsed.success) {
        throw new ApiError(parsed.data.error_code, parsed.data.message, response.status);
      }
      throw new ApiError("http_error", `HTTP ${response.status}`, response.status);
    }
    if (body === null) {
      throw new ApiError("invalid_response", "response body is not JSON");
    }
    return body;
  }

  async listModels(): Promise<ModelConfig[]> {
    const body = await this.request("/api/models");
    const parsed = ModelListSchema.safeParse(body);
    if (!parsed.success) {
      throw new ApiError("schema_mismatch", `model list failed validation: ${parsed.error.message}`);
    }
    return parsed.data;
  }

  async auditImage(image: Blob, modelId?: string): Promise<MembershipReport> {
    const bytes = new Uint8Array(await image.arrayBuffer());
    const payload: Record<string, string> = { image_b64: toBase64(bytes) };
    if (modelId) {
      payload.model_id = modelId;
    }
    const body = await this.request("/api/audit", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    const parsed = MembershipReportSchema.safeParse(body);
    if (!parsed.success) {
      throw new ApiError("schema_mismatch", `report failed validation: ${parsed.error.message}`);
    }
    return parsed.data;
  }
}
