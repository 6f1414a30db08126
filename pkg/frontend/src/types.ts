import { z } from "zod";

// Wire types of the audit service; every number shown in the UI
// must come from one of these validated payloads.

export const ModelConfigSchema = z.object({
  model_id: z.string(),
  auditable_data: z.string(),
  architecture: z.string(),
  input_spec: z.object({
    channels: z.number().int().positive(),
    size: z.number().int().positive(),
    feature_shape: z.array(z.number().int().positive()),
  }),
});
export const ModelListSchema = z.array(ModelConfigSchema);
export type ModelConfig = z.infer<typeof ModelConfigSchema>;

export const PerConfigSchema = z
  .object({
    model_id: z.string(),
    auditable_data: z.string(),
    architecture: z.string(),
    score: z.number().min(0).max(1).optional(),
    decision: z.enum(["member", "external"]).optional(),
    error: z.string().optional(),
  })
  .refine((c) => c.error !== undefined || (c.score !== undefined && c.decision !== undefined), {
    message: "per-config entry needs either a score+decision or an error",
  });
export type PerConfigResult = z.infer<typeof PerConfigSchema>;

export const MembershipReportSchema = z.object({
  sample_id: z.string(),
  per_config: z.array(PerConfigSchema).min(1),
  aggregate_likelihood: z.number().min(0).max(1),
  disclaimer: z.string(),
});
export type MembershipReport = z.infer<typeof MembershipReportSchema>;

export const ApiErrorSchema = z.object({
  error_code: z.string(),
  message: z.string(),
});
