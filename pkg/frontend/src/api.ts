/**
 * Typed client for the lamsedit job service.
 *
 * The server is the single source of truth: every panel rebuilds its state
 * from these endpoints, so a page reload loses nothing.
 */

import type { SchedulerSpec } from './schedule';

export interface SamplerConfig {
  steps: number;
  guidance: number;
  inversion_guidance: number;
  seed: number;
}

export interface P2PConfigJson {
  edit_type: 'replace' | 'refine' | 'reweight';
  cross_replace_fraction: number;
  self_replace_fraction: number;
  reweight: Record<string, number>;
}

export interface EditPayload {
  image_b64: string;
  source_prompt: string;
  target_prompt: string;
  mask_prompt?: string;
  mask_b64?: string;
  attention_schedule: SchedulerSpec;
  latent_schedule: SchedulerSpec;
  p2p: P2PConfigJson;
  sampler: SamplerConfig;
  adapter?: { ref: string; scale: number };
  start_iteration: number;
}

export interface FieldError {
  field: string;
  message: string;
}

export interface JobRecord {
  job_id: string;
  state: 'queued' | 'inverting' | 'denoising' | 'done' | 'failed';
  iteration?: number;
  total?: number;
  stage?: string;
  message?: string;
  metrics?: { lpips: number | null; clip: number | null };
  request?: Record<string, unknown>;
  content_hash?: string;
}

export interface JobResult {
  job_id: string;
  image_b64: string;
  reconstruction_b64?: string;
  metrics: { lpips: number | null; clip: number | null };
  resolved: Record<string, unknown>;
  content_hash: string;
}

export interface MaskPreview {
  pngBlob: Blob;
  emptyMatch: boolean;
}

export class ApiError extends Error {
  status: number;
  fieldErrors: FieldError[];

  constructor(status: number, message: string, fieldErrors: FieldError[] = []) {
    super(message);
    this.status = status;
    this.fieldErrors = fieldErrors;
  }
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  private url(path: string): string {
    return `${this.baseUrl}/api/v1${path}`;
  }

  private async parseError(response: Response): Promise<ApiError> {
    let body: any = null;
    try {
      body = await response.json();
    } catch {
      /* non-JSON error body */
    }
    const fieldErrors: FieldError[] = body?.errors ?? [];
    const message =
      body?.detail ??
      (fieldErrors.length
        ? fieldErrors.map((e) => `${e.field}: ${e.message}`).join('; ')
        : `request failed with status ${response.status}`);
    return new ApiError(response.status, message, fieldErrors);
  }

  async schedulerPreview(spec: SchedulerSpec, steps: number): Promise<number[]> {
    const params = new URLSearchParams({
      start: String(spec.start),
      end: String(spec.end),
      until: String(spec.until),
      type: spec.type,
      steps: String(steps),
    });
    const response = await fetch(this.url(`/schedulers/preview?${params}`));
    if (!response.ok) {
      throw await this.parseError(response);
    }
    const body = await response.json();
    return body.weights as number[];
  }

  /** Returns the job id; a 409 (duplicate in flight) also resolves to the id. */
  async submitEdit(payload: EditPayload): Promise<{ jobId: string; duplicate: boolean }> {
    const response = await fetch(this.url('/edits'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
    if (response.status === 202) {
      return { jobId: (await response.json()).job_id, duplicate: false };
    }
    if (response.status === 409) {
      const body = await response.json();
      if (body.job_id) {
        return { jobId: body.job_id, duplicate: true };
      }
    }
    throw await this.parseError(response);
  }

  async jobStatus(jobId: string): Promise<JobRecord> {
    const response = await fetch(this.url(`/edits/${jobId}`));
    if (!response.ok) {
      throw await this.parseError(response);
    }
    return (await response.json()) as JobRecord;
  }

  async jobResult(jobId: string): Promise<JobResult> {
    const response = await fetch(this.url(`/edits/${jobId}/result`));
    if (!response.ok) {
      throw await this.parseError(response);
    }
    return (await response.json()) as JobResult;
  }

  async maskPreview(imageB64: string, maskPrompt: string): Promise<MaskPreview> {
    const response = await fetch(this.url('/masks'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ image_b64: imageB64, mask_prompt: maskPrompt }),
    });
    if (!response.ok) {
      throw await this.parseError(response);
    }
    return {
      pngBlob: await response.blob(),
      emptyMatch: response.headers.get('X-Empty-Match') === 'true',
    };
  }

  async listRuns(limit = 50, offset = 0): Promise<{ runs: JobRecord[]; total: number }> {
    const response = await fetch(this.url(`/runs?limit=${limit}&offset=${offset}`));
    if (!response.ok) {
      throw await this.parseError(response);
    }
    return (await response.json()) as { runs: JobRecord[]; total: number };
  }
}
