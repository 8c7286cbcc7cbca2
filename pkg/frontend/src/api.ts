/** Thin client for the editing service API. */
import type { EditSpecWire, JobWire, SceneWire } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  private async json<T>(response: Response): Promise<T> {
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = String(body.detail);
      } catch {
        // keep statusText
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<{ status: string; checkpoint_fingerprint: string }> {
    return this.json(await this.fetchFn(this.url("/api/health")));
  }

  async uploadImage(png: Blob | ArrayBuffer): Promise<string> {
    const response = await this.fetchFn(this.url("/api/images"), {
      method: "POST",
      headers: { "Content-Type": "image/png" },
      body: png,
    });
    const body = await this.json<{ image_id: string }>(response);
    return body.image_id;
  }

  async segment(imageId: string, backend = "oracle", caption?: string): Promise<SceneWire> {
    const response = await this.fetchFn(this.url(`/api/images/${imageId}/segment`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ backend, caption: caption ?? null }),
    });
    return this.json(response);
  }

  async getScene(sceneId: string): Promise<SceneWire> {
    return this.json(await this.fetchFn(this.url(`/api/scenes/${sceneId}`)));
  }

  async submitEdit(spec: EditSpecWire): Promise<string> {
    const response = await this.fetchFn(this.url("/api/edits"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
    const body = await this.json<{ job_id: string }>(response);
    return body.job_id;
  }

  async getJob(jobId: string): Promise<JobWire> {
    return this.json(await this.fetchFn(this.url(`/api/jobs/${jobId}`)));
  }

  resultUrl(jobId: string): string {
    return this.url(`/api/results/${jobId}`);
  }

  async fetchResult(jobId: string): Promise<ArrayBuffer> {
    const response = await this.fetchFn(this.resultUrl(jobId));
    if (!response.ok) throw new ApiError(response.status, "result not available");
    return response.arrayBuffer();
  }
}
