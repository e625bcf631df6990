/** Thin typed client for the segedit HTTP API. All domain math stays server-side. */

import type { EditParams, JobStatus, JournalEntry, ProjectParams, RefineParams } from "./types.js";

export class ApiHttpError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function errorMessage(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { error?: string };
    return body.error ?? res.statusText;
  } catch {
    return res.statusText;
  }
}

export class SegeditClient {
  constructor(
    private base: string,
    private pollMs = 25,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) {
      throw new ApiHttpError(res.status, await errorMessage(res));
    }
    return res;
  }

  async health(): Promise<boolean> {
    const res = await this.request("/api/health");
    const body = (await res.json()) as { status: string };
    return body.status === "ok";
  }

  async imagePng(): Promise<Uint8Array> {
    return new Uint8Array(await (await this.request("/api/image")).arrayBuffer());
  }

  async putLabels(png: Uint8Array): Promise<number> {
    const res = await this.request("/api/labels", { method: "PUT", body: png as BodyInit });
    const body = (await res.json()) as { segment_count: number };
    return body.segment_count;
  }

  async labelsPng(): Promise<Uint8Array> {
    return new Uint8Array(await (await this.request("/api/labels")).arrayBuffer());
  }

  private async startJob(path: string, params: object): Promise<string> {
    const res = await this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(params),
    });
    const body = (await res.json()) as { job: string };
    return body.job;
  }

  async jobStatus(id: string): Promise<JobStatus> {
    const res = await this.request(`/api/job/${id}`);
    return (await res.json()) as JobStatus;
  }

  async waitJob(id: string, onProgress?: (s: JobStatus) => void, timeoutMs = 300_000): Promise<JobStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.jobStatus(id);
      onProgress?.(status);
      if (status.state === "done") return status;
      if (status.state === "error") throw new ApiHttpError(500, status.error ?? "job failed");
      if (Date.now() > deadline) throw new ApiHttpError(504, "job timed out");
      await new Promise((resolve) => setTimeout(resolve, this.pollMs));
    }
  }

  async project(params: ProjectParams, onProgress?: (s: JobStatus) => void): Promise<void> {
    await this.waitJob(await this.startJob("/api/project", params), onProgress);
  }

  async edit(params: EditParams, onProgress?: (s: JobStatus) => void): Promise<void> {
    await this.waitJob(await this.startJob("/api/edit", params), onProgress);
  }

  async refine(params: RefineParams, onProgress?: (s: JobStatus) => void): Promise<void> {
    await this.waitJob(await this.startJob("/api/refine", params), onProgress);
  }

  async compositePng(opts: { poisson?: boolean; preview?: boolean } = {}): Promise<Uint8Array> {
    const poisson = opts.poisson ?? true;
    const preview = opts.preview ?? false;
    const res = await this.request(`/api/composite?poisson=${poisson}&preview=${preview}`);
    return new Uint8Array(await res.arrayBuffer());
  }

  async undo(): Promise<void> {
    await this.request("/api/undo", { method: "POST" });
  }

  async journal(): Promise<JournalEntry[]> {
    const res = await this.request("/api/journal");
    const body = (await res.json()) as { entries: JournalEntry[] };
    return body.entries;
  }
}
