/** Typed client over the supervision HTTP API.
 *
 * One method per endpoint and nothing else: a network log of the console
 * must map one-to-one onto calls made here.  The fetch implementation is
 * injectable so the whole console runs against recorded fixtures.
 */

import type {
  AlarmRow,
  ApprovalReceipt,
  CurrentPlan,
  FlockReport,
  HouseCard,
  JobDoc,
  MortalityReceipt,
  TelemetryRow,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function parseDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? response.statusText;
  } catch {
    return response.statusText;
  }
}

export class SupervisorApi {
  constructor(
    private readonly base: string = "/api/v1",
    private readonly fetchImpl: FetchLike = (input, init) =>
      globalThis.fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.base + path);
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return (await response.json()) as T;
  }

  houses(): Promise<HouseCard[]> {
    return this.get("/houses");
  }

  telemetry(
    address: number,
    dayFrom?: number,
    dayTo?: number,
  ): Promise<TelemetryRow[]> {
    const params = new URLSearchParams();
    if (dayFrom !== undefined) params.set("from", String(dayFrom));
    if (dayTo !== undefined) params.set("to", String(dayTo));
    const query = params.size > 0 ? `?${params.toString()}` : "";
    return this.get(`/houses/${address}/telemetry${query}`);
  }

  reportMortality(
    address: number,
    day: number,
    count: number,
    operator = "console",
  ): Promise<MortalityReceipt> {
    return this.post(`/houses/${address}/mortality`, { day, count, operator });
  }

  /** The approved plan, or null while none has been distributed yet. */
  async currentPlan(): Promise<CurrentPlan | null> {
    try {
      return await this.get<CurrentPlan>("/plan/current");
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return null;
      throw err;
    }
  }

  async startOptimize(): Promise<string> {
    const doc = await this.post<{ job: string }>("/plan/optimize", {});
    return doc.job;
  }

  job(jobId: string): Promise<JobDoc> {
    return this.get(`/jobs/${jobId}`);
  }

  approve(jobId: string): Promise<ApprovalReceipt> {
    return this.post("/plan/approve", { job: jobId });
  }

  alarms(limit = 200): Promise<AlarmRow[]> {
    return this.get(`/alarms?limit=${limit}`);
  }

  flockReport(flockId: number): Promise<FlockReport> {
    return this.get(`/flocks/${flockId}/report`);
  }
}
