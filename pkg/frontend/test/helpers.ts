/** Fixture loading and a scripted fetch stand-in for the supervisor API.
 *
 * Every response body served here was recorded from the live service by
 * scripts/record_fixtures.py; the tests never invent payloads.
 */

/// <reference types="node" />

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import type { FetchLike } from "../src/api.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export interface Envelope {
  status: number;
  body: unknown;
}

export function fixture(name: string): Envelope {
  const text = readFileSync(join(FIXTURES, `${name}.json`), "utf8");
  return JSON.parse(text) as Envelope;
}

/** job_trace.json holds the polled snapshots of one optimize run, in order. */
export function jobTrace(): Envelope[] {
  const text = readFileSync(join(FIXTURES, "job_trace.json"), "utf8");
  return JSON.parse(text) as Envelope[];
}

export function body<T>(name: string): T {
  return fixture(name).body as T;
}

export interface LoggedRequest {
  method: string;
  url: string;
  body?: unknown;
}

type Step = Envelope | (() => Promise<Envelope>);

function asResponse(envelope: Envelope): Response {
  const text = JSON.stringify(envelope.body);
  return {
    ok: envelope.status >= 200 && envelope.status < 300,
    status: envelope.status,
    statusText: `status ${envelope.status}`,
    json: () => Promise.resolve(JSON.parse(text) as unknown),
  } as Response;
}

/** Routes requests to fixture queues; a queue's last entry repeats forever. */
export class FakeBackend {
  log: LoggedRequest[] = [];
  private routes = new Map<string, Step[]>();

  route(method: string, url: string, ...steps: Step[]): this {
    this.routes.set(`${method} ${url}`, [...steps]);
    return this;
  }

  /** Returns a release function; the next matching request blocks until it runs. */
  gate(method: string, url: string, envelope: Envelope): () => void {
    let release!: () => void;
    const opened = new Promise<void>((resolve) => {
      release = resolve;
    });
    this.route(method, url, () => opened.then(() => envelope));
    return release;
  }

  fetch: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const entry: LoggedRequest = { method, url: input };
    if (typeof init?.body === "string") entry.body = JSON.parse(init.body);
    this.log.push(entry);
    const queue =
      this.routes.get(`${method} ${input}`) ??
      this.routes.get(`${method} ${input.split("?")[0] ?? input}`);
    if (!queue || queue.length === 0) {
      throw new Error(`no fixture routed for ${method} ${input}`);
    }
    const step = queue.length > 1 ? queue.shift()! : queue[0]!;
    return asResponse(typeof step === "function" ? await step() : step);
  };

  calls(method: string, prefix: string): LoggedRequest[] {
    return this.log.filter(
      (r) => r.method === method && r.url.startsWith(prefix),
    );
  }
}

/** The healthy condominium as the console first sees it: no plan yet. */
export function healthyBackend(): FakeBackend {
  return new FakeBackend()
    .route("GET", "/api/v1/houses", fixture("houses_initial"))
    .route("GET", "/api/v1/houses/1/telemetry", fixture("telemetry_house1"))
    .route("GET", "/api/v1/houses/2/telemetry", fixture("telemetry_house2"))
    .route("GET", "/api/v1/houses/3/telemetry", fixture("telemetry_house3"))
    .route("GET", "/api/v1/plan/current", fixture("plan_missing"))
    .route("GET", "/api/v1/alarms", fixture("alarms_initial"));
}

/** Polls a predicate; the store's async actions settle within a few ticks. */
export async function until(
  check: () => boolean,
  timeoutMs = 1000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!check()) {
    if (Date.now() > deadline) throw new Error("condition never became true");
    await new Promise((resolve) => setTimeout(resolve, 2));
  }
}
