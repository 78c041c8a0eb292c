import { readFileSync } from "node:fs";
import { join } from "node:path";

// vitest runs with the project root as cwd; import.meta.url is not a file
// URL under the jsdom environment, so resolve fixtures from cwd instead
export function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(process.cwd(), "tests", "fixtures", name), "utf-8")) as T;
}

/** Minimal Response-like object for mocked fetch implementations. */
export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
