/** Thin typed client for the super-resolution service. All payloads
 * are JSON with base64 PNG image fields; errors come back as
 * {error: {code, message}} and surface as ServiceError. */

export interface ModelEntry {
  id: string;
  scale: number;
  variant: "srmd" | "srmdnf";
  loaded: boolean;
}

export interface SrResponse {
  image: string;
  ms: number;
}

export interface GridCell {
  width: number;
  sigma: number;
  image: string;
}

export class ServiceError extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function parseError(res: Response): Promise<never> {
  let code = String(res.status);
  let message = res.statusText || "service error";
  try {
    const body = await res.json();
    if (body && body.error) {
      code = String(body.error.code ?? code);
      message = String(body.error.message ?? message);
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ServiceError(res.status, code, message);
}

async function getJson<T>(base: string, path: string): Promise<T> {
  const res = await fetch(base + path);
  if (!res.ok) await parseError(res);
  return res.json() as Promise<T>;
}

async function postJson<T>(
  base: string,
  path: string,
  body: unknown,
  signal?: AbortSignal,
): Promise<T> {
  const res = await fetch(base + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
    signal,
  });
  if (!res.ok) await parseError(res);
  return res.json() as Promise<T>;
}

export async function fetchModels(base: string): Promise<ModelEntry[]> {
  const out = await getJson<{ models: ModelEntry[] }>(base, "/models");
  return out.models;
}

export function postSr(
  base: string,
  body: { model_id: string; image: string; width: number; sigma: number },
  signal?: AbortSignal,
): Promise<SrResponse> {
  return postJson(base, "/sr", body, signal);
}

export function postDegrade(
  base: string,
  body: {
    image: string;
    width: number;
    sigma: number;
    scale: number;
    seed?: number;
  },
): Promise<{ image: string }> {
  return postJson(base, "/degrade", body);
}

export function postGrid(
  base: string,
  body: {
    model_id: string;
    image: string;
    width_range: [number, number, number];
    sigma_range: [number, number, number];
    thumb?: number;
  },
): Promise<{ results: GridCell[] }> {
  return postJson(base, "/grid", body);
}
