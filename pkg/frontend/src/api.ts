/** Thin client for the annotation backend's JSON API. */

import type { RawTask } from "./state.js";

export interface Summary {
  mean_ranks: Record<string, number>;
  submission_count: number;
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") {
      return body.detail;
    }
  } catch {
    // fall through to the generic message
  }
  return `HTTP ${resp.status}`;
}

export async function fetchTasks(baseUrl: string, annotatorId: string): Promise<RawTask[]> {
  const resp = await fetch(`${baseUrl}/api/tasks?annotator=${encodeURIComponent(annotatorId)}`);
  if (!resp.ok) {
    throw new Error(await detailOf(resp));
  }
  return (await resp.json()) as RawTask[];
}

export async function submitRanks(
  baseUrl: string,
  taskId: string,
  annotatorId: string,
  ranks: Record<string, number>,
): Promise<void> {
  const resp = await fetch(`${baseUrl}/api/submissions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ task_id: taskId, annotator_id: annotatorId, ranks }),
  });
  if (!resp.ok) {
    throw new Error(await detailOf(resp));
  }
}

export async function fetchSummary(baseUrl: string): Promise<Summary> {
  const resp = await fetch(`${baseUrl}/api/summary`);
  if (!resp.ok) {
    throw new Error(await detailOf(resp));
  }
  return (await resp.json()) as Summary;
}
