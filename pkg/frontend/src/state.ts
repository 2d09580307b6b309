/**
 * Task-view state for the blind ranking UI.
 *
 * A task shows blinded outputs (letter labels only; the backend never sends
 * system names). Ranks are assigned per label, 1 = best. Assigning a rank
 * that another label already holds swaps the two labels' ranks, so partial
 * state can never contain the same rank twice. Submission is possible only
 * when ranks form a complete 1..n permutation.
 */

export interface TaskOutput {
  label: string;
  text: string;
}

export interface TaskView {
  taskId: string;
  promptText: string;
  outputs: TaskOutput[];
  ranks: Record<string, number>;
  submitted: boolean;
}

export interface RawTask {
  task_id: string;
  prompt_text: string;
  outputs: TaskOutput[];
}

export function taskView(raw: RawTask): TaskView {
  return {
    taskId: raw.task_id,
    promptText: raw.prompt_text,
    outputs: raw.outputs.map((o) => ({ label: o.label, text: o.text })),
    ranks: {},
    submitted: false,
  };
}

export function assignRank(view: TaskView, label: string, rank: number): TaskView {
  const n = view.outputs.length;
  if (!Number.isInteger(rank) || rank < 1 || rank > n) {
    throw new RangeError(`rank must be an integer in 1..${n}, got ${rank}`);
  }
  if (!view.outputs.some((o) => o.label === label)) {
    throw new RangeError(`unknown label ${label}`);
  }
  const ranks: Record<string, number> = { ...view.ranks };
  const previousHolder = Object.keys(ranks).find((l) => l !== label && ranks[l] === rank);
  const displaced = ranks[label];
  ranks[label] = rank;
  if (previousHolder !== undefined) {
    if (displaced !== undefined) {
      ranks[previousHolder] = displaced;
    } else {
      delete ranks[previousHolder];
    }
  }
  return { ...view, ranks };
}

export function clearRank(view: TaskView, label: string): TaskView {
  const ranks = { ...view.ranks };
  delete ranks[label];
  return { ...view, ranks };
}

export function rankOf(view: TaskView, label: string): number | undefined {
  return view.ranks[label];
}

export function isComplete(view: TaskView): boolean {
  const values = view.outputs.map((o) => view.ranks[o.label]);
  if (values.some((v) => v === undefined)) {
    return false;
  }
  const sorted = [...(values as number[])].sort((a, b) => a - b);
  return sorted.every((v, i) => v === i + 1);
}

export function markSubmitted(view: TaskView): TaskView {
  return { ...view, submitted: true };
}
