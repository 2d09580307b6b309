/**
 * Blind ranking UI: enter an annotator id once, rank each task's blinded
 * outputs from 1 (best) to n (worst), submit when the ranking is complete.
 */

import { fetchTasks, submitRanks } from "./api.js";
import {
  TaskView,
  assignRank,
  isComplete,
  markSubmitted,
  rankOf,
  taskView,
} from "./state.js";

const ANNOTATOR_KEY = "annotator_id";

interface AppState {
  annotatorId: string;
  tasks: TaskView[];
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function renderIdForm(root: HTMLElement, baseUrl: string): void {
  root.textContent = "";
  const form = el("div", "id-form");
  form.appendChild(el("h1", undefined, "Message ranking"));
  form.appendChild(el("p", undefined, "Enter your annotator id to begin."));
  const input = el("input");
  input.id = "annotator-input";
  input.setAttribute("placeholder", "annotator id");
  const button = el("button", "start-btn", "Start");
  button.addEventListener("click", () => {
    const value = input.value.trim();
    if (!value) {
      return;
    }
    window.sessionStorage.setItem(ANNOTATOR_KEY, value);
    void initApp(root, baseUrl);
  });
  form.appendChild(input);
  form.appendChild(button);
  root.appendChild(form);
}

function renderError(root: HTMLElement, baseUrl: string, message: string): void {
  root.textContent = "";
  const box = el("div", "error", `Could not load tasks: ${message}`);
  const retry = el("button", "retry-btn", "Retry");
  retry.addEventListener("click", () => void initApp(root, baseUrl));
  root.appendChild(box);
  root.appendChild(retry);
}

function renderTasks(root: HTMLElement, baseUrl: string, state: AppState): void {
  root.textContent = "";
  const done = state.tasks.filter((t) => t.submitted).length;
  const header = el("div", "header");
  header.appendChild(el("h1", undefined, "Message ranking"));
  header.appendChild(
    el("p", "progress", `Annotator ${state.annotatorId} — submitted ${done} of ${state.tasks.length}`),
  );
  root.appendChild(header);

  if (state.tasks.length === 0) {
    root.appendChild(el("p", "empty", "No tasks available."));
    return;
  }

  state.tasks.forEach((task, index) => {
    root.appendChild(renderCard(root, baseUrl, state, task, index));
  });
}

function renderCard(
  root: HTMLElement,
  baseUrl: string,
  state: AppState,
  task: TaskView,
  index: number,
): HTMLElement {
  const n = task.outputs.length;
  const card = el("section", "task-card");
  card.dataset.taskId = task.taskId;

  card.appendChild(el("h2", undefined, `Task ${index + 1}`));
  card.appendChild(el("p", "prompt", task.promptText));
  card.appendChild(el("p", "hint", `Rank each message from 1 (best) to ${n} (worst).`));

  for (const output of task.outputs) {
    const block = el("div", "output");
    block.dataset.label = output.label;
    block.appendChild(el("h3", undefined, `Message ${output.label}`));
    const pre = el("pre", "text", output.text);
    block.appendChild(pre);
    const controls = el("div", "ranks");
    for (let rank = 1; rank <= n; rank++) {
      const selected = rankOf(task, output.label) === rank;
      const btn = el("button", selected ? "rank-btn selected" : "rank-btn", String(rank));
      btn.dataset.label = output.label;
      btn.dataset.rank = String(rank);
      btn.addEventListener("click", () => {
        state.tasks[index] = assignRank(state.tasks[index], output.label, rank);
        renderTasks(root, baseUrl, state);
      });
      controls.appendChild(btn);
    }
    block.appendChild(controls);
    card.appendChild(block);
  }

  const footer = el("div", "footer");
  const submit = el("button", "submit-btn", task.submitted ? "Resubmit" : "Submit ranking");
  submit.disabled = !isComplete(task);
  submit.addEventListener("click", () => {
    void (async () => {
      try {
        await submitRanks(baseUrl, task.taskId, state.annotatorId, state.tasks[index].ranks);
        state.tasks[index] = markSubmitted(state.tasks[index]);
        renderTasks(root, baseUrl, state);
      } catch (err) {
        const note = el("p", "submit-error", String(err instanceof Error ? err.message : err));
        footer.appendChild(note);
      }
    })();
  });
  footer.appendChild(submit);
  if (task.submitted) {
    footer.appendChild(el("span", "done-badge", "submitted"));
    footer.appendChild(
      el("span", "resubmit-warning", "Submitting again replaces your previous ranking."),
    );
  }
  card.appendChild(footer);
  return card;
}

export async function initApp(root: HTMLElement, baseUrl = ""): Promise<void> {
  const annotatorId = window.sessionStorage.getItem(ANNOTATOR_KEY);
  if (!annotatorId) {
    renderIdForm(root, baseUrl);
    return;
  }
  root.textContent = "";
  root.appendChild(el("p", "loading", "Loading tasks…"));
  try {
    const raw = await fetchTasks(baseUrl, annotatorId);
    renderTasks(root, baseUrl, { annotatorId, tasks: raw.map(taskView) });
  } catch (err) {
    renderError(root, baseUrl, String(err instanceof Error ? err.message : err));
  }
}

const mount = typeof document !== "undefined" ? document.getElementById("app") : null;
if (mount) {
  void initApp(mount);
}
