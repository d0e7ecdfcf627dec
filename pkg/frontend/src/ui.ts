/** DOM rendering and input wiring. */

import type { ExportedGame } from "./api.js";
import { describeResult, MOVE_NAMES, progressText, type Move, type UiGameState } from "./state.js";

export interface UiHandlers {
  onMove: (action: Move) => void;
  onStart: () => void;
  onExport: () => void;
}

export function buildUi(root: HTMLElement, handlers: UiHandlers): (state: UiGameState) => void {
  root.innerHTML = `
    <section id="instructions" class="panel"></section>
    <section id="error" class="banner" hidden></section>
    <section id="controls">
      ${MOVE_NAMES.map((name, i) => `<button class="move" data-action="${i}">${name} (${name[0]})</button>`).join("")}
      <button id="start">New game</button>
      <button id="export" disabled>Export game</button>
    </section>
    <section id="status">
      <div id="progress-text"></div>
      <progress id="progress" max="1" value="0"></progress>
      <div id="last-result"></div>
      <div id="completion" hidden></div>
    </section>
    <ol id="log" reversed></ol>
  `;

  const moveButtons = Array.from(root.querySelectorAll<HTMLButtonElement>("button.move"));
  for (const button of moveButtons) {
    button.addEventListener("click", () => handlers.onMove(Number(button.dataset.action) as Move));
  }
  root.querySelector<HTMLButtonElement>("#start")!.addEventListener("click", handlers.onStart);
  root.querySelector<HTMLButtonElement>("#export")!.addEventListener("click", handlers.onExport);

  const keyMap: Record<string, Move> = { r: 0, p: 1, s: 2 };
  root.ownerDocument.addEventListener("keydown", (event) => {
    const action = keyMap[event.key.toLowerCase()];
    if (action !== undefined) {
      handlers.onMove(action);
    }
  });

  return function render(state: UiGameState): void {
    root.querySelector<HTMLElement>("#instructions")!.textContent = state.instructions || "Press New game to begin.";
    const error = root.querySelector<HTMLElement>("#error")!;
    error.hidden = !state.error;
    error.textContent = state.error ?? "";

    const playable = state.sessionId !== null && !state.complete && !state.busy;
    for (const button of moveButtons) {
      button.disabled = !playable;
    }
    root.querySelector<HTMLButtonElement>("#export")!.disabled = !state.complete;

    root.querySelector<HTMLElement>("#progress-text")!.textContent = state.sessionId ? progressText(state) : "";
    root.querySelector<HTMLProgressElement>("#progress")!.value = state.progress;
    root.querySelector<HTMLElement>("#last-result")!.textContent = state.lastResult ? describeResult(state.lastResult) : "";

    const completion = root.querySelector<HTMLElement>("#completion")!;
    completion.hidden = !state.complete;
    completion.textContent = state.complete ? `Game complete. Final score: ${state.tally}.` : "";

    const log = root.querySelector<HTMLOListElement>("#log")!;
    if (state.lastResult && log.childElementCount < state.history.length) {
      const item = root.ownerDocument.createElement("li");
      item.textContent = `Round ${state.lastResult.round + 1}: ${describeResult(state.lastResult)} (total ${state.tally})`;
      log.prepend(item);
    }
    if (!state.sessionId) {
      log.innerHTML = "";
    }
  };
}

export function downloadExport(doc: Document, game: ExportedGame): void {
  const blob = new Blob([JSON.stringify(game, null, 2)], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const anchor = doc.createElement("a");
  anchor.href = url;
  anchor.download = `rps-game-${game.game_id}.json`;
  doc.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
