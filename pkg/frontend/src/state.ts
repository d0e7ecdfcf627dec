/** Pure view-state management. Every number shown to the player originates
 * from a server response; this module only stores and formats them. */

import type { CreateSessionResponse, MoveResponse } from "./api.js";

export type Move = 0 | 1 | 2;
export const MOVE_NAMES = ["Rock", "Paper", "Scissors"] as const;

export interface UiGameState {
  sessionId: string | null;
  totalRounds: number;
  roundsPlayed: number;
  instructions: string;
  lastResult: MoveResponse | null;
  history: MoveResponse[];
  tally: number;
  progress: number;
  complete: boolean;
  busy: boolean;
  error: string | null;
}

export function initialState(): UiGameState {
  return {
    sessionId: null,
    totalRounds: 0,
    roundsPlayed: 0,
    instructions: "",
    lastResult: null,
    history: [],
    tally: 0,
    progress: 0,
    complete: false,
    busy: false,
    error: null,
  };
}

export function afterCreate(state: UiGameState, resp: CreateSessionResponse): UiGameState {
  return {
    ...initialState(),
    sessionId: resp.session_id,
    totalRounds: resp.T,
    instructions: resp.rules,
  };
}

export function afterMove(state: UiGameState, resp: MoveResponse): UiGameState {
  return {
    ...state,
    roundsPlayed: resp.round + 1,
    lastResult: resp,
    history: [...state.history, resp],
    tally: resp.tally,
    progress: resp.progress,
    complete: resp.complete,
    busy: false,
    error: null,
  };
}

export function withError(state: UiGameState, message: string): UiGameState {
  return { ...state, busy: false, error: message };
}

const OUTCOME_TEXT: Record<MoveResponse["outcome"], string> = {
  win: "Win",
  tie: "Tie",
  loss: "Loss",
};

export function describeResult(resp: MoveResponse): string {
  const sign = resp.reward > 0 ? `+${resp.reward}` : `${resp.reward}`;
  return `You: ${MOVE_NAMES[resp.ego]}, Bot: ${MOVE_NAMES[resp.opp]}, ${OUTCOME_TEXT[resp.outcome]} ${sign}`;
}

export function progressText(state: UiGameState): string {
  return `Round ${Math.min(state.roundsPlayed + 1, state.totalRounds)} of ${state.totalRounds} - score ${state.tally}`;
}
