/** Session flow: one in-flight request at a time, state transitions driven
 * entirely by server responses. */

import { ApiError, RpsApi, type CreateSessionOptions, type ExportedGame } from "./api.js";
import { afterCreate, afterMove, initialState, withError, type Move, type UiGameState } from "./state.js";

export type Listener = (state: UiGameState) => void;

export class PlayController {
  state: UiGameState = initialState();

  constructor(
    private readonly api: RpsApi,
    private readonly listener: Listener,
  ) {}

  private emit(state: UiGameState): UiGameState {
    this.state = state;
    this.listener(state);
    return state;
  }

  async startGame(options: CreateSessionOptions = {}): Promise<void> {
    this.emit({ ...this.state, busy: true, error: null });
    try {
      const resp = await this.api.createSession(options);
      this.emit(afterCreate(this.state, resp));
    } catch (err) {
      this.emit(withError(this.state, `Could not reach the game server: ${message(err)}`));
    }
  }

  /** Submit a move. Returns false when ignored (busy, finished, or no game). */
  async submitMove(action: Move): Promise<boolean> {
    if (this.state.busy || this.state.complete || !this.state.sessionId) {
      return false;
    }
    this.emit({ ...this.state, busy: true });
    try {
      const resp = await this.api.submitMove(this.state.sessionId, action);
      this.emit(afterMove(this.state, resp));
      return true;
    } catch (err) {
      this.emit(withError(this.state, message(err)));
      return false;
    }
  }

  async exportGame(): Promise<ExportedGame | null> {
    if (!this.state.sessionId || !this.state.complete) {
      this.emit(withError(this.state, "The game must be complete before export."));
      return null;
    }
    try {
      return await this.api.exportGame(this.state.sessionId);
    } catch (err) {
      this.emit(withError(this.state, message(err)));
      return null;
    }
  }
}

function message(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.status}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}
