/**
 * Session client: one ordered channel per session, frames applied strictly
 * in seq order. The server is authoritative; this class only tracks what it
 * was told and exposes a render-ready snapshot.
 */

import { BoardModel, disableAll, renderBoard } from "./board.js";
import {
  AgentMovePayload,
  Analysis,
  CreatedPayload,
  Frame,
  RejectPayload,
  SchemaError,
  TerminalPayload,
  ThinkingPayload,
  ViewPayload,
  parseAnalysis,
  parseFrame,
} from "./protocol.js";

export interface Transport {
  send(frame: object): void;
  onFrame(handler: (raw: unknown) => void): void;
}

export type Status =
  | "idle"
  | "waiting"
  | "thinking"
  | "your_turn"
  | "terminal"
  | "error";

export interface TerminalScreen {
  ranks: number[];
  order: number[];
  scores: number[];
  truncated: boolean;
}

export class ArenaClient {
  board: BoardModel;
  status: Status = "idle";
  banner: string | null = null;
  winBar: number[] = []; // latest winner-head probabilities, absolute seats
  rootValue: number | null = null;
  terminal: TerminalScreen | null = null;
  eventLog: string[] = [];

  private transport: Transport;
  private sessionId = "";
  private nextSeq = 1; // server seq starts at 1
  private held = new Map<number, Frame>(); // out-of-order frames, by seq
  private resyncing = false;
  private outSeq = 0;

  constructor(transport: Transport) {
    this.transport = transport;
    transport.onFrame((raw) => this.receive(raw));
    this.board = disableAll(renderBoard(null)); // renders the error shell
    this.board = { ...this.board, error: null };
  }

  createSession(opts: {
    num_players: number;
    human_seat: number;
    checkpoint: string;
    seed?: number;
    simulations?: number;
  }): void {
    this.status = "waiting";
    this.send("create", opts);
  }

  /** Sends a human action. Refuses (returns false) unless the control for
   * that action is currently enabled — the mask is the law. */
  submit(action: number): boolean {
    if (this.status === "terminal") return false;
    const legal =
      action < 4
        ? [...this.board.sourceButtons, ...this.board.keepDiscardButtons].some(
            (c) => c.action === action && c.enabled,
          )
        : this.board.cells[action - 4]?.interactive ?? false;
    if (!legal) return false;
    this.send("action", { action });
    this.status = "waiting";
    return true;
  }

  /** Re-attaches after a dropped connection and asks the server to replay
   * the current state; the next frame re-anchors the seq window. */
  reconnect(transport: Transport): void {
    this.transport = transport;
    transport.onFrame((raw) => this.receive(raw));
    this.held.clear();
    this.resyncing = true;
    this.send("view", {});
  }

  // -- frame intake --------------------------------------------------------

  private send(type: string, payload: object): void {
    this.outSeq += 1;
    this.transport.send({
      type,
      session: this.sessionId,
      payload,
      seq: this.outSeq,
    });
  }

  private receive(raw: unknown): void {
    let frame: Frame;
    try {
      frame = parseFrame(raw);
    } catch (err) {
      if (err instanceof SchemaError) {
        this.banner = err.message;
        this.status = "error";
        return;
      }
      throw err;
    }
    if (frame.type === "error") {
      this.banner = String(frame.payload.reason ?? "server error");
      this.status = "error";
      return;
    }
    if (this.sessionId && frame.session !== this.sessionId) return;

    if (this.resyncing && frame.seq >= this.nextSeq) {
      // replayed session: fast-forward past any frames lost with the socket
      this.nextSeq = frame.seq;
      this.resyncing = false;
    }
    if (frame.seq < this.nextSeq) return; // duplicate
    if (frame.seq > this.nextSeq) {
      this.held.set(frame.seq, frame); // gap: hold until it fills
      return;
    }
    this.apply(frame);
    this.nextSeq += 1;
    // drain anything that was waiting on the gap
    while (this.held.has(this.nextSeq)) {
      const next = this.held.get(this.nextSeq)!;
      this.held.delete(this.nextSeq);
      this.apply(next);
      this.nextSeq += 1;
    }
  }

  private apply(frame: Frame): void {
    try {
      this.applyChecked(frame);
    } catch (err) {
      if (err instanceof SchemaError) {
        this.banner = err.message;
        this.status = "error";
        return;
      }
      throw err;
    }
  }

  private applyChecked(frame: Frame): void {
    switch (frame.type) {
      case "created": {
        const p = frame.payload as unknown as CreatedPayload;
        this.sessionId = p.session;
        this.showView(p.view);
        this.eventLog.push(`session ${p.session} (seed ${p.seed})`);
        break;
      }
      case "view": {
        const p = frame.payload as unknown as ViewPayload;
        this.showView(p.view);
        break;
      }
      case "thinking": {
        const p = frame.payload as unknown as ThinkingPayload;
        this.status = "thinking";
        this.eventLog.push(`seat ${p.seat} thinking…`);
        break;
      }
      case "agent_move": {
        const p = frame.payload as unknown as AgentMovePayload;
        const analysis: Analysis = parseAnalysis(p.analysis);
        this.winBar = analysis.winner_probabilities;
        this.rootValue = analysis.root_value;
        this.eventLog.push(`seat ${p.seat} plays ${p.action}`);
        break;
      }
      case "reject": {
        const p = frame.payload as unknown as RejectPayload;
        this.banner = p.reason;
        // the server's mask is re-asserted; board stays as last rendered
        this.status = "your_turn";
        break;
      }
      case "terminal": {
        const p = frame.payload as unknown as TerminalPayload;
        this.board = disableAll(renderBoard(p.view));
        this.terminal = {
          ranks: p.ranking.ranks,
          order: p.ranking.order,
          scores: p.cumulative_scores,
          truncated: p.truncated,
        };
        this.status = "terminal";
        this.eventLog.push(`game over: scores ${p.cumulative_scores.join(", ")}`);
        break;
      }
      default:
        // unknown event types are logged, never fatal: forward compatibility
        this.eventLog.push(`(${frame.type})`);
    }
  }

  private showView(view: unknown): void {
    const model = renderBoard(view);
    if (model.error !== null) {
      this.banner = model.error;
      this.status = "error";
      return;
    }
    this.board = model;
    this.banner = null;
    this.status = model.yourTurn ? "your_turn" : "waiting";
  }
}
