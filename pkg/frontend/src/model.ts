// Console view model: a fold over inbound frames. Holds no physiology of its
// own; every render is reconstructable from the last config frame plus any
// subset of subsequent states (each state frame is self-contained).

import {
  AckFrame, Frame, SessionConfigView, StateFrame,
  isAck, isError, isState,
} from "./protocol.js";

export const HISTORY_WINDOW_S = 120;

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface HrPoint {
  t: number;
  hr: number | null;
}

export interface Toast {
  code: string;
  message: string;
}

export class ConsoleViewModel {
  status: ConnectionStatus = "connecting";
  config: SessionConfigView | null = null;
  latest: StateFrame | null = null;
  history: HrPoint[] = [];
  droppedTotal = 0;
  lastAckedPowerW: number | null = null;
  sliderPowerW = 0;
  toasts: Toast[] = [];
  endPromptSeen = false;

  applyFrame(frame: Frame): void {
    if (isState(frame)) {
      this.applyState(frame);
    } else if (isAck(frame)) {
      this.applyAck(frame);
    } else if (isError(frame)) {
      this.toasts.push({ code: frame.code, message: frame.message });
      if (this.toasts.length > 8) this.toasts.shift();
    }
  }

  private applyAck(frame: AckFrame): void {
    if (frame.config) {
      this.config = frame.config;
      this.sliderPowerW = Math.min(
        Math.max(this.sliderPowerW, 0), frame.config.p_max_w);
    }
    if (frame.ack === "effort" && typeof frame.power_w === "number") {
      this.lastAckedPowerW = frame.power_w;
    }
    if (frame.ack === "start") {
      this.history = [];
      this.droppedTotal = 0;
      this.endPromptSeen = false;
    }
  }

  private applyState(frame: StateFrame): void {
    this.latest = frame;
    if (typeof frame.dropped === "number") {
      this.droppedTotal += frame.dropped;
    }
    this.history.push({ t: frame.t_s, hr: frame.hr_bpm });
    const cutoff = frame.t_s - HISTORY_WINDOW_S;
    while (this.history.length && this.history[0].t < cutoff) {
      this.history.shift();
    }
    if (frame.end_prompt) this.endPromptSeen = true;
  }

  setSlider(powerW: number): number {
    const max = this.config ? this.config.p_max_w : 400;
    this.sliderPowerW = Math.min(Math.max(powerW, 0), max);
    return this.sliderPowerW;
  }

  get running(): boolean {
    return this.latest !== null && this.latest.phase !== "finished";
  }

  /** Seconds of history currently held (for gap checks in tests). */
  get historySpanS(): number {
    if (this.history.length < 2) return 0;
    return this.history[this.history.length - 1].t - this.history[0].t;
  }
}
