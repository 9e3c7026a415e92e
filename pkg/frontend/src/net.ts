// WebSocket link to the engine gateway with automatic reconnect. Network
// callbacks only hand frames to the consumer; they never render.

import { Frame, parseFrame, serializeFrame } from "./protocol.js";

export interface LinkCallbacks {
  onFrame: (frame: Frame) => void;
  onStatus: (status: "connecting" | "open" | "closed") => void;
}

export class EngineLink {
  private socket: WebSocket | null = null;
  private backoffMs = 500;
  private closed = false;

  constructor(private readonly url: string,
              private readonly callbacks: LinkCallbacks) {}

  connect(): void {
    this.closed = false;
    this.callbacks.onStatus("connecting");
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = 500;
      this.callbacks.onStatus("open");
    };
    socket.onmessage = (event) => {
      const data = typeof event.data === "string" ? event.data : "";
      for (const line of data.split("\n")) {
        if (!line.trim()) continue;
        const frame = parseFrame(line);
        if (frame) this.callbacks.onFrame(frame);
      }
    };
    socket.onclose = () => {
      this.callbacks.onStatus("closed");
      this.socket = null;
      if (!this.closed) {
        setTimeout(() => this.connect(), this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, 10_000);
      }
    };
    socket.onerror = () => socket.close();
  }

  send(frame: Frame): boolean {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(serializeFrame(frame));
      return true;
    }
    return false;
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
