// Rate limiter for effort frames: at most maxHz sends per second, always
// eventually sending the latest value (trailing edge).

export class RateLimiter<T> {
  private lastSent = -Infinity;
  private pending: T | undefined;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly send: (value: T) => void,
    private readonly maxHz = 10,
    private readonly now: () => number = () => Date.now(),
  ) {}

  push(value: T): void {
    const interval = 1000 / this.maxHz;
    const at = this.now();
    if (at - this.lastSent >= interval) {
      this.lastSent = at;
      this.send(value);
      return;
    }
    this.pending = value;
    if (this.timer === null) {
      const wait = interval - (at - this.lastSent);
      this.timer = setTimeout(() => this.flush(), wait);
    }
  }

  flush(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.pending !== undefined) {
      this.lastSent = this.now();
      this.send(this.pending);
      this.pending = undefined;
    }
  }
}
