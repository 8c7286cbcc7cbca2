/**
 * Mask painting buffer: pure pixel logic behind the brush canvas.
 *
 * The DOM layer translates pointer events into paint/erase stamps; this
 * class owns the binary buffer and its RLE form, so painting behavior is
 * testable without a browser.
 */
import { maskFromWire, maskToWire } from "./rle.js";
import type { RleMask } from "./types.js";

export class MaskPainter {
  readonly data: Uint8Array;

  constructor(
    readonly height: number,
    readonly width: number,
  ) {
    this.data = new Uint8Array(height * width);
  }

  private stamp(row: number, col: number, radius: number, value: number): void {
    const r2 = radius * radius;
    const top = Math.max(0, Math.floor(row - radius));
    const bottom = Math.min(this.height - 1, Math.ceil(row + radius));
    const left = Math.max(0, Math.floor(col - radius));
    const right = Math.min(this.width - 1, Math.ceil(col + radius));
    for (let r = top; r <= bottom; r++) {
      for (let c = left; c <= right; c++) {
        const dr = r - row;
        const dc = c - col;
        if (dr * dr + dc * dc <= r2) {
          this.data[r * this.width + c] = value;
        }
      }
    }
  }

  paint(row: number, col: number, radius = 1): void {
    this.stamp(row, col, radius, 1);
  }

  erase(row: number, col: number, radius = 1): void {
    this.stamp(row, col, radius, 0);
  }

  /** Paint along a segment so fast pointer moves leave no gaps. */
  stroke(r0: number, c0: number, r1: number, c1: number, radius = 1, value = 1): void {
    const steps = Math.max(Math.abs(r1 - r0), Math.abs(c1 - c0), 1);
    for (let i = 0; i <= steps; i++) {
      const r = r0 + ((r1 - r0) * i) / steps;
      const c = c0 + ((c1 - c0) * i) / steps;
      this.stamp(r, c, radius, value);
    }
  }

  clear(): void {
    this.data.fill(0);
  }

  isEmpty(): boolean {
    return !this.data.some((v) => v !== 0);
  }

  count(): number {
    let n = 0;
    for (const v of this.data) if (v) n++;
    return n;
  }

  get(row: number, col: number): boolean {
    return this.data[row * this.width + col] !== 0;
  }

  toWire(): RleMask {
    return maskToWire(this.data, this.height, this.width);
  }

  loadWire(wire: RleMask): void {
    if (wire.size[0] !== this.height || wire.size[1] !== this.width) {
      throw new Error(
        `mask size ${wire.size} does not match painter ${[this.height, this.width]}`,
      );
    }
    this.data.set(maskFromWire(wire));
  }
}
