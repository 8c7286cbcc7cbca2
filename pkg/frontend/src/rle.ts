/**
 * Run-length codec for binary masks, byte-compatible with the service.
 *
 * Masks are flattened row-major; counts alternate runs starting with the
 * initial zero run (possibly of length 0). The canonical all-zero encoding
 * is a single run covering every cell.
 */
import type { RleMask } from "./types.js";

export function rleEncode(mask: Uint8Array, height: number, width: number): number[] {
  const total = height * width;
  if (mask.length !== total) {
    throw new Error(`mask has ${mask.length} cells, expected ${total}`);
  }
  if (total === 0) return [];
  const counts: number[] = [];
  let current = mask[0] !== 0;
  let run = 0;
  if (current) counts.push(0);
  for (let i = 0; i < total; i++) {
    const value = mask[i] !== 0;
    if (value === current) {
      run += 1;
    } else {
      counts.push(run);
      current = value;
      run = 1;
    }
  }
  counts.push(run);
  return counts;
}

export function rleDecode(counts: number[], size: [number, number]): Uint8Array {
  const total = size[0] * size[1];
  let sum = 0;
  for (const c of counts) {
    if (c < 0 || !Number.isInteger(c)) throw new Error(`bad run length ${c}`);
    sum += c;
  }
  if (sum !== total) {
    throw new Error(`run lengths sum to ${sum}, expected ${total}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const c of counts) {
    if (value) out.fill(1, pos, pos + c);
    pos += c;
    value ^= 1;
  }
  return out;
}

export function maskToWire(mask: Uint8Array, height: number, width: number): RleMask {
  return { size: [height, width], counts: rleEncode(mask, height, width) };
}

export function maskFromWire(wire: RleMask): Uint8Array {
  return rleDecode(wire.counts, wire.size);
}
