/** Guidance slider mapping and advisory hints. */
import type { Guidance } from "./types.js";

export const SLIDER_RANGES = {
  sS: { min: 0, max: 12 },
  sF: { min: 0, max: 8 },
  sy: { min: 0, max: 12 },
} as const;

export const DEFAULT_GUIDANCE: Guidance = { sS: 6, sF: 4, sy: 8 };

/** Linear map from slider fractions in [0, 1] to guidance weights. */
export function slidersToGuidance(fractions: { sS: number; sF: number; sy: number }): Guidance {
  const map = (f: number, range: { min: number; max: number }) => {
    const clamped = Math.min(Math.max(f, 0), 1);
    return range.min + clamped * (range.max - range.min);
  };
  return {
    sS: map(fractions.sS, SLIDER_RANGES.sS),
    sF: map(fractions.sF, SLIDER_RANGES.sF),
    sy: map(fractions.sy, SLIDER_RANGES.sy),
  };
}

export function guidanceToSliders(g: Guidance): { sS: number; sF: number; sy: number } {
  const unmap = (v: number, range: { min: number; max: number }) =>
    (v - range.min) / (range.max - range.min);
  return {
    sS: unmap(g.sS, SLIDER_RANGES.sS),
    sF: unmap(g.sF, SLIDER_RANGES.sF),
    sy: unmap(g.sy, SLIDER_RANGES.sy),
  };
}

export interface Hint {
  id: string;
  message: string;
}

/**
 * Advisory badges. These mirror the practitioner guidance baked into the
 * sampler docs: they never block submission.
 */
export function guidanceHints(g: Guidance, lambda: number | null): Hint[] {
  const hints: Hint[] = [];
  if (g.sF >= g.sy) {
    hints.push({
      id: "text-drowned",
      message: "keep the text weight above the appearance weight for prompts to matter",
    });
  }
  if (g.sF >= g.sS) {
    hints.push({
      id: "structure-drowned",
      message: "keep the structure weight above the appearance weight to preserve shapes",
    });
  }
  if (lambda === 0) {
    hints.push({ id: "identity-edit", message: "identity edit: lambda 0 keeps the original appearance" });
  }
  return hints;
}
