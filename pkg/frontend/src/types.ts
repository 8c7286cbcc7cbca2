/** Wire types shared with the HTTP service. */

export interface RleMask {
  size: [number, number];
  counts: number[];
}

export interface AppearanceLayer {
  encoder: string;
  layer: number;
  values: number[];
}

export interface SceneObjectWire {
  id: number;
  category: number;
  mask_rle: RleMask;
  appearance: { layers: AppearanceLayer[] };
}

export interface SceneWire {
  scene_id?: string;
  image?: string | null;
  width: number;
  height: number;
  objects: SceneObjectWire[];
  caption: string | null;
  category_names?: string[];
  background_category?: number;
}

export interface Guidance {
  sS: number;
  sF: number;
  sy: number;
}

export type EditKind = "appearance" | "shape" | "add" | "variation";

export interface EditSpecWire {
  kind: EditKind;
  target: number | null;
  a0: number | null;
  a1: number | null;
  lambda: number | null;
  new_mask_rle: RleMask | null;
  category: number | null;
  ref: { scene: string; object: number } | null;
  seed: number;
  region_mask_rle: RleMask | null;
  guidance: Guidance | null;
  prompt: string | null;
  scene: string | null;
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobWire {
  id: string;
  state: JobState;
  spec: Record<string, unknown>;
  progress: { completed: number; total: number };
  result_path: string | null;
  error: string | null;
}

export function categoryName(scene: SceneWire, category: number): string {
  const names = scene.category_names ?? [];
  return names[category] ?? `category_${category}`;
}
