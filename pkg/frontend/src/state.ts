/**
 * Editor state and draft validation.
 *
 * The draft validator mirrors the service's 422 rules, so every spec the UI
 * submits is already known-complete; scenes are never mutated locally, all
 * edits round-trip through the service.
 */
import type { EditKind, EditSpecWire, Guidance, RleMask, SceneWire } from "./types.js";

export interface HistoryEntry {
  jobId: string;
  resultUrl: string;
  spec: EditSpecWire;
}

export interface EditorState {
  sceneId: string | null;
  scene: SceneWire | null;
  selectedObject: number | null;
  refSceneId: string | null;
  refScene: SceneWire | null;
  refObject: number | null;
  kind: EditKind;
  lambda: number | null;
  guidance: Guidance;
  prompt: string | null;
  seed: number;
  paintedMask: RleMask | null;
  newObjectCategory: number | null;
  history: HistoryEntry[];
}

export function initialState(): EditorState {
  return {
    sceneId: null,
    scene: null,
    selectedObject: null,
    refSceneId: null,
    refScene: null,
    refObject: null,
    kind: "appearance",
    lambda: 1.0,
    guidance: { sS: 6, sF: 4, sy: 8 },
    prompt: null,
    seed: 0,
    paintedMask: null,
    newObjectCategory: null,
    history: [],
  };
}

export function withScene(state: EditorState, sceneId: string, scene: SceneWire): EditorState {
  return { ...state, sceneId, scene, selectedObject: null, paintedMask: null };
}

export function withReference(
  state: EditorState,
  sceneId: string,
  scene: SceneWire,
  objectId: number | null = null,
): EditorState {
  return { ...state, refSceneId: sceneId, refScene: scene, refObject: objectId };
}

export function selectObject(state: EditorState, objectId: number | null): EditorState {
  return { ...state, selectedObject: objectId };
}

export function pushHistory(state: EditorState, entry: HistoryEntry): EditorState {
  return { ...state, history: [...state.history, entry] };
}

function maskIsEmpty(mask: RleMask | null): boolean {
  if (mask === null) return true;
  // runs at odd positions are set-pixel runs
  return !mask.counts.some((count, index) => index % 2 === 1 && count > 0);
}

export function buildDraft(state: EditorState): EditSpecWire {
  const needsRef = state.kind === "appearance" || state.kind === "add";
  return {
    kind: state.kind,
    target: state.kind === "add" ? null : state.selectedObject,
    a0: null,
    a1: null,
    lambda: state.kind === "appearance" ? state.lambda : null,
    new_mask_rle: state.kind === "shape" || state.kind === "add" ? state.paintedMask : null,
    category: state.kind === "add" ? state.newObjectCategory : null,
    ref:
      needsRef && state.refSceneId !== null && state.refObject !== null
        ? { scene: state.refSceneId, object: state.refObject }
        : null,
    seed: state.seed,
    region_mask_rle: null,
    guidance: state.guidance,
    prompt: state.prompt,
    scene: state.sceneId,
  };
}

/** Mirror of the service's 422 validation; empty list means submittable. */
export function validateDraft(draft: EditSpecWire, scene: SceneWire | null): string[] {
  const problems: string[] = [];
  if (!draft.scene) problems.push("no scene loaded");
  const objectCount = scene?.objects.length ?? 0;

  const requireTarget = () => {
    if (draft.target === null) {
      problems.push("select a target object");
    } else if (scene && (draft.target < 0 || draft.target >= objectCount)) {
      problems.push(`object ${draft.target} does not exist`);
    }
  };

  switch (draft.kind) {
    case "appearance": {
      requireTarget();
      if (!draft.ref) problems.push("pick a reference object");
      if (draft.lambda === null && (draft.a0 === null || draft.a1 === null)) {
        problems.push("set lambda or explicit coefficients");
      }
      if (draft.lambda !== null && (draft.lambda < 0 || draft.lambda > 1)) {
        problems.push("lambda must be in [0, 1]");
      }
      break;
    }
    case "shape": {
      requireTarget();
      if (maskIsEmpty(draft.new_mask_rle)) problems.push("paint a non-empty mask");
      break;
    }
    case "add": {
      if (maskIsEmpty(draft.new_mask_rle)) problems.push("paint a non-empty mask");
      if (draft.category === null) problems.push("choose a category for the new object");
      if (!draft.ref) problems.push("pick a reference object for appearance");
      break;
    }
    case "variation": {
      requireTarget();
      break;
    }
    default:
      problems.push(`unknown edit kind ${draft.kind}`);
  }
  return problems;
}
