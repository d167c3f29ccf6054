// Wire types for the decomposition HTTP API (snake_case mirrors the JSON).

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface DecomposeRequest {
  image: string; // base64 PNG
  boxes: Box[];
  steps?: number;
  seed?: number;
  shared_noise?: boolean;
}

export interface LayerEntry {
  box: Box;
  rgba: string; // base64 RGBA PNG, gray-domain RGB
}

export interface DecomposeResponse {
  background: string; // base64 RGB PNG
  layers: LayerEntry[];
  snapped_boxes: Box[];
  composite: string; // base64 RGB PNG, server-side recomposite oracle
  seed_used: number;
  steps: number;
  shared_noise: boolean;
  timings_ms: Record<string, number>;
}

export interface SceneEntry {
  composite: string; // base64 RGB PNG
  boxes: Box[];
  seed: number;
}

export interface ScenesResponse {
  scenes: SceneEntry[];
  canvas: number;
  patch: number;
}

export interface HealthResponse {
  status: string;
  checkpoint: string;
}

export interface ApiErrorBody {
  error: string;
  field?: string;
}

export type PerturbKind = "excessive" | "offset" | "inadequate";

export interface InferenceSettings {
  steps: number;
  seed: number | null; // null lets the server draw a fresh seed
  shared_noise: boolean;
}

// Raw pixels the compositing math operates on (canvas-free, testable).
export interface Bitmap {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA, row-major
}
