// Request/response shapes of the groundkit HTTP contract, v1.
// Mirrors docs/api-contract.md in the repository root.

/** Normalized box [x_min, y_min, x_max, y_max], fractions in [0, 1]. */
export type NormBox = [number, number, number, number];

/** Integer pixel box in canonical order, half-open [min, max). */
export interface PixelBox {
  xMin: number;
  yMin: number;
  xMax: number;
  yMax: number;
}

export interface ApiErrorBody {
  error: { code: string; message: string; detail?: string };
}

export interface HealthResponse {
  status: 'ok' | 'mock-only';
  version: string;
  contract: string;
  model_configured: boolean;
}

export interface SessionResponse {
  session_id: string;
  seed: number;
}

export interface SceneObject {
  id: string;
  class: string;
  color: string;
  shape: string;
  center_cm: [number, number];
  extent_cm: [number, number];
}

export interface SceneSummary {
  family: string;
  table_cm: [number, number];
  px_per_cm: number;
  objects: SceneObject[];
  trays: { id: string; rows: number; cols: number; pitch_cm: number; occupancy: (string | null)[][] }[];
  goal_cm: [number, number] | null;
  target_id: string | null;
}

export interface SceneResponse {
  image_png_b64: string;
  width: number;
  height: number;
  scene: SceneSummary;
  scene_seed: number;
}

export interface GroundResponse {
  preview_png_b64: string;
  box: NormBox;
  text: string;
}

export interface ProposalResponse {
  box: NormBox;
  label: string;
  text: string;
  regions_returned: number;
}

export interface AttemptTrace {
  attempt: number;
  chosen?: string | [number, number];
  outcome: string;
  elapsed_s?: number;
}

export interface TrialResponse {
  trial_index: number;
  policy: 'text' | 'grounded';
  instruction_text: string;
  success: boolean;
  attempts: number;
  failure_reason: string;
  chosen: string | [number, number] | null;
  elapsed_s: number;
  trace: AttemptTrace[];
  box: NormBox | null;
}

export interface HistoryResponse {
  session_id: string;
  trials: TrialResponse[];
}
