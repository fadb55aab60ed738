// Box drafting: from a mouse drag on a (possibly CSS-scaled) canvas to a
// normalized box at native image resolution.
//
// The server is the only party that interprets boxes; this module's one job
// is coordinate fidelity. A draft becomes a native-resolution integer pixel
// box first, and the submitted NormBox is its exact division by the native
// dimensions, so the server-side re-render recovers the same pixels.

import type { NormBox, PixelBox } from './types.js';

export interface DraftPoint {
  x: number;
  y: number;
}

/** Displayed-pixel rectangle between anchor and current, normalized min/max. */
export function draftRect(anchor: DraftPoint, current: DraftPoint): PixelBox {
  return {
    xMin: Math.min(anchor.x, current.x),
    yMin: Math.min(anchor.y, current.y),
    xMax: Math.max(anchor.x, current.x),
    yMax: Math.max(anchor.y, current.y),
  };
}

/**
 * Displayed coordinates to native image pixels.
 *
 * `scale` is displayed-size / native-size (0.5 on a 2x-downscaled canvas).
 * Corners snap to the nearest native pixel and clamp to the image bounds.
 */
export function toNativePixels(rect: PixelBox, scale: number, nativeWidth: number, nativeHeight: number): PixelBox {
  if (scale <= 0) {
    throw new Error(`display scale must be positive, got ${scale}`);
  }
  const clampX = (v: number) => Math.min(Math.max(Math.round(v / scale), 0), nativeWidth);
  const clampY = (v: number) => Math.min(Math.max(Math.round(v / scale), 0), nativeHeight);
  return {
    xMin: clampX(rect.xMin),
    yMin: clampY(rect.yMin),
    xMax: clampX(rect.xMax),
    yMax: clampY(rect.yMax),
  };
}

export function isDegenerate(box: PixelBox): boolean {
  return box.xMin >= box.xMax || box.yMin >= box.yMax;
}

/** Exact division by the native dimensions; the server inverts it exactly. */
export function toNormBox(box: PixelBox, nativeWidth: number, nativeHeight: number): NormBox {
  if (isDegenerate(box)) {
    throw new Error('degenerate box cannot be normalized');
  }
  return [box.xMin / nativeWidth, box.yMin / nativeHeight, box.xMax / nativeWidth, box.yMax / nativeHeight];
}

export interface DragSubmission {
  nativeBox: PixelBox;
  normBox: NormBox;
}

export interface DragTarget {
  addEventListener(type: string, listener: (event: any) => void): void;
}

export interface DragCallbacks {
  onSubmit(submission: DragSubmission): void;
  onInvalid(reason: string): void;
  onDraft?(rect: PixelBox): void;
}

/**
 * Wires mousedown/mousemove/mouseup on a canvas-like target into drafts.
 *
 * Coordinates are read from offsetX/offsetY (displayed pixels). The geometry
 * callback supplies the current display scale and native size, so CSS
 * resizing between events is harmless.
 */
export class DragController {
  private anchor: DraftPoint | null = null;

  constructor(
    target: DragTarget,
    private geometry: () => { scale: number; nativeWidth: number; nativeHeight: number },
    private callbacks: DragCallbacks,
  ) {
    target.addEventListener('mousedown', (e) => this.begin({ x: e.offsetX, y: e.offsetY }));
    target.addEventListener('mousemove', (e) => this.move({ x: e.offsetX, y: e.offsetY }));
    target.addEventListener('mouseup', (e) => this.finish({ x: e.offsetX, y: e.offsetY }));
  }

  begin(point: DraftPoint): void {
    this.anchor = point;
  }

  move(point: DraftPoint): void {
    if (this.anchor === null) return;
    this.callbacks.onDraft?.(draftRect(this.anchor, point));
  }

  finish(point: DraftPoint): void {
    if (this.anchor === null) return;
    const rect = draftRect(this.anchor, point);
    this.anchor = null;
    const { scale, nativeWidth, nativeHeight } = this.geometry();
    const native = toNativePixels(rect, scale, nativeWidth, nativeHeight);
    if (isDegenerate(native)) {
      this.callbacks.onInvalid('drag a rectangle, not a click');
      return;
    }
    this.callbacks.onSubmit({ nativeBox: native, normBox: toNormBox(native, nativeWidth, nativeHeight) });
  }

  get dragging(): boolean {
    return this.anchor !== null;
  }
}
