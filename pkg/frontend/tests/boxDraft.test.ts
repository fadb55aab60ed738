// @vitest-environment jsdom
import { describe, expect, it, vi } from 'vitest';

import {
  DragController,
  draftRect,
  isDegenerate,
  toNativePixels,
  toNormBox,
  type DragSubmission,
} from '../src/boxDraft.js';

describe('draftRect', () => {
  it('normalizes any drag direction to min/max corners', () => {
    const down = draftRect({ x: 120, y: 80 }, { x: 260, y: 200 });
    const up = draftRect({ x: 260, y: 200 }, { x: 120, y: 80 });
    expect(down).toEqual({ xMin: 120, yMin: 80, xMax: 260, yMax: 200 });
    expect(up).toEqual(down);
  });
});

describe('toNativePixels', () => {
  it('is the identity at 1x display scale', () => {
    const rect = { xMin: 120, yMin: 80, xMax: 260, yMax: 200 };
    expect(toNativePixels(rect, 1, 600, 400)).toEqual(rect);
  });

  it('doubles canvas deltas on a 2x-downscaled display', () => {
    const rect = { xMin: 60, yMin: 40, xMax: 130, yMax: 100 };
    expect(toNativePixels(rect, 0.5, 600, 400)).toEqual({
      xMin: 120,
      yMin: 80,
      xMax: 260,
      yMax: 200,
    });
  });

  it('clamps to the native bounds', () => {
    const rect = { xMin: -4, yMin: -2, xMax: 700, yMax: 500 };
    expect(toNativePixels(rect, 1, 600, 400)).toEqual({ xMin: 0, yMin: 0, xMax: 600, yMax: 400 });
  });

  it('rejects non-positive scales', () => {
    expect(() => toNativePixels({ xMin: 0, yMin: 0, xMax: 1, yMax: 1 }, 0, 10, 10)).toThrow();
  });
});

describe('toNormBox', () => {
  it('divides by the native dimensions exactly', () => {
    expect(toNormBox({ xMin: 120, yMin: 80, xMax: 260, yMax: 200 }, 600, 400)).toEqual([
      120 / 600,
      80 / 400,
      260 / 600,
      200 / 400,
    ]);
  });

  it('refuses degenerate boxes', () => {
    expect(isDegenerate({ xMin: 5, yMin: 5, xMax: 5, yMax: 9 })).toBe(true);
    expect(() => toNormBox({ xMin: 5, yMin: 5, xMax: 5, yMax: 9 }, 10, 10)).toThrow();
  });
});

describe('DragController with scripted browser events', () => {
  function mouse(type: string, x: number, y: number): MouseEvent {
    const event = new MouseEvent(type, { bubbles: true });
    // jsdom does not derive offsetX/Y from layout; script them directly
    Object.defineProperty(event, 'offsetX', { value: x });
    Object.defineProperty(event, 'offsetY', { value: y });
    return event;
  }

  function setup(scale: number) {
    const canvas = document.createElement('canvas');
    const submissions: DragSubmission[] = [];
    const invalid = vi.fn();
    new DragController(
      canvas,
      () => ({ scale, nativeWidth: 600, nativeHeight: 400 }),
      { onSubmit: (s) => submissions.push(s), onInvalid: invalid },
    );
    return { canvas, submissions, invalid };
  }

  it('submits the dragged rectangle at 1x', () => {
    const { canvas, submissions } = setup(1);
    canvas.dispatchEvent(mouse('mousedown', 120, 80));
    canvas.dispatchEvent(mouse('mousemove', 200, 150));
    canvas.dispatchEvent(mouse('mouseup', 260, 200));
    expect(submissions).toHaveLength(1);
    expect(submissions[0].nativeBox).toEqual({ xMin: 120, yMin: 80, xMax: 260, yMax: 200 });
    expect(submissions[0].normBox).toEqual([0.2, 0.2, 260 / 600, 0.5]);
  });

  it('submits native coordinates at 2x downscale', () => {
    const { canvas, submissions } = setup(0.5);
    canvas.dispatchEvent(mouse('mousedown', 60, 40));
    canvas.dispatchEvent(mouse('mouseup', 130, 100));
    expect(submissions[0].nativeBox).toEqual({ xMin: 120, yMin: 80, xMax: 260, yMax: 200 });
  });

  it('blocks a click without a drag', () => {
    const { canvas, submissions, invalid } = setup(1);
    canvas.dispatchEvent(mouse('mousedown', 50, 50));
    canvas.dispatchEvent(mouse('mouseup', 50, 50));
    expect(submissions).toHaveLength(0);
    expect(invalid).toHaveBeenCalledOnce();
  });

  it('ignores a mouseup with no prior mousedown', () => {
    const { canvas, submissions, invalid } = setup(1);
    canvas.dispatchEvent(mouse('mouseup', 50, 50));
    expect(submissions).toHaveLength(0);
    expect(invalid).not.toHaveBeenCalled();
  });
});
