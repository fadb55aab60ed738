// View/controller wiring for the session page.
//
// The UI holds no grounding logic: boxes are converted to native pixels,
// submitted, and whatever the server answers (preview image, trial result,
// history) is rendered verbatim. Nothing updates optimistically.

import { ApiError, GroundkitClient } from './api.js';
import { DragController } from './boxDraft.js';
import { Tally } from './tally.js';
import type { GroundResponse, PixelBox, ProposalResponse, SceneResponse, TrialResponse } from './types.js';

const FAMILIES = ['clutter', 'egg-pick', 'egg-place', 'plain-place', 'irregular', 'ood'];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

async function drawPng(canvas: HTMLCanvasElement, b64: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const image = new Image();
    image.onload = () => {
      canvas.width = image.naturalWidth;
      canvas.height = image.naturalHeight;
      const ctx = canvas.getContext('2d')!;
      ctx.drawImage(image, 0, 0);
      resolve();
    };
    image.onerror = () => reject(new Error('could not decode preview image'));
    image.src = pngUrl(b64);
  });
}

class App {
  client = new GroundkitClient('');
  sessionId = '';
  scene: SceneResponse | null = null;
  pending: GroundResponse | null = null;
  proposal: ProposalResponse | null = null;
  proposalImageB64 = '';
  tally = new Tally();

  canvas = el<HTMLCanvasElement>('scene-canvas');
  status = el<HTMLDivElement>('status');
  historyList = el<HTMLUListElement>('history');

  async boot(): Promise<void> {
    const familySelect = el<HTMLSelectElement>('family');
    for (const family of FAMILIES) {
      const option = document.createElement('option');
      option.value = family;
      option.textContent = family;
      familySelect.appendChild(option);
    }

    const session = await this.client.createSession();
    this.sessionId = session.session_id;
    this.say(`session ${this.sessionId} (seed ${session.seed})`);

    el<HTMLButtonElement>('new-scene').addEventListener('click', () => this.newScene());
    el<HTMLButtonElement>('grounded-trial').addEventListener('click', () => this.runTrial('grounded'));
    el<HTMLButtonElement>('text-trial').addEventListener('click', () => this.runTrial('text'));
    el<HTMLSelectElement>('display-scale').addEventListener('change', () => this.applyDisplayScale());
    el<HTMLButtonElement>('ptb-send').addEventListener('click', () => this.sendPointToBox());
    el<HTMLButtonElement>('ptb-accept').addEventListener('click', () => this.acceptProposal());
    el<HTMLButtonElement>('ptb-reject').addEventListener('click', () => this.rejectProposal());

    new DragController(
      this.canvas,
      () => ({
        scale: this.displayScale(),
        nativeWidth: this.scene?.width ?? this.canvas.width,
        nativeHeight: this.scene?.height ?? this.canvas.height,
      }),
      {
        onSubmit: ({ normBox }) => void this.submitGround(normBox),
        onInvalid: (reason) => this.say(reason),
        onDraft: (rect) => this.previewDraft(rect),
      },
    );

    await this.newScene();
  }

  displayScale(): number {
    return Number(el<HTMLSelectElement>('display-scale').value);
  }

  applyDisplayScale(): void {
    const scale = this.displayScale();
    this.canvas.style.width = `${this.canvas.width * scale}px`;
    this.canvas.style.height = `${this.canvas.height * scale}px`;
  }

  say(message: string): void {
    this.status.textContent = message;
  }

  async newScene(): Promise<void> {
    const family = el<HTMLSelectElement>('family').value;
    const seed = Number(el<HTMLInputElement>('scene-seed').value) || 0;
    try {
      this.scene = await this.client.setScene(this.sessionId, family, seed);
      this.pending = null;
      await drawPng(this.canvas, this.scene.image_png_b64);
      this.applyDisplayScale();
      const n = this.scene.scene.objects.length;
      this.say(`scene ready: ${family} seed ${seed}, ${n} objects. Drag a box to ground a target.`);
    } catch (e) {
      this.report(e);
    }
  }

  previewDraft(rect: PixelBox): void {
    if (!this.scene) return;
    // redraw the last server image, then the in-progress rectangle on top
    const background = this.pending ? this.pending.preview_png_b64 : this.scene.image_png_b64;
    void drawPng(this.canvas, background).then(() => {
      const ctx = this.canvas.getContext('2d')!;
      const s = this.displayScale();
      ctx.strokeStyle = '#ff00ff';
      ctx.lineWidth = 1;
      ctx.strokeRect(rect.xMin / s, rect.yMin / s, (rect.xMax - rect.xMin) / s, (rect.yMax - rect.yMin) / s);
    });
  }

  async submitGround(box: [number, number, number, number]): Promise<void> {
    const text = el<HTMLInputElement>('command').value || 'pick up';
    try {
      this.pending = await this.client.ground(this.sessionId, box, text);
      await drawPng(this.canvas, this.pending.preview_png_b64);
      this.applyDisplayScale();
      this.say(`grounded "${this.pending.text}" at [${this.pending.box.map((v) => v.toFixed(3)).join(', ')}]`);
    } catch (e) {
      this.report(e);
    }
  }

  async runTrial(policy: 'text' | 'grounded'): Promise<void> {
    try {
      const trial =
        policy === 'text'
          ? await this.client.trial(this.sessionId, 'text', el<HTMLInputElement>('command').value || 'pick up')
          : await this.client.trial(this.sessionId, 'grounded');
      this.tally.record(trial);
      this.appendHistory(trial);
      this.renderTally();
      this.say(
        `${policy} trial #${trial.trial_index}: ${trial.success ? 'success' : trial.failure_reason} ` +
          `in ${trial.attempts} attempt(s)`,
      );
    } catch (e) {
      this.report(e);
    }
  }

  appendHistory(trial: TrialResponse): void {
    const item = document.createElement('li');
    const badge = trial.success ? 'ok' : 'fail';
    const chosen = Array.isArray(trial.chosen)
      ? `(${trial.chosen.map((v) => v.toFixed(1)).join(', ')}) cm`
      : trial.chosen ?? '-';
    item.className = badge;
    item.textContent = `#${trial.trial_index} ${trial.policy} ${badge} attempts=${trial.attempts} ${
      trial.success ? '' : trial.failure_reason
    } -> ${chosen}`;
    this.historyList.prepend(item);
  }

  renderTally(): void {
    for (const policy of ['text', 'grounded'] as const) {
      const { trials, successes } = this.tally.get(policy);
      el<HTMLSpanElement>(`tally-${policy}`).textContent = trials
        ? `${successes}/${trials} (${((100 * successes) / trials).toFixed(0)}%)`
        : '0/0';
    }
  }

  async sendPointToBox(): Promise<void> {
    const input = el<HTMLInputElement>('ptb-file');
    const file = input.files?.[0];
    if (!file) {
      this.say('choose a pointing-gesture image first');
      return;
    }
    const bytes = new Uint8Array(await file.arrayBuffer());
    let binary = '';
    bytes.forEach((b) => (binary += String.fromCharCode(b)));
    this.proposalImageB64 = btoa(binary);
    const text = el<HTMLInputElement>('command').value || 'pick up';
    try {
      this.proposal = await this.client.pointToBox(this.sessionId, this.proposalImageB64, text);
      const preview = el<HTMLCanvasElement>('ptb-canvas');
      await drawPng(preview, this.proposalImageB64);
      const ctx = preview.getContext('2d')!;
      const [x0, y0, x1, y1] = this.proposal.box;
      ctx.strokeStyle = '#ff0000';
      ctx.lineWidth = 2;
      ctx.strokeRect(x0 * preview.width, y0 * preview.height, (x1 - x0) * preview.width, (y1 - y0) * preview.height);
      this.say(`model proposes "${this.proposal.label}"; accept to make it the pending grounding`);
    } catch (e) {
      this.report(e);
    }
  }

  async acceptProposal(): Promise<void> {
    if (!this.proposal) {
      this.say('no proposal to accept');
      return;
    }
    try {
      this.pending = await this.client.confirm(this.sessionId);
      this.proposal = null;
      await drawPng(this.canvas, this.pending.preview_png_b64);
      this.applyDisplayScale();
      this.say('proposal confirmed; run a grounded trial');
    } catch (e) {
      this.report(e);
    }
  }

  rejectProposal(): void {
    this.proposal = null;
    const preview = el<HTMLCanvasElement>('ptb-canvas');
    preview.getContext('2d')!.clearRect(0, 0, preview.width, preview.height);
    this.say('proposal discarded; pending grounding unchanged');
  }

  report(e: unknown): void {
    if (e instanceof ApiError) {
      const hint = e.code === 'no-pending-grounding' ? ' - draw a box on the scene first' : '';
      this.say(`error ${e.status} ${e.code}: ${e.message}${hint}`);
    } else {
      this.say(String(e));
    }
  }
}

new App().boot().catch((e) => {
  document.body.textContent = `failed to start: ${e}`;
});
