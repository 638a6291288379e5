/**
 * Scheduler curve editor.
 *
 * Two panels (attention mixing wA, latent mixing wz), each with the four
 * scheduler controls. Curves render client-side on every input; the Verify
 * button fetches the server's preview and overlays it, reporting the largest
 * deviation. Out-of-range values never reach the curve: they show an inline
 * error and the previous valid spec stays active.
 */

import { ApiClient } from '../api';
import {
  DECAY_TYPES,
  DEFAULT_ATTENTION_SPEC,
  DEFAULT_LATENT_SPEC,
  DecayType,
  SchedulerSpec,
  makeSchedule,
  maxDeviation,
  specError,
} from '../schedule';

export interface CurveEditor {
  element: HTMLElement;
  getSpecs(): { attention: SchedulerSpec; latent: SchedulerSpec; steps: number };
  setSpecs(attention: SchedulerSpec, latent: SchedulerSpec, steps: number): void;
  onChange(listener: () => void): void;
}

interface SpecPanel {
  element: HTMLElement;
  getSpec(): SchedulerSpec;
  setSpec(spec: SchedulerSpec): void;
  redraw(): void;
  verify(): Promise<void>;
}

function numberInput(label: string, value: number, step: string,
                     onInput: () => void): { wrap: HTMLElement; input: HTMLInputElement } {
  const wrap = document.createElement('label');
  wrap.className = 'field';
  wrap.textContent = label;
  const input = document.createElement('input');
  input.type = 'number';
  input.step = step;
  input.value = String(value);
  input.addEventListener('input', onInput);
  wrap.appendChild(input);
  return { wrap, input };
}

function drawCurve(canvas: HTMLCanvasElement, client: number[],
                   server: number[] | null): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    return;
  }
  const { width, height } = canvas;
  const padding = 8;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = '#ccc';
  ctx.strokeRect(padding, padding, width - 2 * padding, height - 2 * padding);

  const x = (i: number, n: number) =>
    padding + ((width - 2 * padding) * i) / Math.max(1, n - 1);
  const y = (w: number) => padding + (height - 2 * padding) * (1 - w);

  const plot = (values: number[], color: string, dashed: boolean) => {
    ctx.beginPath();
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.setLineDash(dashed ? [5, 4] : []);
    values.forEach((w, i) => {
      if (i === 0) {
        ctx.moveTo(x(i, values.length), y(w));
      } else {
        ctx.lineTo(x(i, values.length), y(w));
      }
    });
    ctx.stroke();
    ctx.setLineDash([]);
  };

  plot(client, '#2266cc', false);
  if (server) {
    plot(server, '#cc4422', true);
  }
}

function createSpecPanel(title: string, initial: SchedulerSpec, api: ApiClient,
                         getSteps: () => number, onChange: () => void): SpecPanel {
  const element = document.createElement('div');
  element.className = 'panel spec-panel';
  const heading = document.createElement('h3');
  heading.textContent = title;
  element.appendChild(heading);

  let active: SchedulerSpec = { ...initial };
  let serverOverlay: number[] | null = null;

  const controls = document.createElement('div');
  controls.className = 'controls';
  const start = numberInput('start', initial.start, '0.05', handleInput);
  const end = numberInput('end', initial.end, '0.05', handleInput);
  const until = numberInput('until', initial.until, '1', handleInput);

  const typeWrap = document.createElement('label');
  typeWrap.className = 'field';
  typeWrap.textContent = 'type';
  const typeSelect = document.createElement('select');
  for (const decay of DECAY_TYPES) {
    const option = document.createElement('option');
    option.value = decay;
    option.textContent = decay;
    typeSelect.appendChild(option);
  }
  typeSelect.value = initial.type;
  typeSelect.addEventListener('input', handleInput);
  typeWrap.appendChild(typeSelect);

  controls.append(start.wrap, end.wrap, until.wrap, typeWrap);
  element.appendChild(controls);

  const errorLine = document.createElement('div');
  errorLine.className = 'error-line';
  element.appendChild(errorLine);

  const canvas = document.createElement('canvas');
  canvas.width = 360;
  canvas.height = 140;
  element.appendChild(canvas);

  const verifyRow = document.createElement('div');
  verifyRow.className = 'verify-row';
  const verifyButton = document.createElement('button');
  verifyButton.type = 'button';
  verifyButton.textContent = 'Verify against server';
  const verifyStatus = document.createElement('span');
  verifyStatus.className = 'verify-status';
  verifyRow.append(verifyButton, verifyStatus);
  element.appendChild(verifyRow);

  function readSpec(): SchedulerSpec {
    return {
      start: parseFloat(start.input.value),
      end: parseFloat(end.input.value),
      until: parseInt(until.input.value, 10),
      type: typeSelect.value as DecayType,
    };
  }

  function handleInput(): void {
    const candidate = readSpec();
    const problem = specError(candidate, getSteps());
    if (problem !== null) {
      errorLine.textContent = problem;
      element.classList.add('invalid');
      return; // previous valid spec stays active
    }
    errorLine.textContent = '';
    element.classList.remove('invalid');
    active = candidate;
    serverOverlay = null;
    verifyStatus.textContent = '';
    redraw();
    onChange();
  }

  function redraw(): void {
    // the steps control can invalidate a previously fine spec (until > T)
    const problem = specError(active, getSteps());
    if (problem !== null) {
      errorLine.textContent = problem;
      element.classList.add('invalid');
      return;
    }
    errorLine.textContent = '';
    element.classList.remove('invalid');
    drawCurve(canvas, makeSchedule(active, getSteps()), serverOverlay);
  }

  async function verify(): Promise<void> {
    verifyStatus.textContent = 'verifying...';
    try {
      serverOverlay = await api.schedulerPreview(active, getSteps());
      const deviation = maxDeviation(makeSchedule(active, getSteps()), serverOverlay);
      verifyStatus.textContent = `server overlay drawn; max deviation ${deviation.toExponential(2)}`;
      redraw();
    } catch (error) {
      verifyStatus.textContent = `verify failed: ${(error as Error).message}`;
    }
  }
  verifyButton.addEventListener('click', () => void verify());

  return {
    element,
    getSpec: () => ({ ...active }),
    setSpec: (spec: SchedulerSpec) => {
      active = { ...spec };
      start.input.value = String(spec.start);
      end.input.value = String(spec.end);
      until.input.value = String(spec.until);
      typeSelect.value = spec.type;
      errorLine.textContent = '';
      serverOverlay = null;
      redraw();
    },
    redraw,
    verify,
  };
}

export function createCurveEditor(api: ApiClient, initialSteps = 50): CurveEditor {
  const element = document.createElement('section');
  element.className = 'curve-editor';
  const listeners: Array<() => void> = [];
  const notify = () => listeners.forEach((fn) => fn());

  const stepsWrap = numberInput('steps (T)', initialSteps, '1', () => {
    const value = parseInt(stepsWrap.input.value, 10);
    if (Number.isInteger(value) && value >= 1) {
      steps = value;
      attention.redraw();
      latent.redraw();
      notify();
    }
  });
  let steps = initialSteps;

  const attention = createSpecPanel(
    'Attention mixing (wA)', DEFAULT_ATTENTION_SPEC, api, () => steps, notify,
  );
  const latent = createSpecPanel(
    'Latent mixing (wz)', DEFAULT_LATENT_SPEC, api, () => steps, notify,
  );

  element.append(stepsWrap.wrap, attention.element, latent.element);
  attention.redraw();
  latent.redraw();

  return {
    element,
    getSpecs: () => ({
      attention: attention.getSpec(),
      latent: latent.getSpec(),
      steps,
    }),
    setSpecs: (attentionSpec, latentSpec, newSteps) => {
      steps = newSteps;
      stepsWrap.input.value = String(newSteps);
      attention.setSpec(attentionSpec);
      latent.setSpec(latentSpec);
    },
    onChange: (listener) => listeners.push(listener),
  };
}
