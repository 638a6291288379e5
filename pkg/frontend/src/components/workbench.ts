/**
 * Edit workbench.
 *
 * Image upload, the three prompt fields, P2P mode, adapter picker, and
 * sampler knobs. Submitting posts the job, then a 500ms poll drives the
 * progress bar until the result renders original | reconstruction | edited
 * side by side. Server-side validation errors land on their form fields.
 */

import { ApiClient, ApiError, EditPayload, JobRecord } from '../api';
import { CurveEditor } from './curveEditor';
import { MaskPanel } from './maskPanel';

export const POLL_INTERVAL_MS = 500;

export interface Workbench {
  element: HTMLElement;
  /** Restore every knob from a run record's request summary. */
  loadFromRecord(record: JobRecord): void;
  getImageB64(): string | null;
  getMaskPrompt(): string;
}

interface Field {
  wrap: HTMLElement;
  input: HTMLInputElement | HTMLSelectElement;
  error: HTMLElement;
}

function field(name: string, label: string, input: HTMLInputElement | HTMLSelectElement): Field {
  const wrap = document.createElement('label');
  wrap.className = 'field';
  wrap.dataset.field = name;
  wrap.textContent = label;
  const error = document.createElement('span');
  error.className = 'field-error';
  wrap.append(input, error);
  return { wrap, input, error };
}

function textField(name: string, label: string, placeholder = ''): Field {
  const input = document.createElement('input');
  input.type = 'text';
  input.placeholder = placeholder;
  return field(name, label, input);
}

function numberField(name: string, label: string, value: number, step: string): Field {
  const input = document.createElement('input');
  input.type = 'number';
  input.value = String(value);
  input.step = step;
  return field(name, label, input);
}

export function createWorkbench(api: ApiClient, curves: CurveEditor,
                                maskPanel: () => MaskPanel | null): Workbench {
  const element = document.createElement('section');
  element.className = 'panel workbench';
  const heading = document.createElement('h3');
  heading.textContent = 'Edit workbench';
  element.appendChild(heading);

  // -- image upload ---------------------------------------------------------
  let imageB64: string | null = null;
  const uploadField = document.createElement('label');
  uploadField.className = 'field';
  uploadField.dataset.field = 'image_b64';
  uploadField.textContent = 'input image (PNG)';
  const fileInput = document.createElement('input');
  fileInput.type = 'file';
  fileInput.accept = 'image/png';
  const uploadError = document.createElement('span');
  uploadError.className = 'field-error';
  const thumb = document.createElement('img');
  thumb.className = 'thumb';
  thumb.alt = 'input preview';
  uploadField.append(fileInput, uploadError, thumb);
  element.appendChild(uploadField);

  fileInput.addEventListener('change', () => {
    const file = fileInput.files?.[0];
    if (!file) {
      return;
    }
    const reader = new FileReader();
    reader.onload = () => {
      const dataUrl = reader.result as string;
      imageB64 = dataUrl.split(',', 2)[1] ?? null;
      if (imageB64) {
        thumb.src = dataUrl;
        uploadError.textContent = '';
      }
    };
    reader.readAsDataURL(file);
  });

  // -- prompts ---------------------------------------------------------------
  const sourcePrompt = textField('source_prompt', 'original prompt (p_o)',
                                 'what the image shows');
  const targetPrompt = textField('target_prompt', 'target prompt (p)',
                                 'what it should become');
  const maskPrompt = textField('mask_prompt', 'mask prompt (p_m, optional)',
                               'region to restrict the edit to');
  element.append(sourcePrompt.wrap, targetPrompt.wrap, maskPrompt.wrap);

  // -- P2P mode ---------------------------------------------------------------
  const modeSelect = document.createElement('select');
  for (const mode of ['replace', 'refine', 'reweight']) {
    const option = document.createElement('option');
    option.value = mode;
    option.textContent = mode;
    modeSelect.appendChild(option);
  }
  const p2pMode = field('p2p', 'edit type', modeSelect);
  const crossFraction = numberField('cross_replace_fraction', 'cross-attn window', 0.8, '0.05');
  const selfFraction = numberField('self_replace_fraction', 'self-attn window', 0.4, '0.05');
  element.append(p2pMode.wrap, crossFraction.wrap, selfFraction.wrap);

  // -- adapter -----------------------------------------------------------------
  const adapterRef = textField('adapter', 'style adapter (path or id, optional)');
  const adapterScale = numberField('adapter_scale', 'adapter scale', 1.0, '0.05');
  element.append(adapterRef.wrap, adapterScale.wrap);

  // -- sampler -----------------------------------------------------------------
  const seed = numberField('sampler', 'seed', 0, '1');
  const guidance = numberField('guidance', 'guidance', 7.5, '0.5');
  const inversionGuidance = numberField('inversion_guidance', 'inversion guidance', 1.0, '0.5');
  const startIteration = numberField('start_iteration', 'start iteration', 0, '1');
  element.append(seed.wrap, guidance.wrap, inversionGuidance.wrap, startIteration.wrap);

  const fields: Record<string, Field> = {
    source_prompt: sourcePrompt,
    target_prompt: targetPrompt,
    mask_prompt: maskPrompt,
    p2p: p2pMode,
    adapter: adapterRef,
    sampler: seed,
    start_iteration: startIteration,
    attention_schedule: sourcePrompt, // schedule errors surface on the banner
    latent_schedule: sourcePrompt,
  };

  // -- submit + progress ---------------------------------------------------------
  const submitButton = document.createElement('button');
  submitButton.type = 'button';
  submitButton.textContent = 'Submit edit';
  element.appendChild(submitButton);

  const banner = document.createElement('div');
  banner.className = 'banner';
  element.appendChild(banner);

  const progress = document.createElement('progress');
  progress.max = 1;
  progress.value = 0;
  progress.hidden = true;
  const progressLabel = document.createElement('span');
  progressLabel.className = 'progress-label';
  element.append(progress, progressLabel);

  const results = document.createElement('div');
  results.className = 'results';
  element.appendChild(results);

  let pollTimer: ReturnType<typeof setTimeout> | null = null;

  function clearFieldErrors(): void {
    for (const f of Object.values(fields)) {
      f.error.textContent = '';
      f.wrap.classList.remove('invalid');
    }
    uploadError.textContent = '';
    uploadField.classList.remove('invalid');
  }

  function surfaceError(error: ApiError): void {
    banner.textContent = error.message;
    banner.classList.add('warn');
    for (const fe of error.fieldErrors) {
      if (fe.field === 'image_b64' || fe.field === 'image_path') {
        uploadError.textContent = fe.message;
        uploadField.classList.add('invalid');
      } else if (fields[fe.field]) {
        fields[fe.field].error.textContent = fe.message;
        fields[fe.field].wrap.classList.add('invalid');
      }
    }
  }

  function showResult(originalB64: string, reconstructionB64: string | undefined,
                      editedB64: string, metrics: { lpips: number | null; clip: number | null }): void {
    results.replaceChildren();
    const triplet: Array<[string, string | undefined]> = [
      ['original', originalB64],
      ['reconstruction', reconstructionB64],
      ['edited', editedB64],
    ];
    for (const [label, b64] of triplet) {
      if (!b64) {
        continue;
      }
      const cell = document.createElement('figure');
      const img = document.createElement('img');
      img.src = `data:image/png;base64,${b64}`;
      img.alt = label;
      const caption = document.createElement('figcaption');
      caption.textContent = label;
      cell.append(img, caption);
      results.appendChild(cell);
    }
    const metricsLine = document.createElement('div');
    metricsLine.className = 'metrics';
    metricsLine.textContent =
      `lpips ${metrics.lpips?.toFixed(4) ?? 'n/a'} | clip ${metrics.clip?.toFixed(4) ?? 'n/a'}`;
    results.appendChild(metricsLine);
  }

  function poll(jobId: string, originalB64: string): void {
    const tick = async () => {
      try {
        const record = await api.jobStatus(jobId);
        if (record.state === 'denoising' && record.total) {
          progress.hidden = false;
          progress.value = (record.iteration ?? 0) / record.total;
          progressLabel.textContent =
            `denoising ${record.iteration ?? 0} / ${record.total}`;
        } else if (record.state === 'inverting') {
          progress.hidden = false;
          progress.removeAttribute('value');
          progressLabel.textContent = 'inverting...';
        }
        if (record.state === 'done') {
          progress.hidden = true;
          progressLabel.textContent = '';
          banner.textContent = `job ${jobId} finished`;
          const result = await api.jobResult(jobId);
          showResult(originalB64, result.reconstruction_b64, result.image_b64,
                     result.metrics);
          return;
        }
        if (record.state === 'failed') {
          progress.hidden = true;
          banner.textContent =
            `job failed at stage ${record.stage}: ${record.message}`;
          banner.classList.add('warn');
          return;
        }
        pollTimer = setTimeout(() => void tick(), POLL_INTERVAL_MS);
      } catch (error) {
        banner.textContent = `polling failed: ${(error as Error).message}`;
        banner.classList.add('warn');
      }
    };
    void tick();
  }

  function buildPayload(): EditPayload | null {
    if (!imageB64) {
      uploadError.textContent = 'required';
      uploadField.classList.add('invalid');
      return null;
    }
    const specs = curves.getSpecs();
    const payload: EditPayload = {
      image_b64: imageB64,
      source_prompt: (sourcePrompt.input as HTMLInputElement).value,
      target_prompt: (targetPrompt.input as HTMLInputElement).value,
      attention_schedule: specs.attention,
      latent_schedule: specs.latent,
      p2p: {
        edit_type: modeSelect.value as 'replace' | 'refine' | 'reweight',
        cross_replace_fraction: parseFloat((crossFraction.input as HTMLInputElement).value),
        self_replace_fraction: parseFloat((selfFraction.input as HTMLInputElement).value),
        reweight: {},
      },
      sampler: {
        steps: specs.steps,
        guidance: parseFloat((guidance.input as HTMLInputElement).value),
        inversion_guidance: parseFloat((inversionGuidance.input as HTMLInputElement).value),
        seed: parseInt((seed.input as HTMLInputElement).value, 10),
      },
      start_iteration: parseInt((startIteration.input as HTMLInputElement).value, 10),
    };
    const maskPromptValue = (maskPrompt.input as HTMLInputElement).value.trim();
    if (maskPromptValue) {
      payload.mask_prompt = maskPromptValue;
    }
    const acceptedMask = maskPanel()?.acceptedMaskB64();
    if (acceptedMask) {
      payload.mask_b64 = acceptedMask;
    }
    const adapterValue = (adapterRef.input as HTMLInputElement).value.trim();
    if (adapterValue) {
      payload.adapter = {
        ref: adapterValue,
        scale: parseFloat((adapterScale.input as HTMLInputElement).value),
      };
    }
    return payload;
  }

  submitButton.addEventListener('click', async () => {
    clearFieldErrors();
    banner.className = 'banner';
    banner.textContent = '';
    if (pollTimer) {
      clearTimeout(pollTimer);
      pollTimer = null;
    }
    const payload = buildPayload();
    if (!payload) {
      return;
    }
    try {
      const { jobId, duplicate } = await api.submitEdit(payload);
      banner.textContent = duplicate
        ? `identical request already in flight; following job ${jobId}`
        : `job ${jobId} queued`;
      poll(jobId, payload.image_b64);
    } catch (error) {
      if (error instanceof ApiError) {
        surfaceError(error);
      } else {
        banner.textContent = (error as Error).message;
        banner.classList.add('warn');
      }
    }
  });

  function loadFromRecord(record: JobRecord): void {
    const request = record.request ?? {};
    const read = (key: string): any => (request as any)[key];
    if (read('source_prompt')) {
      (sourcePrompt.input as HTMLInputElement).value = read('source_prompt');
    }
    if (read('target_prompt')) {
      (targetPrompt.input as HTMLInputElement).value = read('target_prompt');
    }
    (maskPrompt.input as HTMLInputElement).value = read('mask_prompt') ?? '';
    const p2p = read('p2p');
    if (p2p) {
      modeSelect.value = p2p.edit_type ?? 'replace';
      (crossFraction.input as HTMLInputElement).value =
        String(p2p.cross_replace_fraction ?? 0.8);
      (selfFraction.input as HTMLInputElement).value =
        String(p2p.self_replace_fraction ?? 0.4);
    }
    const sampler = read('sampler');
    let steps = 50;
    if (sampler) {
      steps = sampler.steps ?? 50;
      (seed.input as HTMLInputElement).value = String(sampler.seed ?? 0);
      (guidance.input as HTMLInputElement).value = String(sampler.guidance ?? 7.5);
      (inversionGuidance.input as HTMLInputElement).value =
        String(sampler.inversion_guidance ?? 1.0);
    }
    (startIteration.input as HTMLInputElement).value =
      String(read('start_iteration') ?? 0);
    const attention = read('attention_schedule');
    const latent = read('latent_schedule');
    curves.setSpecs(
      attention ?? { start: 0.7, end: 0.1, until: 50, type: 'logistic' },
      latent ?? { start: 0.6, end: 0.0, until: 10, type: 'stepped' },
      steps,
    );
    const adapter = read('adapter');
    if (adapter) {
      (adapterRef.input as HTMLInputElement).value = adapter.ref ?? '';
      (adapterScale.input as HTMLInputElement).value = String(adapter.scale ?? 1.0);
    } else {
      (adapterRef.input as HTMLInputElement).value = '';
    }
    banner.textContent = `loaded settings from job ${record.job_id}`;
  }

  return {
    element,
    loadFromRecord,
    getImageB64: () => imageB64,
    getMaskPrompt: () => (maskPrompt.input as HTMLInputElement).value,
  };
}
