/**
 * Mask preview panel.
 *
 * Requests a segmentation mask for the current image and mask prompt, shows
 * it over the image at adjustable opacity, and lets the user accept it (the
 * accepted mask rides along with the next job submission) or discard and
 * retry with a different prompt.
 */

import { ApiClient } from '../api';

export interface MaskPanel {
  element: HTMLElement;
  /** Base64 PNG of the accepted mask, if the user accepted one. */
  acceptedMaskB64(): string | null;
  reset(): void;
}

async function blobToB64(blob: Blob): Promise<string> {
  const buffer = await blob.arrayBuffer();
  let binary = '';
  for (const byte of new Uint8Array(buffer)) {
    binary += String.fromCharCode(byte);
  }
  return btoa(binary);
}

export function createMaskPanel(
  api: ApiClient,
  getImageB64: () => string | null,
  getMaskPrompt: () => string,
): MaskPanel {
  const element = document.createElement('section');
  element.className = 'panel mask-panel';
  const heading = document.createElement('h3');
  heading.textContent = 'Mask preview';
  element.appendChild(heading);

  const banner = document.createElement('div');
  banner.className = 'banner';
  element.appendChild(banner);

  const stage = document.createElement('div');
  stage.className = 'mask-stage';
  const baseImg = document.createElement('img');
  baseImg.className = 'mask-base';
  baseImg.alt = 'input image';
  const overlayImg = document.createElement('img');
  overlayImg.className = 'mask-overlay';
  overlayImg.alt = 'mask overlay';
  overlayImg.style.opacity = '0.5';
  stage.append(baseImg, overlayImg);
  element.appendChild(stage);

  const opacityWrap = document.createElement('label');
  opacityWrap.className = 'field';
  opacityWrap.textContent = 'overlay opacity';
  const opacity = document.createElement('input');
  opacity.type = 'range';
  opacity.min = '0';
  opacity.max = '1';
  opacity.step = '0.05';
  opacity.value = '0.5';
  opacity.addEventListener('input', () => {
    overlayImg.style.opacity = opacity.value;
  });
  opacityWrap.appendChild(opacity);
  element.appendChild(opacityWrap);

  const buttons = document.createElement('div');
  buttons.className = 'button-row';
  const previewButton = document.createElement('button');
  previewButton.type = 'button';
  previewButton.textContent = 'Preview mask';
  const acceptButton = document.createElement('button');
  acceptButton.type = 'button';
  acceptButton.textContent = 'Accept';
  acceptButton.disabled = true;
  const redoButton = document.createElement('button');
  redoButton.type = 'button';
  redoButton.textContent = 'Discard';
  redoButton.disabled = true;
  buttons.append(previewButton, acceptButton, redoButton);
  element.appendChild(buttons);

  let pendingMaskB64: string | null = null;
  let accepted: string | null = null;

  async function preview(): Promise<void> {
    const imageB64 = getImageB64();
    const prompt = getMaskPrompt().trim();
    banner.className = 'banner';
    if (!imageB64) {
      banner.textContent = 'upload an image first';
      banner.classList.add('warn');
      return;
    }
    if (!prompt) {
      banner.textContent = 'enter a mask prompt first';
      banner.classList.add('warn');
      return;
    }
    banner.textContent = 'segmenting...';
    try {
      const { pngBlob, emptyMatch } = await api.maskPreview(imageB64, prompt);
      pendingMaskB64 = await blobToB64(pngBlob);
      baseImg.src = `data:image/png;base64,${imageB64}`;
      overlayImg.src = `data:image/png;base64,${pendingMaskB64}`;
      if (emptyMatch) {
        banner.textContent = `nothing matched "${prompt}" - the mask is empty`;
        banner.classList.add('warn');
      } else {
        banner.textContent = `mask for "${prompt}" ready`;
      }
      acceptButton.disabled = false;
      redoButton.disabled = false;
    } catch (error) {
      banner.textContent = `segmentation failed: ${(error as Error).message}`;
      banner.classList.add('warn');
    }
  }

  previewButton.addEventListener('click', () => void preview());
  acceptButton.addEventListener('click', () => {
    accepted = pendingMaskB64;
    banner.textContent = 'mask accepted; it will ride along with the next submission';
  });
  redoButton.addEventListener('click', () => {
    pendingMaskB64 = null;
    accepted = null;
    overlayImg.removeAttribute('src');
    acceptButton.disabled = true;
    redoButton.disabled = true;
    banner.textContent = 'mask discarded; adjust the prompt and preview again';
  });

  return {
    element,
    acceptedMaskB64: () => accepted,
    reset: () => {
      pendingMaskB64 = null;
      accepted = null;
      overlayImg.removeAttribute('src');
      acceptButton.disabled = true;
      redoButton.disabled = true;
      banner.textContent = '';
    },
  };
}
