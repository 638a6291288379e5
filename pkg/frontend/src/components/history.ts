/**
 * Run history and trade-off explorer.
 *
 * Lists past runs from the server and scatters their (lpips, clip) metric
 * pairs; clicking a row or a scatter point loads that run's configuration
 * back into the workbench for the next what-if iteration.
 */

import { ApiClient, JobRecord } from '../api';

export interface HistoryPanel {
  element: HTMLElement;
  refresh(): Promise<void>;
}

function drawScatter(canvas: HTMLCanvasElement, points: Array<{
  lpips: number; clip: number; record: JobRecord;
}>, onPick: (record: JobRecord) => void): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    return;
  }
  const { width, height } = canvas;
  const padding = 24;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = '#ccc';
  ctx.strokeRect(padding, padding, width - 2 * padding, height - 2 * padding);
  ctx.fillStyle = '#555';
  ctx.font = '10px sans-serif';
  ctx.fillText('lpips (lower = more faithful)', padding, height - 6);
  ctx.save();
  ctx.translate(10, height - padding);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText('clip (higher = stronger edit)', 0, 0);
  ctx.restore();

  if (!points.length) {
    return;
  }
  const ls = points.map((p) => p.lpips);
  const cs = points.map((p) => p.clip);
  const lMin = Math.min(...ls), lMax = Math.max(...ls);
  const cMin = Math.min(...cs), cMax = Math.max(...cs);
  const sx = (l: number) =>
    padding + ((width - 2 * padding) * (l - lMin)) / Math.max(1e-12, lMax - lMin);
  const sy = (c: number) =>
    height - padding - ((height - 2 * padding) * (c - cMin)) / Math.max(1e-12, cMax - cMin);

  const hit: Array<{ x: number; y: number; record: JobRecord }> = [];
  for (const p of points) {
    const x = sx(p.lpips);
    const y = sy(p.clip);
    ctx.beginPath();
    ctx.fillStyle = '#2266cc';
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
    hit.push({ x, y, record: p.record });
  }
  canvas.onclick = (event) => {
    const rect = canvas.getBoundingClientRect();
    const x = event.clientX - rect.left;
    const y = event.clientY - rect.top;
    for (const h of hit) {
      if ((h.x - x) ** 2 + (h.y - y) ** 2 <= 36) {
        onPick(h.record);
        return;
      }
    }
  };
}

export function createHistoryPanel(api: ApiClient,
                                   onPick: (record: JobRecord) => void): HistoryPanel {
  const element = document.createElement('section');
  element.className = 'panel history-panel';
  const heading = document.createElement('h3');
  heading.textContent = 'Run history';
  element.appendChild(heading);

  const refreshButton = document.createElement('button');
  refreshButton.type = 'button';
  refreshButton.textContent = 'Refresh';
  element.appendChild(refreshButton);

  const emptyState = document.createElement('div');
  emptyState.className = 'empty-state';
  emptyState.textContent = 'no runs yet - submit an edit to populate the history';
  element.appendChild(emptyState);

  const table = document.createElement('table');
  table.className = 'runs-table';
  const head = document.createElement('tr');
  for (const column of ['job', 'state', 'lpips', 'clip', '']) {
    const th = document.createElement('th');
    th.textContent = column;
    head.appendChild(th);
  }
  table.appendChild(head);
  element.appendChild(table);

  const scatter = document.createElement('canvas');
  scatter.width = 420;
  scatter.height = 220;
  scatter.className = 'tradeoff-scatter';
  element.appendChild(scatter);

  async function refresh(): Promise<void> {
    const { runs } = await api.listRuns(100, 0);
    table.replaceChildren(head);
    emptyState.hidden = runs.length > 0;

    const points: Array<{ lpips: number; clip: number; record: JobRecord }> = [];
    for (const record of runs) {
      const row = document.createElement('tr');
      const id = document.createElement('td');
      id.textContent = record.job_id.slice(0, 12);
      const state = document.createElement('td');
      state.textContent = record.state;
      const lpips = document.createElement('td');
      const clip = document.createElement('td');
      if (record.metrics) {
        lpips.textContent = record.metrics.lpips?.toFixed(4) ?? 'n/a';
        clip.textContent = record.metrics.clip?.toFixed(4) ?? 'n/a';
        if (record.metrics.lpips != null && record.metrics.clip != null) {
          points.push({
            lpips: record.metrics.lpips,
            clip: record.metrics.clip,
            record,
          });
        }
      }
      const actions = document.createElement('td');
      const loadButton = document.createElement('button');
      loadButton.type = 'button';
      loadButton.textContent = 'load';
      loadButton.addEventListener('click', () => onPick(record));
      actions.appendChild(loadButton);
      row.append(id, state, lpips, clip, actions);
      table.appendChild(row);
    }
    drawScatter(scatter, points, onPick);
  }

  refreshButton.addEventListener('click', () => void refresh());
  return { element, refresh };
}
