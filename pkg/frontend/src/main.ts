/**
 * lamsedit studio: wires the curve editor, workbench, mask panel, and run
 * history to the job service. The API base defaults to same-origin and can
 * be pointed elsewhere with ?api=http://host:port.
 */

import { ApiClient } from './api';
import { createCurveEditor } from './components/curveEditor';
import { createHistoryPanel } from './components/history';
import { createMaskPanel } from './components/maskPanel';
import { createWorkbench } from './components/workbench';

const apiBase = new URLSearchParams(window.location.search).get('api') ?? '';
const api = new ApiClient(apiBase);

const root = document.getElementById('app');
if (!root) {
  throw new Error('missing #app mount point');
}

const curves = createCurveEditor(api);
let maskPanelRef: ReturnType<typeof createMaskPanel> | null = null;
const workbench = createWorkbench(api, curves, () => maskPanelRef);
maskPanelRef = createMaskPanel(
  api,
  () => workbench.getImageB64(),
  () => workbench.getMaskPrompt(),
);
const history = createHistoryPanel(api, (record) => {
  workbench.loadFromRecord(record);
  window.scrollTo({ top: 0 });
});

const left = document.createElement('div');
left.className = 'column';
left.append(workbench.element, maskPanelRef.element);

const right = document.createElement('div');
right.className = 'column';
right.append(curves.element, history.element);

root.append(left, right);
void history.refresh();
