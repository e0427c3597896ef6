import { ApiClient } from './api.js';
import { AppState, ReviewController, canFinalize, keyToVerdict } from './store.js';
import { drawThumb } from './thumbs.js';
import { CLASS_COLORS, CLASS_NAMES, ClassCode, QueueItem } from './types.js';

const api = new ApiClient();
const reviewer =
  new URLSearchParams(window.location.search).get('reviewer') ?? 'reviewer';

const tabsEl = document.getElementById('tabs')!;
const queueEl = document.getElementById('queue')!;
const progressEl = document.getElementById('progress')!;
const bannerEl = document.getElementById('banner')!;
const toastEl = document.getElementById('toast')!;
const finalizeBtn = document.getElementById('finalize') as HTMLButtonElement;
const forceToggle = document.getElementById('force') as HTMLInputElement;
const downloadEl = document.getElementById('download')!;

const controller = new ReviewController(api, reviewer, render);

function fmt(x: number): string {
  return x.toPrecision(3);
}

function renderTabs(state: AppState): void {
  tabsEl.innerHTML = '';
  for (const cls of [0, 1, 2] as ClassCode[]) {
    const btn = document.createElement('button');
    btn.className = 'tab' + (state.activeClass === cls ? ' active' : '');
    btn.style.borderBottomColor = CLASS_COLORS[cls];
    btn.textContent = `${CLASS_NAMES[cls]} (${state.queues[cls].length})`;
    btn.onclick = () => controller.setActiveClass(cls);
    tabsEl.appendChild(btn);
  }
}

function verdictControls(item: QueueItem): HTMLElement {
  const row = document.createElement('div');
  row.className = 'controls';
  const mk = (label: string, handler: () => void, cssClass: string) => {
    const b = document.createElement('button');
    b.textContent = label;
    b.className = cssClass;
    b.onclick = handler;
    row.appendChild(b);
  };
  mk('accept [A]', () => void controller.submitVerdict(item.video_id, 'accept'), 'ok');
  mk('reject [R]', () => void controller.submitVerdict(item.video_id, 'reject'), 'bad');
  for (const cls of [0, 1, 2] as ClassCode[]) {
    mk(
      `→ ${CLASS_NAMES[cls]} [${cls + 1}]`,
      () => void controller.submitVerdict(item.video_id, 'reassign', cls),
      'move',
    );
  }
  return row;
}

function renderItem(item: QueueItem): HTMLElement {
  const card = document.createElement('div');
  card.className = 'card';
  const title = document.createElement('h3');
  title.textContent = `#${item.within_class_rank}  ${item.video_id}`;
  title.style.color = CLASS_COLORS[item.label as ClassCode] ?? '#333';
  card.appendChild(title);

  const scores = document.createElement('p');
  scores.className = 'scores';
  scores.textContent =
    `S_s ${fmt(item.scores.spatial)}  ` +
    `S_a ${fmt(item.scores.appearance)}  ` +
    `S_m ${fmt(item.scores.motion)}  ` +
    `weight ${fmt(item.confidence)}`;
  card.appendChild(scores);

  const strip = document.createElement('div');
  strip.className = 'thumbs';
  for (const frame of item.thumb_frames) {
    const canvas = document.createElement('canvas');
    canvas.title = `${item.video_id} frame ${frame}`;
    strip.appendChild(canvas);
    api
      .fetchThumb(item.video_id, frame)
      .then((thumb) => drawThumb(canvas, thumb))
      .catch(() => canvas.classList.add('missing'));
  }
  card.appendChild(strip);
  card.appendChild(verdictControls(item));
  return card;
}

function renderQueue(state: AppState): void {
  queueEl.innerHTML = '';
  const queue = state.queues[state.activeClass];
  if (queue.length === 0) {
    const done = document.createElement('p');
    done.className = 'empty';
    done.textContent = 'queue empty';
    queueEl.appendChild(done);
    return;
  }
  queue.forEach((item, i) => {
    const card = renderItem(item);
    if (i === 0) {
      card.classList.add('focused');
    }
    queueEl.appendChild(card);
  });
}

function renderProgress(state: AppState): void {
  progressEl.innerHTML = '';
  if (!state.progress) {
    return;
  }
  for (const [code, cp] of Object.entries(state.progress.classes)) {
    const row = document.createElement('div');
    row.className = 'progress-row';
    const swatch = document.createElement('span');
    swatch.className = 'swatch';
    swatch.style.background = CLASS_COLORS[Number(code) as ClassCode];
    row.appendChild(swatch);
    const text = document.createElement('span');
    text.textContent = `${cp.class_name}: ${cp.reviewed}/${cp.total} reviewed, ${cp.pending} pending`;
    row.appendChild(text);
    progressEl.appendChild(row);
  }
  finalizeBtn.disabled = !(canFinalize(state.progress) || forceToggle.checked);
}

function renderFinalized(state: AppState): void {
  downloadEl.innerHTML = '';
  if (!state.finalized) {
    return;
  }
  const blob = new Blob([JSON.stringify(state.finalized.manifest, null, 2)], {
    type: 'application/json',
  });
  const link = document.createElement('a');
  link.href = URL.createObjectURL(blob);
  link.download = `split_${state.finalized.manifest.cohort_id}.json`;
  link.textContent = 'download split manifest';
  downloadEl.appendChild(link);
}

function render(state: AppState): void {
  renderTabs(state);
  renderQueue(state);
  renderProgress(state);
  renderFinalized(state);
  bannerEl.querySelector('span')!.textContent = state.banner ?? '';
  bannerEl.classList.toggle('visible', state.banner !== null);
  toastEl.textContent = state.toast ?? '';
  toastEl.classList.toggle('visible', state.toast !== null);
}

document.getElementById('retry')!.onclick = () => void controller.refreshAll();
forceToggle.onchange = () => render(controller.state);
finalizeBtn.onclick = () => {
  const force = forceToggle.checked;
  const pending = controller.state.progress?.pending_total ?? 0;
  if (force && pending > 0) {
    const sure = window.confirm(
      `${pending} videos are still pending review; finalize anyway?`,
    );
    if (!sure) {
      return;
    }
  }
  void controller.finalize(force);
};

window.addEventListener('keydown', (ev) => {
  if (ev.target instanceof HTMLInputElement) {
    return;
  }
  const mapped = keyToVerdict(ev.key);
  if (mapped) {
    void controller.submitTop(mapped.verdict, mapped.reassignTo);
  }
});

void controller.refreshAll();
