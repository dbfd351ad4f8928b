/** DOM rendering: one render pass per state change. */

import { imageUrl } from './api';
import { Session, SessionView } from './session';

export function mount(root: HTMLElement, session: Session): void {
  root.innerHTML = `
    <header>
      <h1>chromatix</h1>
      <p class="tagline">Pick a reference, steer the colors.</p>
    </header>
    <div id="banner" class="banner" hidden></div>
    <section class="upload">
      <label>Grayscale target (PNG)
        <input id="target-file" type="file" accept="image/png" />
      </label>
      <label>Or use your own reference
        <input id="reference-file" type="file" accept="image/png" />
      </label>
    </section>
    <section id="gallery" class="gallery" hidden>
      <h2>Recommended references</h2>
      <div id="gallery-items" class="gallery-items"></div>
    </section>
    <section id="job" class="job" hidden></section>
    <section id="viewer" class="viewer" hidden>
      <h2>Result</h2>
      <div class="panes">
        <figure>
          <img id="viewer-target" alt="target" />
          <figcaption>target</figcaption>
        </figure>
        <figure>
          <img id="viewer-result" alt="result" />
          <figcaption>colorized
            <img id="viewer-reference" class="inset" alt="reference" />
          </figcaption>
        </figure>
      </div>
      <div id="history" class="history"></div>
    </section>
  `;

  const targetInput = root.querySelector<HTMLInputElement>('#target-file')!;
  targetInput.addEventListener('change', () => {
    const file = targetInput.files?.[0];
    if (file) void session.uploadAndRecommend(file);
  });

  const referenceInput =
    root.querySelector<HTMLInputElement>('#reference-file')!;
  referenceInput.addEventListener('change', async () => {
    const file = referenceInput.files?.[0];
    if (!file) return;
    const id = await session.uploadReference(file);
    if (id) void session.pickAndColorize(id);
  });

  session.subscribe((view) => render(root, session, view));
}

function render(root: HTMLElement, session: Session, view: SessionView): void {
  const banner = root.querySelector<HTMLElement>('#banner')!;
  banner.hidden = !view.banner;
  banner.textContent = view.banner ?? '';
  if (view.banner) {
    const retry = document.createElement('button');
    retry.textContent = 'Retry';
    retry.addEventListener('click', () => {
      if (view.targetId) void session.openTarget(view.targetId);
    });
    if (view.targetId) banner.appendChild(retry);
  }

  const gallery = root.querySelector<HTMLElement>('#gallery')!;
  const items = root.querySelector<HTMLElement>('#gallery-items')!;
  gallery.hidden = view.recommendations.length === 0;
  items.innerHTML = '';
  for (const rec of view.recommendations) {
    const card = document.createElement('button');
    card.className = 'card';
    card.dataset.referenceId = rec.reference_id;
    const img = document.createElement('img');
    img.src = rec.thumb ?? imageUrl(rec.reference_id);
    img.alt = rec.reference_id;
    const score = document.createElement('span');
    score.className = 'score';
    score.textContent = rec.score.toFixed(3);
    card.append(img, score);
    card.addEventListener('click', () =>
      void session.pickAndColorize(rec.reference_id),
    );
    items.appendChild(card);
  }

  const job = root.querySelector<HTMLElement>('#job')!;
  job.hidden = view.jobState === 'idle';
  if (view.jobState === 'failed') {
    job.textContent = `Colorization failed: ${view.jobError ?? ''}`;
    job.className = 'job failed';
  } else if (view.jobState !== 'idle') {
    job.textContent =
      view.jobState === 'done' ? 'Done.' : `Working (${view.jobState})...`;
    job.className = 'job';
  }

  const viewer = root.querySelector<HTMLElement>('#viewer')!;
  const url = session.resultUrl();
  viewer.hidden = url === null;
  if (url !== null && view.viewing !== null && view.targetId) {
    root.querySelector<HTMLImageElement>('#viewer-target')!.src =
      imageUrl(view.targetId);
    root.querySelector<HTMLImageElement>('#viewer-result')!.src = url;
    root.querySelector<HTMLImageElement>('#viewer-reference')!.src =
      imageUrl(view.history[view.viewing].referenceId);
  }

  const history = root.querySelector<HTMLElement>('#history')!;
  history.innerHTML = '';
  view.history.forEach((attempt, i) => {
    const chip = document.createElement('button');
    chip.className = 'chip' + (view.viewing === i ? ' active' : '');
    chip.textContent = `attempt ${i + 1}`;
    chip.dataset.resultId = attempt.resultId;
    chip.addEventListener('click', () => session.viewAttempt(i));
    history.appendChild(chip);
  });
}
