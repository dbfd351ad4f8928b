/**
 * Session state machine for the steering loop: upload a target, review
 * recommendations, pick a reference, watch the job, compare results,
 * iterate.
 *
 * The state is derivable from API responses alone; ids live in the URL
 * so a reload reconstructs the same view. At most one colorize job is
 * in flight per session, and poll responses for superseded jobs are
 * discarded.
 */

import {
  ApiError,
  fetchJob,
  fetchRecommendations,
  imageUrl,
  Recommendation,
  startColorize,
  uploadImage,
} from './api';

export interface Attempt {
  referenceId: string;
  resultId: string;
}

export interface SessionView {
  targetId: string | null;
  recommendations: Recommendation[];
  selectedReference: string | null;
  jobState: 'idle' | 'queued' | 'running' | 'done' | 'failed';
  jobError: string | null;
  /** Append-only record of completed attempts. */
  history: Attempt[];
  /** Index into history currently shown in the viewer. */
  viewing: number | null;
  banner: string | null;
}

export type Listener = (view: SessionView) => void;

const POLL_INTERVAL_MS = 1_000;

export class Session {
  private view: SessionView = {
    targetId: null,
    recommendations: [],
    selectedReference: null,
    jobState: 'idle',
    jobError: null,
    history: [],
    viewing: null,
    banner: null,
  };

  private listeners: Listener[] = [];
  private jobSerial = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private pollIntervalMs: number = POLL_INTERVAL_MS) {}

  current(): SessionView {
    return { ...this.view, recommendations: [...this.view.recommendations],
             history: [...this.view.history] };
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
    fn(this.current());
  }

  private update(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    for (const fn of this.listeners) fn(this.current());
  }

  /** Upload a target and fetch its gallery. Non-PNG files are rejected
   * before any request is made. */
  async uploadAndRecommend(file: Blob & { type?: string }): Promise<void> {
    if (file.type && file.type !== 'image/png') {
      this.update({ banner: 'Please choose a PNG file.' });
      return;
    }
    this.update({ banner: null });
    let targetId: string;
    try {
      targetId = await uploadImage(file);
    } catch (e) {
      this.update({ banner: `Upload failed: ${describe(e)}` });
      return;
    }
    await this.openTarget(targetId);
  }

  /** Load recommendations for an already-uploaded target (also the
   * reload path when the id comes from the URL). */
  async openTarget(targetId: string): Promise<void> {
    this.update({
      targetId,
      recommendations: [],
      selectedReference: null,
      jobState: 'idle',
      jobError: null,
      viewing: null,
      banner: null,
    });
    try {
      const recommendations = await fetchRecommendations(targetId, 5);
      this.update({ recommendations });
    } catch (e) {
      const message =
        e instanceof ApiError && e.status === 503
          ? `No reference index is loaded: ${e.message}`
          : `Could not fetch recommendations: ${describe(e)}`;
      this.update({ banner: message, recommendations: [] });
    }
  }

  /** Upload a user-supplied reference; it joins the session without
   * touching the recommender. */
  async uploadReference(file: Blob & { type?: string }): Promise<string | null> {
    if (file.type && file.type !== 'image/png') {
      this.update({ banner: 'Please choose a PNG file.' });
      return null;
    }
    try {
      return await uploadImage(file);
    } catch (e) {
      this.update({ banner: `Upload failed: ${describe(e)}` });
      return null;
    }
  }

  /** Start one colorization with the chosen reference and poll it to a
   * terminal state. A newer pick supersedes the poll loop of an older
   * one; stale responses never reach the view. */
  async pickAndColorize(referenceId: string): Promise<void> {
    if (!this.view.targetId) {
      this.update({ banner: 'Upload a target first.' });
      return;
    }
    const serial = ++this.jobSerial;
    if (this.timer) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.update({
      selectedReference: referenceId,
      jobState: 'queued',
      jobError: null,
    });
    let jobId: string;
    try {
      jobId = await startColorize(this.view.targetId, referenceId);
    } catch (e) {
      if (serial === this.jobSerial)
        this.update({ jobState: 'failed', jobError: describe(e) });
      return;
    }
    await this.pollJob(jobId, referenceId, serial);
  }

  private async pollJob(
    jobId: string,
    referenceId: string,
    serial: number,
  ): Promise<void> {
    let status;
    try {
      status = await fetchJob(jobId);
    } catch (e) {
      if (serial === this.jobSerial)
        this.update({ jobState: 'failed', jobError: describe(e) });
      return;
    }
    if (serial !== this.jobSerial) return; // superseded pick
    if (status.state === 'done' && status.result_id) {
      const history = [
        ...this.view.history,
        { referenceId, resultId: status.result_id },
      ];
      this.update({ jobState: 'done', history, viewing: history.length - 1 });
      return;
    }
    if (status.state === 'failed') {
      this.update({ jobState: 'failed', jobError: status.error ?? 'failed' });
      return;
    }
    this.update({ jobState: status.state });
    await new Promise<void>((resolve) => {
      this.timer = setTimeout(resolve, this.pollIntervalMs);
    });
    await this.pollJob(jobId, referenceId, serial);
  }

  /** Show an earlier attempt in the viewer. */
  viewAttempt(index: number): void {
    if (index >= 0 && index < this.view.history.length)
      this.update({ viewing: index });
  }

  resultUrl(): string | null {
    const i = this.view.viewing;
    if (i === null) return null;
    return imageUrl(this.view.history[i].resultId);
  }
}

function describe(e: unknown): string {
  if (e instanceof ApiError) return e.message;
  if (e instanceof Error) return e.message;
  return String(e);
}
