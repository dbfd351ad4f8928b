/** Typed client for the colorization service API. */

export interface Recommendation {
  reference_id: string;
  score: number;
  thumb: string | null;
}

export interface JobStatus {
  state: 'queued' | 'running' | 'done' | 'failed';
  result_id?: string;
  error?: string;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let message = `${res.status}`;
  try {
    const body = await res.json();
    if (body && typeof body.error === 'string') message = body.error;
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(res.status, message);
}

export async function uploadImage(data: Blob): Promise<string> {
  const res = await fetch('/api/images', {
    method: 'POST',
    headers: { 'Content-Type': 'image/png' },
    body: data,
  });
  if (!res.ok) throw await parseError(res);
  const body = await res.json();
  return body.image_id as string;
}

export async function fetchRecommendations(
  imageId: string,
  k = 5,
): Promise<Recommendation[]> {
  const res = await fetch(`/api/recommendations/${imageId}?k=${k}`);
  if (!res.ok) throw await parseError(res);
  return (await res.json()) as Recommendation[];
}

export async function startColorize(
  targetId: string,
  referenceId: string,
): Promise<string> {
  const res = await fetch('/api/colorize', {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify({ target_id: targetId, reference_id: referenceId }),
  });
  if (!res.ok) throw await parseError(res);
  const body = await res.json();
  return body.job_id as string;
}

export async function fetchJob(jobId: string): Promise<JobStatus> {
  const res = await fetch(`/api/jobs/${jobId}`);
  if (!res.ok) throw await parseError(res);
  return (await res.json()) as JobStatus;
}

export function imageUrl(imageId: string): string {
  return `/api/images/${imageId}.png`;
}
