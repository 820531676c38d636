/**
 * Thin typed client for the epiops /v1 API plus the request plumbing the
 * views share: a debounce helper for slider-driven edits and a per-slot
 * requester that discards stale responses by sequence number.
 *
 * Every number rendered in the UI comes from these responses; the client
 * never recomputes model math locally.
 */

export interface DailySeries {
  day: number[];
  detected_cases: number[];
  detected_deaths: number[];
  hospitalized: number[];
}

export interface ScheduleEntry {
  date: string; // ISO date
  policy: string; // one of the seven policy classes
}

export interface ScenarioRequest {
  region_id: string;
  run_id: string;
  schedule: ScheduleEntry[];
  horizon?: number;
  transition_days?: number;
  tree_max_depth?: number;
  tree_min_leaf?: number;
}

export interface ScenarioResponse {
  run_id: string;
  cached: boolean;
  series: DailySeries;
}

export interface Transfer {
  day: number;
  from: string;
  to: string;
  units: number;
}

export interface AllocationPlan {
  region_ids: string[];
  transfers: Transfer[];
  federal: Record<string, number[]>;
  inventory: Record<string, number[]>;
  shortage: number;
  worst_shortage: number;
  objective_breakdown: Record<string, number>;
  objective: number;
}

export interface FrontierPoint {
  rho: number;
  w_short: number;
  w_dist: number;
  shortage: number;
  worst_shortage: number;
  distance: number;
}

export interface AggregateCell {
  attribute: string;
  subpopulation: string;
  n_cohorts: number;
  n_reporting: number | null;
  n_positive: number | null;
  prevalence: number | null;
  suppressed: boolean;
  no_data: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function postJson<T>(url: string, body: unknown): Promise<T> {
  const resp = await fetch(url, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(body),
  });
  const payload = await resp.json();
  if (!resp.ok) {
    throw new ApiError(resp.status, payload.detail ?? resp.statusText);
  }
  return payload as T;
}

export class ApiClient {
  constructor(private base: string = '') {}

  fit(config?: Record<string, unknown>): Promise<{ run_id: string; cached: boolean }> {
    return postJson(`${this.base}/v1/fit`, config ? { config } : {});
  }

  scenario(req: ScenarioRequest): Promise<ScenarioResponse> {
    return postJson(`${this.base}/v1/scenario`, req);
  }

  allocate(problem: unknown): Promise<{ run_id: string; plan: AllocationPlan }> {
    return postJson(`${this.base}/v1/allocate`, { problem });
  }

  allocateSweep(problem: unknown, rhoGrid: number[]): Promise<{ frontier: FrontierPoint[] }> {
    return postJson(`${this.base}/v1/allocate`, { problem, rho_sweep: rhoGrid });
  }

  async aggregates(attribute: string, filters?: { region?: string; severity?: string }): Promise<AggregateCell> {
    const params = new URLSearchParams({ attribute });
    if (filters?.region) params.set('region', filters.region);
    if (filters?.severity) params.set('severity', filters.severity);
    const resp = await fetch(`${this.base}/v1/aggregates?${params}`);
    const payload = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, payload.detail ?? resp.statusText);
    return payload as AggregateCell;
  }
}

/** Delay calls until `ms` of quiet; only the last pending call fires. */
export function debounce<A extends unknown[]>(fn: (...args: A) => void, ms: number): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => fn(...args), ms);
  };
}

/**
 * Serializes responses for one scenario slot (or one explorer panel).
 * Each issue() bumps a sequence number; a response is delivered only if no
 * newer request has been issued since, so slow replies can never overwrite
 * fresh ones.
 */
export class SlotRequester<T> {
  private seq = 0;

  async issue(request: () => Promise<T>, deliver: (value: T) => void,
              onError?: (err: unknown) => void): Promise<void> {
    const mine = ++this.seq;
    try {
      const value = await request();
      if (mine === this.seq) deliver(value);
    } catch (err) {
      if (mine === this.seq && onError) onError(err);
    }
  }
}
