/**
 * Scenario composer model: policy-change drafts, client-side validation
 * (so malformed edits never reach the API), and chart-ready projections
 * built from the API's daily series without resampling.
 */

import { DailySeries, ScheduleEntry, ScenarioRequest } from './api';

export const POLICY_CLASSES = [
  'NoMeasure',
  'RestrictMassGatherings',
  'RestrictOthers',
  'AuthorizeSchoolsRestrictMGAndOthers',
  'RestrictMGAndSchools',
  'RestrictMGSchoolsAndOthers',
  'StayAtHome',
] as const;

export interface ScenarioDraft {
  regionId: string;
  startDate: string; // ISO date of the fitted series origin
  entries: ScheduleEntry[];
  transitionDays: number;
  horizon: number;
}

export interface DraftError {
  entryIndex: number | null; // null: draft-level problem
  message: string;
}

const ISO_DATE = /^\d{4}-\d{2}-\d{2}$/;

function dayOffset(draft: ScenarioDraft, iso: string): number {
  return Math.round((Date.parse(iso) - Date.parse(draft.startDate)) / 86400000);
}

/**
 * Client-side invariants: entries date-sorted, at most one per date, all
 * within the horizon, policies from the taxonomy. Returns [] when the
 * draft may be submitted.
 */
export function validateDraft(draft: ScenarioDraft): DraftError[] {
  const errors: DraftError[] = [];
  if (draft.horizon <= 0) {
    errors.push({ entryIndex: null, message: 'horizon must be positive' });
  }
  draft.entries.forEach((entry, i) => {
    if (!ISO_DATE.test(entry.date) || Number.isNaN(Date.parse(entry.date))) {
      errors.push({ entryIndex: i, message: `invalid date "${entry.date}"` });
      return;
    }
    if (!(POLICY_CLASSES as readonly string[]).includes(entry.policy)) {
      errors.push({ entryIndex: i, message: `unknown policy "${entry.policy}"` });
    }
    if (i > 0 && ISO_DATE.test(draft.entries[i - 1].date)) {
      if (Date.parse(entry.date) <= Date.parse(draft.entries[i - 1].date)) {
        errors.push({ entryIndex: i, message: 'dates must be strictly increasing' });
      }
    }
    if (dayOffset(draft, entry.date) > draft.horizon) {
      errors.push({ entryIndex: i, message: 'change falls outside the horizon' });
    }
  });
  return errors;
}

/** Build the POST body; callers must have validated the draft first. */
export function toRequest(draft: ScenarioDraft, runId: string): ScenarioRequest {
  return {
    region_id: draft.regionId,
    run_id: runId,
    schedule: draft.entries,
    horizon: draft.horizon,
    transition_days: draft.transitionDays,
  };
}

export interface Slot {
  id: string;
  label: string;
  draft: ScenarioDraft;
  series: DailySeries | null; // last delivered API response
  error: string | null;
}

export const MAX_SLOTS = 4;

/** Slots are independent: removing one never mutates the others. */
export function removeSlot(slots: Slot[], id: string): Slot[] {
  return slots.filter((s) => s.id !== id);
}

export function terminalValue(series: DailySeries, key: keyof Omit<DailySeries, 'day'>): number {
  const col = series[key];
  return col[col.length - 1];
}

export interface SlotDelta {
  slotId: string;
  label: string;
  terminalCases: number;
  terminalDeaths: number;
  casesVsFirst: number; // cumulative-at-horizon delta against the first slot
  deathsVsFirst: number;
}

/** Cumulative-at-horizon comparison across slots that have responses. */
export function slotDeltas(slots: Slot[]): SlotDelta[] {
  const live = slots.filter((s) => s.series !== null);
  if (live.length === 0) return [];
  const base = live[0].series as DailySeries;
  return live.map((s) => {
    const series = s.series as DailySeries;
    return {
      slotId: s.id,
      label: s.label,
      terminalCases: terminalValue(series, 'detected_cases'),
      terminalDeaths: terminalValue(series, 'detected_deaths'),
      casesVsFirst: terminalValue(series, 'detected_cases') - terminalValue(base, 'detected_cases'),
      deathsVsFirst: terminalValue(series, 'detected_deaths') - terminalValue(base, 'detected_deaths'),
    };
  });
}

/**
 * Slot ids ordered by cumulative cases at the horizon, highest first —
 * the order the overlay legend lists curves in.
 */
export function curveOrder(slots: Slot[]): string[] {
  return slots
    .filter((s) => s.series !== null)
    .sort((a, b) => terminalValue(b.series as DailySeries, 'detected_cases')
      - terminalValue(a.series as DailySeries, 'detected_cases'))
    .map((s) => s.id);
}

/**
 * SVG polyline points for one series column, scaled to the viewport. All
 * slots share yMax so overlaid curves are comparable; the API's daily grid
 * is used as-is (no client-side resampling).
 */
export function toPolylinePoints(series: DailySeries, key: keyof Omit<DailySeries, 'day'>,
                                 width: number, height: number, yMax: number): string {
  const col = series[key];
  const xSpan = Math.max(series.day[series.day.length - 1], 1);
  return series.day
    .map((d, i) => `${((d / xSpan) * width).toFixed(2)},${(height - (col[i] / yMax) * height).toFixed(2)}`)
    .join(' ');
}

export function sharedYMax(slots: Slot[], key: keyof Omit<DailySeries, 'day'>): number {
  let max = 0;
  for (const s of slots) {
    if (!s.series) continue;
    for (const v of s.series[key]) max = Math.max(max, v);
  }
  return max || 1;
}
