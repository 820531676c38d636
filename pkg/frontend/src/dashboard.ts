/**
 * Descriptive dashboard model: prevalence bars from the aggregates
 * endpoint. Suppressed cells (small-cell privacy rule upstream) render as
 * an em dash, matching the CSV export convention.
 */

import { AggregateCell } from './api';

export const SUPPRESSED_MARK = '—'; // —

export function formatPrevalence(cell: AggregateCell): string {
  if (cell.suppressed || cell.prevalence === null) return SUPPRESSED_MARK;
  return `${(cell.prevalence * 100).toFixed(1)}%`;
}

export function formatCount(value: number | null, suppressed: boolean): string {
  if (suppressed || value === null) return SUPPRESSED_MARK;
  return String(value);
}

export interface PrevalenceBar {
  attribute: string;
  subpopulation: string;
  label: string; // "52.8%" or "—"
  fraction: number; // bar width in [0, 1]; 0 when suppressed
  suppressed: boolean;
}

export function toBar(cell: AggregateCell): PrevalenceBar {
  return {
    attribute: cell.attribute,
    subpopulation: cell.subpopulation,
    label: formatPrevalence(cell),
    fraction: cell.suppressed || cell.prevalence === null ? 0 : cell.prevalence,
    suppressed: cell.suppressed,
  };
}
