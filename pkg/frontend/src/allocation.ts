/**
 * Allocation explorer model: per-day transfer table rows and Pareto
 * frontier points, both straight projections of API payloads.
 */

import { AllocationPlan, FrontierPoint, Transfer } from './api';

export interface TransferRow {
  day: number;
  from: string;
  to: string;
  units: number;
}

/** Table rows in (day, from, to) order — the order the API reports. */
export function transferTable(plan: AllocationPlan): TransferRow[] {
  return plan.transfers.map((t: Transfer) => ({
    day: t.day, from: t.from, to: t.to, units: t.units,
  }));
}

export interface PlanSummary {
  shortage: number;
  worstShortage: number;
  distance: number;
  federalUsed: number;
}

export function planSummary(plan: AllocationPlan): PlanSummary {
  let federalUsed = 0;
  for (const row of Object.values(plan.federal)) {
    for (const v of row) federalUsed += v;
  }
  return {
    shortage: plan.shortage,
    worstShortage: plan.worst_shortage,
    distance: plan.objective_breakdown.transfer_distance ?? 0,
    federalUsed,
  };
}

/**
 * Frontier points for the shortage-vs-distance chart, one series per rho,
 * each sorted by distance. With a single rho the chart collapses to that
 * rho's nondominated points (at rho = 0, the baseline shortage point).
 */
export function frontierSeries(points: FrontierPoint[]): Map<number, FrontierPoint[]> {
  const byRho = new Map<number, FrontierPoint[]>();
  for (const p of points) {
    const bucket = byRho.get(p.rho) ?? [];
    bucket.push(p);
    byRho.set(p.rho, bucket);
  }
  for (const bucket of byRho.values()) {
    bucket.sort((a, b) => a.distance - b.distance);
  }
  return byRho;
}

/** Minimum shortage per rho, ascending in rho — nonincreasing by the
 * solver's pooling property, which the explorer displays as a check. */
export function minShortageByRho(points: FrontierPoint[]): Array<{ rho: number; shortage: number }> {
  const best = new Map<number, number>();
  for (const p of points) {
    best.set(p.rho, Math.min(best.get(p.rho) ?? Infinity, p.shortage));
  }
  return [...best.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([rho, shortage]) => ({ rho, shortage }));
}
