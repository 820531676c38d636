/**
 * Allocation explorer: transfer table against the shared oracle plan
 * fixture, plan summary, and frontier helpers.
 */

import { describe, expect, it, vi, afterEach } from 'vitest';
import { readFileSync } from 'node:fs';
import { join } from 'node:path';

import { AllocationPlan, ApiClient, FrontierPoint } from '../src/api';
import { frontierSeries, minShortageByRho, planSummary, transferTable } from '../src/allocation';

const plan: AllocationPlan = JSON.parse(
  readFileSync(join(__dirname, 'fixtures', 'alloc_oracle_plan.json'), 'utf8'));

afterEach(() => vi.unstubAllGlobals());

describe('transfer table', () => {
  it('matches the oracle fixture plan exactly', () => {
    expect(transferTable(plan)).toEqual([
      { day: 1, from: 'alpha', to: 'beta', units: 2 },
    ]);
  });

  it('summarizes shortage, worst-case, distance, and federal use', () => {
    const s = planSummary(plan);
    expect(s.shortage).toBe(plan.shortage);
    expect(s.worstShortage).toBe(plan.worst_shortage);
    expect(s.distance).toBe(plan.objective_breakdown.transfer_distance);
    expect(s.federalUsed).toBe(
      Object.values(plan.federal).flat().reduce((a, b) => a + b, 0));
  });
});

describe('frontier helpers', () => {
  const points: FrontierPoint[] = [
    { rho: 0, w_short: 1e6, w_dist: 1, shortage: 9, worst_shortage: 4, distance: 0 },
    { rho: 0.1, w_short: 1e6, w_dist: 1, shortage: 3, worst_shortage: 2, distance: 150 },
    { rho: 0.1, w_short: 1e6, w_dist: 10, shortage: 4, worst_shortage: 2, distance: 90 },
    { rho: 0.2, w_short: 1e6, w_dist: 1, shortage: 0, worst_shortage: 0, distance: 260 },
  ];

  it('collapses to the baseline shortage point at rho = 0', () => {
    const base = frontierSeries(points).get(0)!;
    expect(base).toHaveLength(1);
    expect(base[0].distance).toBe(0);
  });

  it('groups by rho and sorts each series by distance', () => {
    const series = frontierSeries(points);
    expect([...series.keys()]).toEqual([0, 0.1, 0.2]);
    expect(series.get(0.1)!.map((p) => p.distance)).toEqual([90, 150]);
  });

  it('min shortage per rho is nonincreasing on solver output', () => {
    const mins = minShortageByRho(points).map((m) => m.shortage);
    expect(mins).toEqual([9, 3, 0]);
    for (let i = 1; i < mins.length; i += 1) {
      expect(mins[i]).toBeLessThanOrEqual(mins[i - 1]);
    }
  });
});

describe('allocate requests', () => {
  it('posts the problem and returns the parsed plan', async () => {
    const fetchMock = vi.fn(async () =>
      new Response(JSON.stringify({ run_id: 'r', cached: false, plan }), { status: 200 }));
    vi.stubGlobal('fetch', fetchMock);
    const resp = await new ApiClient().allocate({ region_ids: plan.region_ids });
    expect(fetchMock).toHaveBeenCalledWith('/v1/allocate', expect.anything());
    expect(resp.plan.objective).toBe(plan.objective);
  });

  it('propagates 400s from malformed problems', async () => {
    vi.stubGlobal('fetch', vi.fn(async () =>
      new Response(JSON.stringify({ detail: 'demand shape mismatch' }), { status: 400 })));
    await expect(new ApiClient().allocate({})).rejects.toMatchObject({ status: 400 });
  });
});
