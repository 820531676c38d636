/**
 * DOM wiring for the three views: scenario composer, allocation explorer,
 * descriptive dashboard. All state lives in this module; the testable
 * logic sits in scenario.ts / allocation.ts / dashboard.ts.
 */

import { ApiClient, DailySeries, SlotRequester, debounce } from './api';
import {
  MAX_SLOTS, Slot, curveOrder, removeSlot, sharedYMax, slotDeltas,
  toPolylinePoints, toRequest, validateDraft,
} from './scenario';
import { frontierSeries, minShortageByRho, planSummary, transferTable } from './allocation';
import { toBar } from './dashboard';

const api = new ApiClient('');
const SLOT_COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd'];

let runId: string | null = null;
let slots: Slot[] = [];
const requesters = new Map<string, SlotRequester<DailySeries>>();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function refreshSlot(slot: Slot): void {
  const errors = validateDraft(slot.draft);
  if (errors.length > 0 || runId === null) {
    slot.error = errors.map((e) => e.message).join('; ') || 'no fit run yet';
    renderScenario();
    return; // client-side invariant violated: no request sent
  }
  slot.error = null;
  let requester = requesters.get(slot.id);
  if (!requester) {
    requester = new SlotRequester<DailySeries>();
    requesters.set(slot.id, requester);
  }
  requester.issue(
    async () => (await api.scenario(toRequest(slot.draft, runId as string))).series,
    (series) => { slot.series = series; renderScenario(); },
    (err) => { slot.error = String(err); renderScenario(); },
  );
}

const refreshSlotDebounced = debounce(refreshSlot, 300);

function renderScenario(): void {
  const svg = el<HTMLElement>('scenario-chart');
  const yMax = sharedYMax(slots, 'detected_cases');
  const order = curveOrder(slots);
  svg.innerHTML = order
    .map((id) => {
      const slot = slots.find((s) => s.id === id) as Slot;
      const color = SLOT_COLORS[slots.indexOf(slot) % SLOT_COLORS.length];
      const points = toPolylinePoints(slot.series as DailySeries, 'detected_cases', 720, 360, yMax);
      return `<polyline fill="none" stroke="${color}" stroke-width="1.5" points="${points}"/>`;
    })
    .join('');

  el('scenario-deltas').innerHTML = slotDeltas(slots)
    .map((d) => `<tr><td>${d.label}</td><td>${d.terminalCases.toFixed(0)}</td>`
      + `<td>${d.casesVsFirst >= 0 ? '+' : ''}${d.casesVsFirst.toFixed(0)}</td></tr>`)
    .join('');

  el('scenario-errors').textContent = slots
    .filter((s) => s.error)
    .map((s) => `${s.label}: ${s.error}`)
    .join('\n');
}

function addSlot(label: string): void {
  if (slots.length >= MAX_SLOTS) return;
  const regionInput = el<HTMLInputElement>('region-id');
  const slot: Slot = {
    id: `slot-${Date.now()}-${slots.length}`,
    label,
    draft: {
      regionId: regionInput.value,
      startDate: el<HTMLInputElement>('start-date').value,
      entries: [],
      transitionDays: 10,
      horizon: 120,
    },
    series: null,
    error: null,
  };
  slots.push(slot);
  refreshSlot(slot);
}

function wireScenario(): void {
  el('add-slot').addEventListener('click', () => addSlot(`Scenario ${slots.length + 1}`));
  el('remove-slot').addEventListener('click', () => {
    const last = slots[slots.length - 1];
    if (last) {
      slots = removeSlot(slots, last.id);
      requesters.delete(last.id);
      renderScenario();
    }
  });
  el<HTMLInputElement>('transition-days').addEventListener('input', (ev) => {
    const days = Number((ev.target as HTMLInputElement).value);
    for (const slot of slots) {
      slot.draft.transitionDays = days;
      refreshSlotDebounced(slot);
    }
  });
}

const allocRequester = new SlotRequester<unknown>();

function refreshAllocation(): void {
  const problemText = el<HTMLTextAreaElement>('problem-json').value;
  let problem: unknown;
  try {
    problem = JSON.parse(problemText);
  } catch {
    el('alloc-error').textContent = 'problem JSON does not parse';
    return;
  }
  const rho = Number(el<HTMLInputElement>('rho-slider').value);
  const sweep = el<HTMLInputElement>('sweep-toggle').checked;
  allocRequester.issue(
    async () => {
      if (sweep) {
        return api.allocateSweep(problem, [0, 0.02, 0.05, 0.1, 0.2, rho]);
      }
      return api.allocate({ ...(problem as Record<string, unknown>), pooling_fraction: rho });
    },
    (resp) => renderAllocation(resp as never),
    (err) => {
      el('alloc-error').innerHTML =
        `${String(err)} <button id="alloc-retry">retry</button>`;
      el('alloc-retry').addEventListener('click', refreshAllocation);
    },
  );
}

function renderAllocation(resp: { plan?: never; frontier?: never }): void {
  el('alloc-error').textContent = '';
  if (resp.plan) {
    const plan = resp.plan;
    el('transfer-table').innerHTML = transferTable(plan)
      .map((r) => `<tr><td>${r.day}</td><td>${r.from}</td><td>${r.to}</td><td>${r.units}</td></tr>`)
      .join('');
    const s = planSummary(plan);
    el('alloc-summary').textContent =
      `shortage ${s.shortage} · worst ${s.worstShortage} · distance ${s.distance} · federal ${s.federalUsed}`;
  }
  if (resp.frontier) {
    const byRho = frontierSeries(resp.frontier);
    const mins = minShortageByRho(resp.frontier);
    el('frontier-chart').innerHTML = [...byRho.entries()]
      .map(([rho, pts], i) => {
        const color = SLOT_COLORS[i % SLOT_COLORS.length];
        const maxD = Math.max(...pts.map((p) => p.distance), 1);
        const maxS = Math.max(...pts.map((p) => p.shortage), 1);
        const dots = pts.map((p) =>
          `<circle cx="${(p.distance / maxD) * 700 + 10}" cy="${350 - (p.shortage / maxS) * 340}"`
          + ` r="4" fill="${color}"><title>rho=${rho}</title></circle>`).join('');
        return dots;
      })
      .join('');
    el('frontier-summary').textContent = mins
      .map((m) => `ρ=${m.rho}: shortage ${m.shortage}`)
      .join(' · ');
  }
}

function wireAllocation(): void {
  const debounced = debounce(refreshAllocation, 300);
  el('rho-slider').addEventListener('input', debounced);
  el('sweep-toggle').addEventListener('change', refreshAllocation);
  el('solve-button').addEventListener('click', refreshAllocation);
}

async function refreshDashboard(): Promise<void> {
  const region = el<HTMLSelectElement>('dash-region').value || undefined;
  const attrs = el<HTMLInputElement>('dash-attributes').value
    .split(',').map((a) => a.trim()).filter(Boolean);
  const rows = await Promise.all(attrs.map(async (attr) => {
    try {
      return toBar(await api.aggregates(attr, { region }));
    } catch (err) {
      return { attribute: attr, subpopulation: 'error', label: String(err), fraction: 0, suppressed: false };
    }
  }));
  el('prevalence-bars').innerHTML = rows
    .map((bar) => `<tr><td>${bar.attribute}</td>`
      + `<td><div class="bar" style="width:${(bar.fraction * 100).toFixed(1)}%"></div></td>`
      + `<td>${bar.label}</td></tr>`)
    .join('');
}

function wireDashboard(): void {
  el('dash-region').addEventListener('change', refreshDashboard);
  el('dash-refresh').addEventListener('click', refreshDashboard);
}

async function boot(): Promise<void> {
  wireScenario();
  wireAllocation();
  wireDashboard();
  try {
    const run = await api.fit();
    runId = run.run_id;
    el('fit-status').textContent = `fit run ${run.run_id}${run.cached ? ' (cached)' : ''}`;
  } catch (err) {
    el('fit-status').textContent = `fit unavailable: ${String(err)}`;
  }
  refreshDashboard();
}

document.addEventListener('DOMContentLoaded', boot);
