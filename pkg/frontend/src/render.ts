/**
 * HTML renderers: pure functions from the view model to markup strings, so
 * they are testable without a browser.  Every table renders a fixed column
 * whitelist; unexpected payload fields never reach the DOM.
 */

import type { SessionViewModel, ControlGates } from "./viewmodel.js";

const esc = (value: unknown): string =>
  String(value).replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

const num = (v: number, digits = 4): string => Number.isFinite(v) ? v.toFixed(digits) : "-";

function covariateCell(x: number[]): string {
  const shown = x.slice(0, 6).map((v) => num(v, 2)).join(", ");
  return x.length > 6 ? `${shown}, …(${x.length})` : shown;
}

export function renderTrajectory(vm: SessionViewModel, width = 420, height = 120): string {
  const points = vm.trajectory;
  if (points.length === 0) {
    return `<svg class="trajectory" width="${width}" height="${height}"></svg>`;
  }
  const steps = points.map(([s]) => s);
  const values = points.map(([, v]) => v);
  const maxV = Math.max(...values, vm.alpha * 1.5, 0.01);
  const minS = Math.min(...steps);
  const maxS = Math.max(...steps, minS + 1);
  const sx = (s: number) => ((s - minS) / (maxS - minS)) * (width - 20) + 10;
  const sy = (v: number) => height - 10 - (Math.min(v, maxV) / maxV) * (height - 20);
  const path = points.map(([s, v], i) => `${i === 0 ? "M" : "L"}${sx(s).toFixed(1)},${sy(v).toFixed(1)}`).join(" ");
  const alphaY = sy(vm.alpha).toFixed(1);
  return [
    `<svg class="trajectory" width="${width}" height="${height}" role="img" aria-label="running estimate">`,
    `<line class="alpha-line" x1="10" y1="${alphaY}" x2="${width - 10}" y2="${alphaY}" stroke="#c0392b" stroke-dasharray="4 3"/>`,
    `<path d="${path}" fill="none" stroke="#2c3e50" stroke-width="1.5"/>`,
    `</svg>`,
  ].join("");
}

export function renderScreenedTable(vm: SessionViewModel): string {
  const rows = vm.screenedRows.map((r) => {
    const outcome = r.outcome === null ? '<span class="hidden-outcome">hidden</span>' : esc(num(r.outcome, 3));
    return `<tr data-handle="${esc(r.handle)}"><td>${esc(r.handle.slice(0, 8))}</td>` +
      `<td>${esc(r.membership)}</td><td>${outcome}</td><td>${esc(covariateCell(r.covariates))}</td></tr>`;
  });
  return `<table class="screened"><thead><tr><th>record</th><th>origin</th><th>outcome</th><th>covariates</th></tr></thead>` +
    `<tbody>${rows.join("")}</tbody></table>`;
}

export function renderNonNullTable(vm: SessionViewModel): string {
  const rows = vm.nonNullRows.map(
    (r) => `<tr><td>${esc(r.handle.slice(0, 8))}</td><td>${esc(num(r.y, 3))}</td>` +
      `<td>${esc(covariateCell(r.covariates))}</td></tr>`,
  );
  return `<table class="nonnull"><thead><tr><th>record</th><th>outcome</th><th>covariates</th></tr></thead>` +
    `<tbody>${rows.join("")}</tbody></table>`;
}

export function renderPoolTable(vm: SessionViewModel, limit = 50): string {
  const rows = vm.poolRows.slice(0, limit).map(
    (e) => `<tr data-handle="${esc(e.handle)}"><td>${esc(e.handle.slice(0, 8))}</td>` +
      `<td>${esc(covariateCell(e.covariates))}</td></tr>`,
  );
  const truncated = vm.poolRows.length > limit
    ? `<caption>showing ${limit} of ${vm.poolRows.length} candidates</caption>` : "";
  return `<table class="pool">${truncated}<thead><tr><th>candidate</th><th>covariates</th></tr></thead>` +
    `<tbody>${rows.join("")}</tbody></table>`;
}

export function renderControls(gates: ControlGates, pendingLambda: number | null): string {
  const dis = (enabled: boolean) => (enabled ? "" : " disabled");
  const lambda = pendingLambda === null ? "0.3" : String(pendingLambda);
  return [
    `<div class="controls">`,
    `<button id="step-1"${dis(gates.canStep)}>Step</button>`,
    `<button id="step-10"${dis(gates.canStep)}>Step ×10</button>`,
    `<input id="lambda-slider" type="range" min="0" max="1" step="0.05" value="${esc(lambda)}"${dis(gates.canChangePolicy)}/>`,
    `<button id="lambda-apply"${dis(gates.canChangePolicy)}>Apply λ</button>`,
    `<button id="whatif"${dis(gates.canPreview)}>What-if</button>`,
    `<button id="finalize"${dis(gates.canFinalize)}>Finalize</button>`,
    `</div>`,
  ].join("");
}

export function renderStatusBanner(vm: SessionViewModel): string {
  const cls = vm.status === "running" ? "running" : vm.status === "stopped" ? "stopped" : "exhausted";
  const note = vm.exhausted
    ? `<span class="note">pool exhausted before the estimate reached ${num(vm.alpha, 2)}: empty selection</span>`
    : vm.status === "stopped"
      ? `<span class="note">stopped: estimate ${num(vm.fdpEstimate)} ≤ ${num(vm.alpha, 2)}</span>`
      : `<span class="note">estimate ${num(vm.fdpEstimate)} vs target ${num(vm.alpha, 2)}</span>`;
  return `<div class="status ${cls}">step ${vm.step} · ${esc(vm.status)} · policy ${esc(vm.policy)} ${note}</div>`;
}

export function renderErrorBanner(message: string): string {
  return `<div class="error-banner" role="alert">${esc(message)}</div>`;
}

export function renderWhatIfOverlay(previews: { lambda: number; order: string[] }[], limit = 12): string {
  const columns = previews.map((p) => {
    const items = p.order.slice(0, limit).map((h) => `<li>${esc(h.slice(0, 8))}</li>`).join("");
    return `<div class="whatif-column"><h4>λ=${esc(p.lambda)}</h4><ol>${items}</ol></div>`;
  });
  return `<div class="whatif-overlay">${columns.join("")}</div>`;
}

export function renderSelection(vm: SessionViewModel): string {
  if (vm.selection === null) return "";
  const items = vm.selection.map((j) => `<li>test #${esc(j)}</li>`).join("");
  return `<div class="selection"><h3>${vm.selection.length} selected</h3><ul>${items}</ul></div>`;
}

export function renderDashboard(vm: SessionViewModel): string {
  return [
    renderStatusBanner(vm),
    renderControls(vm.gates, vm.pendingLambda),
    renderTrajectory(vm),
    renderSelection(vm),
    `<section><h3>Screened (${vm.screenedRows.length})</h3>${renderScreenedTable(vm)}</section>`,
    `<section><h3>Known promising labeled (${vm.nonNullRows.length})</h3>${renderNonNullTable(vm)}</section>`,
    `<section><h3>Anonymous pool (${vm.poolRows.length} = ${vm.counts.nullLabeled} + ${vm.counts.test})</h3>${renderPoolTable(vm)}</section>`,
  ].join("\n");
}
