/**
 * View model: what the dashboard shows, derived strictly from the /v1 state
 * payload.  No field is reconstructed client-side; anything the payload does
 * not carry simply is not displayed.
 */

import type { SessionState } from "./api.js";

export interface ControlGates {
  canStep: boolean;
  canFinalize: boolean;
  canChangePolicy: boolean;
  canInjectLabel: boolean;
  canPreview: boolean;
}

export interface SessionViewModel {
  id: string;
  status: "running" | "stopped" | "exhausted";
  step: number;
  alpha: number;
  policy: string;
  fdpEstimate: number;
  belowTarget: boolean;
  counts: { nullLabeled: number; test: number };
  trajectory: [number, number][];
  screenedRows: { handle: string; covariates: number[]; membership: string; outcome: number | null }[];
  nonNullRows: { handle: string; covariates: number[]; y: number }[];
  poolRows: { handle: string; covariates: number[] }[];
  selection: number[] | null;
  auditTail: { step: number; event: string }[];
  pendingLambda: number | null;
  gates: ControlGates;
  exhausted: boolean;
}

export function buildViewModel(state: SessionState, pendingLambda: number | null = null): SessionViewModel {
  const running = state.status === "running";
  const view = state.view;
  return {
    id: state.id,
    status: state.status,
    step: state.step,
    alpha: state.alpha,
    policy: state.policy,
    fdpEstimate: state.fdp_estimate,
    belowTarget: state.fdp_estimate <= state.alpha,
    counts: { nullLabeled: state.count_null_labeled, test: state.count_test },
    trajectory: state.trajectory,
    screenedRows: (view?.screened ?? []).map((r) => ({
      handle: r.handle,
      covariates: r.x,
      membership: r.membership === 0 ? "labeled" : "test",
      outcome: r.outcome,
    })),
    nonNullRows: (view?.revealed_nonnull_labeled ?? []).map((r) => ({
      handle: r.handle,
      covariates: r.x,
      y: r.y,
    })),
    // pool rows expose exactly the payload's fields: handle and covariates
    poolRows: (view?.anonymous_pool ?? []).map((e) => ({ handle: e.handle, covariates: e.x })),
    selection: state.selection ?? null,
    auditTail: state.audit_tail.map((e) => ({ step: e.step, event: e.event })),
    pendingLambda,
    gates: {
      canStep: running,
      canFinalize: !running,
      canChangePolicy: running,
      canInjectLabel: running,
      canPreview: running,
    },
    exhausted: state.status === "exhausted",
  };
}

/** Screened test rows that can still receive a label from an annotator. */
export function labelTargets(vm: SessionViewModel): { handle: string; covariates: number[] }[] {
  return vm.screenedRows
    .filter((r) => r.membership === "test" && r.outcome === null)
    .map((r) => ({ handle: r.handle, covariates: r.covariates }));
}
