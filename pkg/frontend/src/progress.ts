/**
 * Polling helpers for long-running server work: generation runs and
 * training jobs both return a pollable id with a 202; progress is polled
 * once per second until a terminal state.
 */

import { ApiClient, JobStatus, RunStatus } from "./api.js";

export const POLL_INTERVAL_MS = 1000;

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/** Poll a generation run until it completes or fails; onTick fires once
 * per poll with the latest status (drive a progress bar from done/total). */
export async function pollRun(
  api: ApiClient,
  runId: string,
  onTick?: (status: RunStatus) => void,
  intervalMs: number = POLL_INTERVAL_MS,
): Promise<RunStatus> {
  for (;;) {
    const status = await api.runStatus(runId);
    onTick?.(status);
    if (status.state !== "running") {
      return status;
    }
    await sleep(intervalMs);
  }
}

const TERMINAL_JOB_STATES = new Set(["Completed", "Failed", "Canceled"]);

export async function pollJob(
  api: ApiClient,
  jobId: string,
  onTick?: (status: JobStatus) => void,
  intervalMs: number = POLL_INTERVAL_MS,
): Promise<JobStatus> {
  for (;;) {
    const status = await api.jobStatus(jobId);
    onTick?.(status);
    if (TERMINAL_JOB_STATES.has(status.state)) {
      return status;
    }
    await sleep(intervalMs);
  }
}
