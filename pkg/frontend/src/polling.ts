/** Job polling with per-job deduplication. */
import type { ApiClient } from "./api.js";
import type { JobWire } from "./types.js";

export type JobCallback = (job: JobWire) => void;

interface Watch {
  timer: ReturnType<typeof setInterval>;
  callbacks: JobCallback[];
}

export class JobPoller {
  private watches = new Map<string, Watch>();

  constructor(
    private api: ApiClient,
    private intervalMs = 1000,
  ) {}

  /** Start (or join) polling a job; concurrent watches of one id share a timer. */
  watch(jobId: string, callback: JobCallback): void {
    const existing = this.watches.get(jobId);
    if (existing) {
      existing.callbacks.push(callback);
      return;
    }
    const watch: Watch = { timer: 0 as unknown as ReturnType<typeof setInterval>, callbacks: [callback] };
    const poll = async () => {
      let job: JobWire;
      try {
        job = await this.api.getJob(jobId);
      } catch {
        return; // transient failure: try again next tick
      }
      for (const cb of watch.callbacks) cb(job);
      if (job.state === "done" || job.state === "failed") {
        this.stop(jobId);
      }
    };
    watch.timer = setInterval(poll, this.intervalMs);
    this.watches.set(jobId, watch);
    void poll();
  }

  activeCount(): number {
    return this.watches.size;
  }

  stop(jobId: string): void {
    const watch = this.watches.get(jobId);
    if (watch) {
      clearInterval(watch.timer);
      this.watches.delete(jobId);
    }
  }

  dispose(): void {
    for (const id of [...this.watches.keys()]) this.stop(id);
  }
}
