import { ApiError, SupervisorApi } from "./api.js";
import type {
  AlarmRow,
  ApprovalReceipt,
  CurrentPlan,
  HouseCard,
  JobDoc,
  MortalityReceipt,
  TelemetryRow,
} from "./types.js";

export interface Toast {
  id: number;
  message: string;
  /** Re-runs the request that produced this toast. */
  retry?: () => void;
}

export interface ConsoleState {
  houses: HouseCard[];
  telemetry: Map<number, TelemetryRow[]>;
  plan: CurrentPlan | null;
  alarms: AlarmRow[];
  ackedAlarms: Set<number>;
  jobId: string | null;
  job: JobDoc | null;
  approval: ApprovalReceipt | null;
  lastMortality: MortalityReceipt | null;
  mutationPending: boolean;
  toasts: Toast[];
}

type Listener = (state: ConsoleState) => void;

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.status}: ${error.detail}`;
  if (error instanceof Error) return error.message;
  return String(error);
}

export class ConsoleStore {
  readonly state: ConsoleState = {
    houses: [],
    telemetry: new Map(),
    plan: null,
    alarms: [],
    ackedAlarms: new Set(),
    jobId: null,
    job: null,
    approval: null,
    lastMortality: null,
    mutationPending: false,
    toasts: [],
  };

  private listeners: Listener[] = [];
  private toastSeq = 0;

  constructor(private api: SupervisorApi) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private toast(message: string, retry?: () => void): void {
    this.state.toasts.push({ id: ++this.toastSeq, message, retry });
    if (this.state.toasts.length > 5) this.state.toasts.shift();
    this.emit();
  }

  dismissToast(id: number): void {
    this.state.toasts = this.state.toasts.filter((t) => t.id !== id);
    this.emit();
  }

  retryToast(id: number): void {
    const toast = this.state.toasts.find((t) => t.id === id);
    this.dismissToast(id);
    toast?.retry?.();
  }

  acknowledgeAlarm(id: number): void {
    this.state.ackedAlarms.add(id);
    this.emit();
  }

  /** One poll pass over the read-only endpoints. Failures toast, never throw. */
  async refresh(): Promise<void> {
    try {
      const houses = await this.api.houses();
      this.state.houses = houses;
      for (const house of houses) {
        this.state.telemetry.set(
          house.address,
          await this.api.telemetry(house.address),
        );
      }
      this.state.plan = await this.api.currentPlan();
      this.state.alarms = await this.api.alarms();
      if (this.state.jobId && this.state.job?.status !== "done" && this.state.job?.status !== "failed") {
        await this.refreshJob();
      }
      this.emit();
    } catch (error) {
      this.toast(`refresh failed (${describe(error)})`, () => {
        void this.refresh();
      });
    }
  }

  async refreshJob(): Promise<void> {
    if (!this.state.jobId) return;
    this.state.job = await this.api.job(this.state.jobId);
    this.emit();
  }

  /** Serializes writes: at most one in-flight mutation, buttons stay off meanwhile. */
  private async mutate(run: () => Promise<void>, label: string, retry: () => void): Promise<void> {
    if (this.state.mutationPending) return;
    this.state.mutationPending = true;
    this.emit();
    try {
      await run();
    } catch (error) {
      this.toast(`${label} failed (${describe(error)})`, retry);
    } finally {
      this.state.mutationPending = false;
      this.emit();
    }
  }

  async submitMortality(address: number, day: number, count: number): Promise<void> {
    await this.mutate(
      async () => {
        this.state.lastMortality = await this.api.reportMortality(address, day, count);
        this.state.houses = await this.api.houses();
      },
      `mortality for ${address}`,
      () => {
        void this.submitMortality(address, day, count);
      },
    );
  }

  async startOptimize(): Promise<void> {
    await this.mutate(
      async () => {
        this.state.jobId = await this.api.startOptimize();
        this.state.job = null;
        this.state.approval = null;
        await this.refreshJob();
      },
      "optimization start",
      () => {
        void this.startOptimize();
      },
    );
  }

  async approvePlan(): Promise<void> {
    const jobId = this.state.jobId;
    if (!jobId) return;
    await this.mutate(
      async () => {
        this.state.approval = await this.api.approve(jobId);
        this.state.plan = await this.api.currentPlan();
      },
      "plan approval",
      () => {
        void this.approvePlan();
      },
    );
  }

  /** Houses whose distribution write did not come back ok. */
  failedAcks(): number[] {
    const dist = this.state.approval?.distribution;
    if (!dist) return [];
    return dist.acks.filter((a) => !a.ok).map((a) => a.house);
  }

  visibleAlarms(): AlarmRow[] {
    return this.state.alarms.filter((a) => !this.state.ackedAlarms.has(a.id));
  }
}
