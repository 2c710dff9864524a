import { bandAcross, renderChart, type Series } from "./charts.js";
import * as fmt from "./format.js";
import type { ConsoleStore } from "./state.js";
import type { HouseCard, TelemetryRow } from "./types.js";

/** Sticky form inputs; survives the full re-render on every poll. */
export interface FormState {
  mortalityHouse: string;
  mortalityDay: string;
  mortalityCount: string;
}

export function emptyForm(): FormState {
  return { mortalityHouse: "", mortalityDay: "", mortalityCount: "" };
}

function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function houseCard(card: HouseCard): HTMLElement {
  const body: Array<Node | string> = [
    h(
      "p",
      {},
      `flock ${card.flock_id}, day ${card.day}`,
      card.finished ? " (finished)" : "",
    ),
    h("p", { class: "big", "data-field": "nlb" }, fmt.birds(card.nlb)),
    h("p", { class: "muted" }, "live birds"),
  ];
  const t = card.telemetry;
  if (t) {
    body.push(
      h(
        "dl",
        { class: "readings" },
        h("dt", {}, "temperature"),
        h("dd", { "data-field": "t" }, fmt.tripleDegC(t.t_min, t.t_avg, t.t_max)),
        h("dt", {}, "humidity"),
        h("dd", { "data-field": "h" }, fmt.triplePercent(t.h_min, t.h_avg, t.h_max)),
        h("dt", {}, "mean weight"),
        h("dd", { "data-field": "mdw" }, fmt.grams(t.mdw)),
        h("dt", {}, "feed to date"),
        h("dd", { "data-field": "dfc" }, `${t.dfc.toFixed(1)} kg`),
        h("dt", {}, "deaths today"),
        h("dd", { "data-field": "dm" }, fmt.birds(t.dm)),
      ),
    );
  } else {
    body.push(h("p", { class: "muted" }, "no telemetry yet"));
  }
  return h(
    "article",
    { class: "card house", "data-house": String(card.address) },
    h("h3", {}, `house ${card.address}`),
    ...body,
  );
}

function mortalityForm(store: ConsoleStore, form: FormState): HTMLElement {
  const select = h("select", { "data-testid": "mortality-house", name: "house" });
  for (const card of store.state.houses) {
    if (card.finished) continue;
    select.append(h("option", { value: String(card.address) }, `house ${card.address}`));
  }
  if (form.mortalityHouse) select.value = form.mortalityHouse;
  select.addEventListener("change", () => {
    form.mortalityHouse = select.value;
  });

  const day = h("input", {
    "data-testid": "mortality-day",
    name: "day",
    type: "number",
    min: "1",
    max: "40",
    value: form.mortalityDay,
  });
  day.addEventListener("input", () => {
    form.mortalityDay = day.value;
  });
  const count = h("input", {
    "data-testid": "mortality-count",
    name: "count",
    type: "number",
    min: "1",
    value: form.mortalityCount,
  });
  count.addEventListener("input", () => {
    form.mortalityCount = count.value;
  });

  const submit = h(
    "button",
    { "data-testid": "mortality-submit", type: "submit" },
    "record deaths",
  ) as HTMLButtonElement;
  submit.disabled = store.state.mutationPending;

  const element = h(
    "form",
    { class: "card", "data-testid": "mortality-form" },
    h("h3", {}, "record mortality"),
    h("label", {}, "house ", select),
    h("label", {}, "day ", day),
    h("label", {}, "dead birds ", count),
    submit,
  ) as HTMLFormElement;
  element.addEventListener("submit", (event) => {
    event.preventDefault();
    const address = Number(select.value);
    const dayN = Number(day.value);
    const countN = Number(count.value);
    if (!select.value || !Number.isFinite(dayN) || !Number.isFinite(countN) || countN <= 0) return;
    void store.submitMortality(address, dayN, countN);
  });

  const receipt = store.state.lastMortality;
  if (receipt) {
    element.append(
      h(
        "p",
        { class: "receipt", "data-testid": "mortality-receipt" },
        `house ${receipt.house} day ${receipt.day}: ${fmt.birds(receipt.count)} recorded, ` +
          `${fmt.birds(receipt.nlb)} live now, ${fmt.birds(receipt.nlb_projected)} projected`,
      ),
    );
  }
  return element;
}

function planPanel(store: ConsoleStore): HTMLElement {
  const plan = store.state.plan;
  if (!plan) {
    return h(
      "section",
      { class: "card", "data-testid": "plan-panel" },
      h("h3", {}, "current plan"),
      h("p", { class: "muted", "data-testid": "plan-empty" }, "no plan distributed yet"),
    );
  }
  const rows = plan.days.map((d) =>
    h(
      "tr",
      { "data-plan-day": String(d.day) },
      h("td", {}, String(d.day)),
      h("td", {}, fmt.tripleDegC(d.t_min, d.t_avg, d.t_max)),
      h("td", {}, fmt.triplePercent(d.h_min, d.h_avg, d.h_max)),
    ),
  );
  return h(
    "section",
    { class: "card", "data-testid": "plan-panel" },
    h("h3", {}, "current plan"),
    h(
      "p",
      {},
      "estimated conversion ",
      h("strong", { "data-field": "fcr-est" }, fmt.conversion(plan.fcr_est)),
      ", simulated ",
      h("strong", { "data-field": "fcr-res" }, fmt.conversion(plan.fcr_res)),
      ` (${plan.source})`,
    ),
    h(
      "details",
      {},
      h("summary", {}, `${plan.days.length}-day schedule`),
      h(
        "table",
        { class: "plan-table" },
        h(
          "thead",
          {},
          h("tr", {}, h("th", {}, "day"), h("th", {}, "temperature"), h("th", {}, "humidity")),
        ),
        h("tbody", {}, ...rows),
      ),
    ),
  );
}

function optimizePanel(store: ConsoleStore): HTMLElement {
  const { job, jobId, approval, mutationPending } = store.state;
  const start = h(
    "button",
    { "data-testid": "optimize-start" },
    "optimize plan",
  ) as HTMLButtonElement;
  start.disabled = mutationPending || job?.status === "queued" || job?.status === "running";
  start.addEventListener("click", () => {
    void store.startOptimize();
  });

  const children: Array<Node | string> = [h("h3", {}, "optimization"), start];
  if (jobId && job) {
    const pct = Math.round(job.progress * 100);
    const bar = h("div", { class: "progress" }, h("div", { class: "progress-fill" }));
    (bar.firstChild as HTMLElement).style.width = `${pct}%`;
    children.push(
      h(
        "p",
        {},
        "job ",
        h("code", {}, jobId),
        " ",
        h("span", { "data-field": "job-status", class: `status-${job.status}` }, job.status),
        " ",
        h("span", { "data-field": "job-progress" }, `${pct}%`),
      ),
      bar,
    );
    if (job.status === "failed" && job.error) {
      children.push(h("p", { class: "error", "data-testid": "job-error" }, job.error));
    }
    if (job.status === "done" && job.result) {
      const res = job.result as { fcr_est?: number; fcr_res?: number };
      children.push(
        h(
          "p",
          { "data-testid": "job-result" },
          `candidate conversion ${fmt.conversion(res.fcr_est ?? null)} ` +
            `(simulated ${fmt.conversion(res.fcr_res ?? null)})`,
        ),
      );
      const approve = h(
        "button",
        { "data-testid": "approve" },
        "approve and distribute",
      ) as HTMLButtonElement;
      approve.disabled = mutationPending;
      approve.addEventListener("click", () => {
        void store.approvePlan();
      });
      children.push(approve);
    }
  }
  if (approval) {
    const dist = approval.distribution;
    if (dist) {
      const acks = dist.acks.map((a) =>
        h(
          "li",
          { "data-ack": String(a.house), class: a.ok ? "ack-ok" : "ack-fail" },
          `house ${a.house}: ${a.ok ? "ok" : a.error ?? "failed"}` +
            (a.retries ? ` (${a.retries} retries)` : ""),
        ),
      );
      children.push(
        h(
          "div",
          { "data-testid": "distribution" },
          h("p", {}, `distributed on day ${dist.day}`),
          h("ul", { class: "acks" }, ...acks),
        ),
      );
      const failed = store.failedAcks();
      if (failed.length > 0) {
        children.push(
          h(
            "p",
            { class: "banner", "data-testid": "dist-banner" },
            `distribution incomplete: no acknowledgement from house ${failed.join(", house ")}`,
          ),
        );
      }
    } else {
      children.push(
        h("p", { "data-testid": "distribution" }, "plan approved, no houses to write"),
      );
    }
  }
  return h("section", { class: "card", "data-testid": "optimize-panel" }, ...children);
}

function alarmsPanel(store: ConsoleStore): HTMLElement {
  const rows = store.visibleAlarms().map((a) => {
    const ack = h("button", { class: "ack-btn" }, "ack") as HTMLButtonElement;
    ack.addEventListener("click", () => {
      store.acknowledgeAlarm(a.id);
    });
    return h(
      "li",
      { class: `alarm severity-${a.severity}`, "data-alarm": String(a.id) },
      h("span", { class: "alarm-at" }, a.at),
      h("span", { class: "alarm-msg" }, `house ${a.house}: ${a.message}`),
      ack,
    );
  });
  return h(
    "section",
    { class: "card", "data-testid": "alarms" },
    h("h3", {}, `alarms (${rows.length})`),
    rows.length === 0
      ? h("p", { class: "muted" }, "none outstanding")
      : h("ul", {}, ...rows),
  );
}

function chartsPanel(store: ConsoleStore): HTMLElement {
  const panel = h("section", { class: "card charts", "data-testid": "charts" }, h("h3", {}, "trends"));
  const pick = (value: (row: TelemetryRow) => number): Series[] =>
    store.state.houses
      .map((card) => ({
        label: `house ${card.address}`,
        points: (store.state.telemetry.get(card.address) ?? []).map(
          (row) => [row.day, value(row)] as [number, number],
        ),
      }))
      .filter((s) => s.points.length > 0);

  const weight = pick((row) => row.mdw);
  if (weight.length > 0) {
    const band = bandAcross(weight);
    panel.append(
      h("h4", {}, "mean daily weight (g)"),
      renderChart({ series: weight, band: { upper: band.upper, lower: band.lower } }),
    );
  }
  const birds = pick((row) => row.nlb);
  if (birds.length > 0) {
    panel.append(h("h4", {}, "live birds"), renderChart({ series: birds }));
  }
  if (weight.length === 0 && birds.length === 0) {
    panel.append(h("p", { class: "muted" }, "no telemetry yet"));
  }
  return panel;
}

function toastRack(store: ConsoleStore): HTMLElement {
  const rack = h("div", { class: "toasts" });
  for (const toast of store.state.toasts) {
    const line = h(
      "div",
      { class: "toast", "data-testid": "toast", "data-toast": String(toast.id) },
      h("span", {}, toast.message),
    );
    if (toast.retry) {
      const retry = h("button", { class: "toast-retry" }, "retry") as HTMLButtonElement;
      retry.addEventListener("click", () => {
        store.retryToast(toast.id);
      });
      line.append(retry);
    }
    const close = h("button", { class: "toast-close" }, "dismiss") as HTMLButtonElement;
    close.addEventListener("click", () => {
      store.dismissToast(toast.id);
    });
    line.append(close);
    rack.append(line);
  }
  return rack;
}

/** Full re-render; cheap at desk scale and keeps every panel consistent. */
export function render(root: HTMLElement, store: ConsoleStore, form: FormState): void {
  root.replaceChildren(
    h(
      "header",
      {},
      h("h1", {}, "flock supervision console"),
      h("p", { class: "muted" }, `${store.state.houses.length} houses connected`),
    ),
    h("div", { class: "grid houses" }, ...store.state.houses.map(houseCard)),
    h(
      "div",
      { class: "grid panels" },
      mortalityForm(store, form),
      planPanel(store),
      optimizePanel(store),
      alarmsPanel(store),
    ),
    chartsPanel(store),
    toastRack(store),
  );
}
