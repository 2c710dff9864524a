import { SupervisorApi } from "./api.js";
import { emptyForm, render } from "./render.js";
import { ConsoleStore } from "./state.js";

export const POLL_MS = 2000;

export interface Console {
  store: ConsoleStore;
  stop: () => void;
}

/** Wires store to DOM and owns the poll cadence; the store never sets timers. */
export function boot(root: HTMLElement, api = new SupervisorApi()): Console {
  const store = new ConsoleStore(api);
  const form = emptyForm();
  store.subscribe(() => {
    render(root, store, form);
  });
  render(root, store, form);
  void store.refresh();
  const timer = setInterval(() => {
    void store.refresh();
  }, POLL_MS);
  return {
    store,
    stop: () => {
      clearInterval(timer);
    },
  };
}

const mount = document.getElementById("app");
if (mount) boot(mount);
