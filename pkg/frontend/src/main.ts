import { ApiClient } from "./api.js";
import { bind, render } from "./render.js";
import { ConsoleStore } from "./state.js";

export function mount(root: HTMLElement, base = ""): ConsoleStore {
  const store = new ConsoleStore(new ApiClient(base));
  bind(root, {
    onStart: (req) =>
      void store.start({
        dataset: req.dataset,
        budget: req.budget,
        seed: req.seed,
        strategy: { kind: req.strategy },
      }),
    onLabel: (label) => void store.submit(label),
    onRetry: () => void store.retry(),
    onExpandContexts: () => void store.refreshContexts(),
    onLoadResult: () => void store.loadResult(),
    onReset: () => store.reset(),
  });
  store.subscribe((state) => render(root, state));
  return store;
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement) {
  mount(rootElement);
}
