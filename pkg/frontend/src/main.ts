import { ApiError, SearchClient } from './api';
import { RequestSequencer } from './state';
import type { QueryResponse } from './types';
import { createBanner } from './ui/banner';
import { createQueryForm } from './ui/queryForm';
import { createResultsView } from './ui/results';
import { createStructuredPanel } from './ui/structuredPanel';

export interface App {
  el: HTMLElement;
}

/**
 * Wire the console: free-text submissions hit /api/query and populate the
 * editable structured panel; panel edits resubmit through /api/search with
 * no LLM round-trip. A sequence guard discards stale responses, and errors
 * land in the banner while prior results stay on screen.
 */
export function createApp(client: SearchClient = new SearchClient()): App {
  const el = document.createElement('main');
  el.className = 'app';

  const heading = document.createElement('h1');
  heading.textContent = 'spelunker';

  const banner = createBanner();
  const results = createResultsView();
  const sequencer = new RequestSequencer();

  const apply = (token: number, response: QueryResponse, fromQuery: boolean): void => {
    if (!sequencer.isCurrent(token)) return;
    banner.clear();
    results.render(response);
    if (fromQuery) panel.setQuery(response.structured_query);
  };

  const fail = (token: number, err: unknown): void => {
    if (!sequencer.isCurrent(token)) return;
    if (err instanceof DOMException && err.name === 'AbortError') return;
    banner.show(err instanceof ApiError ? err.detail : 'unexpected error');
  };

  const form = createQueryForm(({ text, k, rerank }) => {
    const { token, signal } = sequencer.begin();
    client.query(text, k, rerank, signal).then(
      (response) => apply(token, response, true),
      (err) => fail(token, err),
    );
  });

  const panel = createStructuredPanel(({ values, weights }) => {
    const { token, signal } = sequencer.begin();
    const { k } = form.state();
    client.search(values, k, weights, signal).then(
      (response) => apply(token, response, false),
      (err) => fail(token, err),
    );
  });

  el.append(heading, form.el, banner.el, panel.el, results.el);
  return { el };
}

export function mount(root: HTMLElement, client?: SearchClient): App {
  const app = createApp(client);
  root.replaceChildren(app.el);
  return app;
}

declare global {
  interface Window {
    SPELUNKER_API_BASE?: string;
  }
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  mount(document.getElementById('app') as HTMLElement);
}
