import { beforeEach, describe, expect, it } from 'vitest';

import { SearchClient } from '../src/api';
import { createApp } from '../src/main';
import type { QueryResponse } from '../src/types';
import queryFixture from './fixtures/query_french_pinot_k3.json';
import searchFixture from './fixtures/search_italy_k3.json';

interface Call {
  url: string;
  body: Record<string, unknown>;
  resolve: (payload: unknown, status?: number) => void;
  reject: (err: unknown) => void;
}

/** Stubbed transport: every request is held until the test releases it. */
function deferredClient(): { client: SearchClient; calls: Call[] } {
  const calls: Call[] = [];
  const fetchFn: typeof fetch = (input, init) =>
    new Promise((resolve, reject) => {
      calls.push({
        url: String(input),
        body: init?.body ? JSON.parse(String(init.body)) : {},
        resolve: (payload, status = 200) =>
          resolve(new Response(JSON.stringify(payload), {
            status,
            headers: { 'Content-Type': 'application/json' },
          })),
        reject,
      });
    });
  return { client: new SearchClient('', fetchFn), calls };
}

function setText(root: HTMLElement, value: string): void {
  const input = root.querySelector<HTMLInputElement>('.query-form__text')!;
  input.value = value;
  input.dispatchEvent(new Event('input', { bubbles: true }));
}

function submitForm(root: HTMLElement): void {
  root.querySelector<HTMLFormElement>('.query-form')!
    .dispatchEvent(new Event('submit', { bubbles: true, cancelable: true }));
}

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

describe('search console', () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '';
    root = document.createElement('div');
    document.body.appendChild(root);
  });

  it('disables submit while the text box is empty', () => {
    const { client } = deferredClient();
    root.appendChild(createApp(client).el);
    const button = root.querySelector<HTMLButtonElement>('.query-form__submit')!;
    expect(button.disabled).toBe(true);
    setText(root, 'french pinot around 30 dollars');
    expect(button.disabled).toBe(false);
    setText(root, '   ');
    expect(button.disabled).toBe(true);
  });

  it('renders three result cards with per-field bars for the golden query', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);

    setText(root, 'french pinot around 30 dollars');
    submitForm(root);
    expect(calls[0].url).toBe('/api/query');
    calls[0].resolve(queryFixture);
    await flush();

    const cards = root.querySelectorAll('.result-card');
    expect(cards).toHaveLength(3);
    for (const card of cards) {
      expect(card.querySelectorAll('.contribution__bar').length).toBeGreaterThan(0);
      expect(card.querySelector('.result-card__why')!.textContent).toContain('distance');
    }
    // extraction shown in the editable panel
    const editor = root.querySelector<HTMLTextAreaElement>('.structured-panel__editor')!;
    expect(JSON.parse(editor.value)).toEqual({
      country: 'France',
      variety: 'Pinot Noir',
      price: 30.0,
    });
    expect(root.querySelectorAll('.structured-panel__weight-row')).toHaveLength(3);
  });

  it('editing the panel and resubmitting posts /api/search and updates results', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);

    setText(root, 'french pinot around 30 dollars');
    submitForm(root);
    calls[0].resolve(queryFixture);
    await flush();

    const editor = root.querySelector<HTMLTextAreaElement>('.structured-panel__editor')!;
    editor.value = JSON.stringify({ country: 'Italy' });
    root.querySelector<HTMLButtonElement>('.structured-panel__submit')!.click();

    expect(calls[1].url).toBe('/api/search');
    expect(calls[1].body.structured_query).toEqual({ country: 'Italy' });
    calls[1].resolve(searchFixture);
    await flush();

    const titles = [...root.querySelectorAll('.result-card__title')]
      .map((el) => el.textContent);
    expect(titles.some((t) => t?.includes('Nebbiolo'))).toBe(true);
    expect(root.querySelectorAll('.result-card')).toHaveLength(3);
  });

  it('rejects invalid panel JSON inline without a network call', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);

    setText(root, 'french pinot around 30 dollars');
    submitForm(root);
    calls[0].resolve(queryFixture);
    await flush();

    const editor = root.querySelector<HTMLTextAreaElement>('.structured-panel__editor')!;
    editor.value = '{not json';
    root.querySelector<HTMLButtonElement>('.structured-panel__submit')!.click();
    const error = root.querySelector<HTMLElement>('.structured-panel__error')!;
    expect(error.hidden).toBe(false);
    expect(error.textContent).toBe('not valid JSON');
    expect(calls).toHaveLength(1);

    editor.value = '{}';
    root.querySelector<HTMLButtonElement>('.structured-panel__submit')!.click();
    expect(error.textContent).toBe('at least one attribute required');
    expect(calls).toHaveLength(1);
  });

  it('discards stale responses: an older request never overwrites a newer one', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);

    setText(root, 'french pinot around 30 dollars');
    submitForm(root);               // request 1 (held)
    setText(root, 'italian red wine');
    submitForm(root);               // request 2 (held)
    expect(calls).toHaveLength(2);

    calls[1].resolve(searchFixture); // newer answers first
    await flush();
    expect(root.querySelector('.results__status')!.textContent).toContain('3 results');
    const before = [...root.querySelectorAll('.result-card__title')].map((el) => el.textContent);

    calls[0].resolve(queryFixture); // stale response arrives late
    await flush();
    const after = [...root.querySelectorAll('.result-card__title')].map((el) => el.textContent);
    expect(after).toEqual(before);  // unchanged: stale payload dropped
  });

  it('shows the error banner and keeps prior results on failure', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);

    setText(root, 'french pinot around 30 dollars');
    submitForm(root);
    calls[0].resolve(queryFixture);
    await flush();
    expect(root.querySelectorAll('.result-card')).toHaveLength(3);

    setText(root, 'another query');
    submitForm(root);
    calls[1].reject(new TypeError('fetch failed'));
    await flush();

    const banner = root.querySelector<HTMLElement>('.banner')!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toBe('service unreachable');
    expect(root.querySelectorAll('.result-card')).toHaveLength(3);
  });

  it('server 4xx detail lands in the banner', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);

    setText(root, 'some text');
    submitForm(root);
    calls[0].resolve({ error: 'ValidationError', detail: 'k must be in range' }, 400);
    await flush();
    expect(root.querySelector<HTMLElement>('.banner')!.textContent)
      .toBe('k must be in range');
  });

  it('weight sliders feed the weights object on resubmit', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);

    setText(root, 'french pinot around 30 dollars');
    submitForm(root);
    calls[0].resolve(queryFixture);
    await flush();

    const slider = root.querySelector<HTMLInputElement>(
      '.structured-panel__weight-row input[data-field="price"]')!;
    slider.value = '4';
    slider.dispatchEvent(new Event('input', { bubbles: true }));
    root.querySelector<HTMLButtonElement>('.structured-panel__submit')!.click();

    expect(calls[1].url).toBe('/api/search');
    expect(calls[1].body.weights).toEqual({ price: 4 });
    calls[1].resolve(searchFixture);
    await flush();
  });

  it('marks re-ranked result sets in the status line', async () => {
    const { client, calls } = deferredClient();
    root.appendChild(createApp(client).el);
    const reranked: QueryResponse = {
      ...(queryFixture as QueryResponse),
      rerank: { used: true, fallback: false },
    };
    setText(root, 'french pinot around 30 dollars');
    submitForm(root);
    calls[0].resolve(reranked);
    await flush();
    expect(root.querySelector('.results__status')!.textContent)
      .toBe('3 results · re-ranked');
  });
});
