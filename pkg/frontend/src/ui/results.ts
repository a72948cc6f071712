import type { Hit, QueryResponse } from '../types';

export interface ResultsView {
  el: HTMLElement;
  render(response: QueryResponse): void;
}

function contributionShare(hit: Hit): Map<string, number> {
  const totalSq = hit.breakdown.reduce((acc, entry) => acc + entry.contribution, 0);
  const shares = new Map<string, number>();
  for (const entry of hit.breakdown) {
    shares.set(entry.field, totalSq > 0 ? entry.contribution / totalSq : 0);
  }
  return shares;
}

function card(hit: Hit): HTMLElement {
  const item = document.createElement('article');
  item.className = 'result-card';

  const title = document.createElement('h3');
  title.className = 'result-card__title';
  title.textContent = hit.fields.title ?? `record ${hit.id}`;

  const distance = document.createElement('p');
  distance.className = 'result-card__distance';
  distance.textContent = `id ${hit.id} · distance ${hit.distance.toFixed(4)}`;

  const grid = document.createElement('dl');
  grid.className = 'result-card__fields';
  for (const [name, value] of Object.entries(hit.fields)) {
    const dt = document.createElement('dt');
    dt.textContent = name;
    const dd = document.createElement('dd');
    dd.textContent = value;
    grid.append(dt, dd);
  }

  const bars = document.createElement('div');
  bars.className = 'result-card__bars';
  const shares = contributionShare(hit);
  for (const entry of hit.breakdown) {
    const row = document.createElement('div');
    row.className = 'contribution';
    const label = document.createElement('span');
    label.className = 'contribution__label';
    label.textContent = `${entry.field} (d=${entry.distance.toFixed(3)}, w=${entry.weight})`;
    const track = document.createElement('div');
    track.className = 'contribution__track';
    const bar = document.createElement('div');
    bar.className = 'contribution__bar';
    const share = shares.get(entry.field) ?? 0;
    bar.style.width = `${(share * 100).toFixed(1)}%`;
    track.appendChild(bar);
    row.append(label, track);
    bars.appendChild(row);
  }

  const why = document.createElement('p');
  why.className = 'result-card__why';
  why.textContent = hit.explanation;

  item.append(title, distance, grid, bars, why);
  return item;
}

export function createResultsView(): ResultsView {
  const el = document.createElement('section');
  el.className = 'results';

  const status = document.createElement('p');
  status.className = 'results__status';

  const timing = document.createElement('p');
  timing.className = 'results__timing';

  const list = document.createElement('div');
  list.className = 'results__list';

  el.append(status, timing, list);
  return {
    el,
    render(response: QueryResponse) {
      list.replaceChildren(...response.hits.map(card));
      const note = response.rerank.used
        ? (response.rerank.fallback ? ' · re-rank failed, original order' : ' · re-ranked')
        : '';
      status.textContent = `${response.hits.length} results${note}`;
      if (response.timings) {
        const t = response.timings;
        timing.textContent =
          `structure ${t.structure_ms.toFixed(0)} ms · search ${t.search_ms.toFixed(1)} ms · ` +
          `re-rank ${t.rerank_ms.toFixed(0)} ms · total ${t.total_ms.toFixed(0)} ms`;
      } else {
        timing.textContent = '';
      }
    },
  };
}
