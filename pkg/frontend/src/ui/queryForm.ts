export interface QueryFormState {
  text: string;
  k: number;
  rerank: boolean;
}

export interface QueryForm {
  el: HTMLElement;
  state(): QueryFormState;
}

const K_CHOICES = Array.from({ length: 20 }, (_, i) => i + 1);

/** Free-text search box with k selector and re-rank toggle. */
export function createQueryForm(onSubmit: (state: QueryFormState) => void): QueryForm {
  const el = document.createElement('form');
  el.className = 'query-form';

  const input = document.createElement('input');
  input.type = 'text';
  input.className = 'query-form__text';
  input.placeholder = 'Describe what you are looking for…';
  input.setAttribute('aria-label', 'Search request');

  const kSelect = document.createElement('select');
  kSelect.className = 'query-form__k';
  kSelect.setAttribute('aria-label', 'Result count');
  for (const k of K_CHOICES) {
    const option = document.createElement('option');
    option.value = String(k);
    option.textContent = `top ${k}`;
    if (k === 5) option.selected = true;
    kSelect.appendChild(option);
  }

  const rerankLabel = document.createElement('label');
  rerankLabel.className = 'query-form__rerank';
  const rerank = document.createElement('input');
  rerank.type = 'checkbox';
  rerankLabel.append(rerank, document.createTextNode(' re-rank'));

  const submit = document.createElement('button');
  submit.type = 'submit';
  submit.className = 'query-form__submit';
  submit.textContent = 'Search';
  submit.disabled = true;

  input.addEventListener('input', () => {
    submit.disabled = input.value.trim().length === 0;
  });

  const state = (): QueryFormState => ({
    text: input.value.trim(),
    k: Number(kSelect.value),
    rerank: rerank.checked,
  });

  el.addEventListener('submit', (event) => {
    event.preventDefault();
    if (input.value.trim().length === 0) return;
    onSubmit(state());
  });

  el.append(input, kSelect, rerankLabel, submit);
  return { el, state };
}
