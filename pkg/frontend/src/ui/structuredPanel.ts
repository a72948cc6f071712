import type { StructuredQueryEcho } from '../types';

export interface StructuredSubmission {
  values: Record<string, string | number>;
  weights: Record<string, number>;
}

export interface StructuredPanel {
  el: HTMLElement;
  /** Populate the editor from a server echo (after a natural-language query). */
  setQuery(echo: StructuredQueryEcho): void;
  /** Parse the current editor content, or null after showing an inline error. */
  read(): StructuredSubmission | null;
}

const WEIGHT_MIN = 0.25;
const WEIGHT_MAX = 4;
const WEIGHT_STEP = 0.25;

/**
 * The inspect-and-refine centerpiece: an editable JSON view of the
 * structured query the service extracted, plus a weight slider per queried
 * field. Users correct the extraction and resubmit without another LLM call.
 */
export function createStructuredPanel(
  onSubmit: (submission: StructuredSubmission) => void,
): StructuredPanel {
  const el = document.createElement('section');
  el.className = 'structured-panel';

  const heading = document.createElement('h2');
  heading.textContent = 'Structured query';

  const textarea = document.createElement('textarea');
  textarea.className = 'structured-panel__editor';
  textarea.rows = 6;
  textarea.setAttribute('aria-label', 'Structured query JSON');
  textarea.placeholder = '{"field": "target", ...}';

  const slidersBox = document.createElement('div');
  slidersBox.className = 'structured-panel__weights';

  const error = document.createElement('p');
  error.className = 'structured-panel__error';
  error.hidden = true;

  const submit = document.createElement('button');
  submit.type = 'button';
  submit.className = 'structured-panel__submit';
  submit.textContent = 'Search with edited query';

  const sliders = new Map<string, HTMLInputElement>();

  function renderSliders(weights: Record<string, number>): void {
    sliders.clear();
    slidersBox.replaceChildren();
    for (const [field, value] of Object.entries(weights)) {
      const row = document.createElement('label');
      row.className = 'structured-panel__weight-row';
      const slider = document.createElement('input');
      slider.type = 'range';
      slider.min = String(WEIGHT_MIN);
      slider.max = String(WEIGHT_MAX);
      slider.step = String(WEIGHT_STEP);
      slider.value = String(Math.min(WEIGHT_MAX, Math.max(WEIGHT_MIN, value)));
      slider.dataset.field = field;
      const caption = document.createElement('span');
      caption.textContent = `${field} weight ${slider.value}`;
      slider.addEventListener('input', () => {
        caption.textContent = `${field} weight ${slider.value}`;
      });
      sliders.set(field, slider);
      row.append(caption, slider);
      slidersBox.appendChild(row);
    }
  }

  function showError(message: string): void {
    error.textContent = message;
    error.hidden = false;
  }

  function read(): StructuredSubmission | null {
    error.hidden = true;
    let parsed: unknown;
    try {
      parsed = JSON.parse(textarea.value);
    } catch {
      showError('not valid JSON');
      return null;
    }
    if (parsed === null || typeof parsed !== 'object' || Array.isArray(parsed)) {
      showError('the query must be a JSON object');
      return null;
    }
    const values = parsed as Record<string, string | number>;
    if (Object.keys(values).length === 0) {
      showError('at least one attribute required');
      return null;
    }
    const weights: Record<string, number> = {};
    for (const [field, slider] of sliders) {
      if (field in values) {
        const w = Number(slider.value);
        if (w !== 1) weights[field] = w;
      }
    }
    return { values, weights };
  }

  submit.addEventListener('click', () => {
    const submission = read();
    if (submission) onSubmit(submission);
  });

  el.append(heading, textarea, slidersBox, error, submit);
  return {
    el,
    setQuery(echo: StructuredQueryEcho) {
      textarea.value = JSON.stringify(echo.values, null, 2);
      renderSliders(echo.weights);
      error.hidden = true;
    },
    read,
  };
}
