export interface Banner {
  el: HTMLElement;
  show(message: string): void;
  clear(): void;
}

export function createBanner(): Banner {
  const el = document.createElement('div');
  el.className = 'banner';
  el.setAttribute('role', 'alert');
  el.hidden = true;
  return {
    el,
    show(message: string) {
      el.textContent = message;
      el.hidden = false;
    },
    clear() {
      el.textContent = '';
      el.hidden = true;
    },
  };
}
