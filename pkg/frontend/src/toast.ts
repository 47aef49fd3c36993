/** Non-blocking transient notices; errors never interrupt playback. */

import { el } from "./dom.js";

export type Toast = (message: string) => void;

const MAX_VISIBLE = 3;
const LIFETIME_MS = 4000;

export function installToasts(host: HTMLElement): Toast {
  const stack = el("div", { class: "toast-stack", "data-testid": "toasts" });
  host.append(stack);
  return (message: string) => {
    const note = el("div", { class: "toast" }, [message]);
    stack.append(note);
    while (stack.children.length > MAX_VISIBLE) {
      stack.firstElementChild?.remove();
    }
    setTimeout(() => note.remove(), LIFETIME_MS);
  };
}
