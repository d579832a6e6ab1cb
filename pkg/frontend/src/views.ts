// DOM rendering for the four screens. Pure functions of the store plus a
// handful of callbacks; no framework.

import type { ModelStatus } from "./api.js";
import type { ActionCard, Message, UiStore } from "./state.js";

export interface ViewCallbacks {
  onStart(): void;
  onSend(prompt: string): void;
  onOpenSettings(): void;
  onCloseSettings(): void;
  onSaveSettings(username: string, humanColor: string, botColor: string): void;
  onConfirmAction(messageIndex: number, actionIndex: number): void;
  onRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, store: UiStore, cb: ViewCallbacks): void {
  root.textContent = "";
  switch (store.route) {
    case "landing":
      root.appendChild(renderLanding(cb));
      break;
    case "loading":
      root.appendChild(renderLoading(store.status, cb));
      break;
    case "chat":
      root.appendChild(renderChat(store, cb));
      break;
    case "settings":
      root.appendChild(renderSettings(store, cb));
      break;
  }
}

function renderLanding(cb: ViewCallbacks): HTMLElement {
  const page = el("div", "page landing");
  page.appendChild(el("h1", "", "Pocket Assistant"));
  page.appendChild(
    el("p", "tagline", "A small language model that lives on this machine: no cloud, no account."),
  );
  const button = el("button", "primary", "Get started");
  button.id = "start";
  button.addEventListener("click", () => cb.onStart());
  page.appendChild(button);
  return page;
}

function renderLoading(status: ModelStatus, cb: ViewCallbacks): HTMLElement {
  const page = el("div", "page loading");
  page.appendChild(el("h1", "", "Preparing the model"));
  const detail = el("p", "status-detail");
  detail.id = "status-detail";
  const bar = el("div", "progress-track");
  const fill = el("div", "progress-fill");
  fill.id = "progress-fill";
  bar.appendChild(fill);

  if (status.status === "downloading") {
    const pct = status.total > 0 ? Math.floor((100 * status.done) / status.total) : 0;
    detail.textContent = `downloading: ${status.done} / ${status.total} bytes (${pct}%)`;
    fill.style.width = `${pct}%`;
  } else if (status.status === "error") {
    detail.textContent = `error: ${status.message ?? "unknown"}`;
    const retry = el("button", "primary", "Retry");
    retry.id = "retry";
    retry.addEventListener("click", () => cb.onRetry());
    page.appendChild(detail);
    page.appendChild(retry);
    return page;
  } else {
    detail.textContent = `${status.status}...`;
    if (status.status === "ready") fill.style.width = "100%";
  }
  page.appendChild(detail);
  page.appendChild(bar);
  return page;
}

function renderChat(store: UiStore, cb: ViewCallbacks): HTMLElement {
  const page = el("div", "page chat");
  const header = el("header", "chat-header");
  header.appendChild(el("span", "title", "Pocket Assistant"));
  const gear = el("button", "icon", "settings");
  gear.id = "open-settings";
  gear.addEventListener("click", () => cb.onOpenSettings());
  header.appendChild(gear);
  page.appendChild(header);

  const log = el("div", "transcript");
  log.id = "transcript";
  store.transcript.forEach((message, index) => {
    log.appendChild(renderMessage(message, index, store, cb));
  });
  page.appendChild(log);

  const bar = el("form", "composer");
  const input = el("input");
  input.id = "prompt";
  input.placeholder = store.busy ? "generating..." : "type a message";
  input.disabled = store.busy;
  const send = el("button", "primary", "Send");
  send.id = "send";
  send.type = "submit";
  send.disabled = store.busy;
  bar.appendChild(input);
  bar.appendChild(send);
  bar.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const prompt = input.value.trim();
    if (prompt && !store.busy) cb.onSend(prompt);
  });
  page.appendChild(bar);
  return page;
}

function renderMessage(
  message: Message,
  index: number,
  store: UiStore,
  cb: ViewCallbacks,
): HTMLElement {
  const who = message.who;
  const wrap = el("div", `message ${who}`);
  const colors = store.settings.colors ?? {};
  const color = who === "human" ? colors.human : colors.bot;
  const name =
    who === "human" ? store.settings.username || "you" : "bot";
  wrap.appendChild(el("span", "speaker", name));
  const bubble = el("div", "bubble", message.text);
  if (color) bubble.style.backgroundColor = color;
  if (message.pending) bubble.classList.add("pending");
  wrap.appendChild(bubble);
  message.actions.forEach((action, actionIndex) => {
    wrap.appendChild(renderActionCard(action, index, actionIndex, cb));
  });
  for (const warning of message.warnings) {
    wrap.appendChild(el("span", "warning-badge", warning));
  }
  return wrap;
}

function renderActionCard(
  action: ActionCard,
  messageIndex: number,
  actionIndex: number,
  cb: ViewCallbacks,
): HTMLElement {
  const card = el("div", `action-card ${action.kind}`);
  if (action.kind === "call") {
    card.appendChild(el("h3", "", `Call ${action.contact ?? ""}`));
    card.appendChild(el("button", "stub", "Dial"));
  } else if (action.kind === "search") {
    card.appendChild(el("h3", "", `Search: ${action.query ?? ""}`));
    const link = el("a", "stub", "Open search");
    link.setAttribute(
      "data-href",
      `https://duckduckgo.com/?q=${encodeURIComponent(action.query ?? "")}`,
    );
    card.appendChild(link);
  } else {
    card.appendChild(el("h3", "", `Calendar: ${action.title ?? ""}`));
    card.appendChild(el("p", "", action.when ?? ""));
    card.appendChild(el("button", "stub", "Add to calendar"));
  }
  if (action.mismatchedClose && !action.confirmed) {
    const badge = el(
      "div",
      "mismatch-warning",
      `closed with <${action.mismatchedClose}>; confirm before acting`,
    );
    const confirm = el("button", "confirm", "Looks right");
    confirm.addEventListener("click", () => cb.onConfirmAction(messageIndex, actionIndex));
    badge.appendChild(confirm);
    card.appendChild(badge);
  }
  return card;
}

function renderSettings(store: UiStore, cb: ViewCallbacks): HTMLElement {
  const page = el("div", "page settings");
  page.appendChild(el("h1", "", "Settings"));
  const form = el("form");

  const nameLabel = el("label", "", "Username");
  const name = el("input");
  name.id = "username";
  name.value = store.settings.username ?? "";
  nameLabel.appendChild(name);

  const humanLabel = el("label", "", "Your bubble color");
  const human = el("input");
  human.id = "human-color";
  human.value = store.settings.colors?.human ?? "#2c4a6e";
  humanLabel.appendChild(human);

  const botLabel = el("label", "", "Bot bubble color");
  const bot = el("input");
  bot.id = "bot-color";
  bot.value = store.settings.colors?.bot ?? "#3a3a3a";
  botLabel.appendChild(bot);

  const error = el("p", "form-error");
  error.id = "settings-error";

  const save = el("button", "primary", "Save");
  save.id = "save-settings";
  save.type = "submit";
  const back = el("button", "", "Back to chat");
  back.id = "close-settings";
  back.type = "button";
  back.addEventListener("click", () => cb.onCloseSettings());

  form.append(nameLabel, humanLabel, botLabel, error, save, back);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (!name.value.trim()) {
      error.textContent = "username cannot be empty";
      return;
    }
    cb.onSaveSettings(name.value.trim(), human.value, bot.value);
  });
  page.appendChild(form);
  return page;
}
