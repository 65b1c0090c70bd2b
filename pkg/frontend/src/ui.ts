/**
 * DOM rendering and drag-and-drop wiring. The screens are re-rendered
 * from a fresh projection whenever the server acknowledges a policy
 * version; a rejected drop never moves an icon (it snaps back because the
 * icon is only ever drawn where the acknowledged policy says it lives).
 */

import type { ClientInfo, Projection } from "./model.js";
import { GLOBAL_CONTAINER } from "./model.js";

export interface UiState {
  projection: Projection;
  clients: ClientInfo[];
  version: number;
  lookups: Map<number, number>;
  connected: boolean;
  error: string | null;
}

export type DropHandler = (uid: number, group: string | null) => void;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function clientIcon(
  client: ClientInfo,
  lookups: Map<number, number>,
  custom: boolean,
): HTMLElement {
  const icon = el("div", "client");
  icon.draggable = true;
  icon.dataset.uid = String(client.uid);
  icon.addEventListener("dragstart", (event) => {
    event.dataTransfer?.setData("text/uid", String(client.uid));
    icon.classList.add("dragging");
  });
  icon.addEventListener("dragend", () => icon.classList.remove("dragging"));
  const glyph = el("div", `glyph label-${client.label}`, String(client.uid % 100));
  icon.appendChild(glyph);
  icon.appendChild(el("div", "uid", `uid ${client.uid}`));
  icon.appendChild(el("div", "label", client.label));
  const count = lookups.get(client.uid) ?? client.lookups;
  icon.appendChild(el("div", "lookups", `${count} lookups`));
  if (custom) {
    icon.appendChild(el("div", "badge", "custom"));
  }
  return icon;
}

function board(
  name: string,
  subtitle: string,
  members: number[],
  state: UiState,
  onDrop: DropHandler,
): HTMLElement {
  const section = el("section", "board");
  section.dataset.group = name;
  const header = el("header");
  header.appendChild(el("h2", undefined, name));
  header.appendChild(el("p", "bindings", subtitle));
  section.appendChild(header);
  const zone = el("div", "zone");
  section.appendChild(zone);
  const clientsByUid = new Map(state.clients.map((c) => [c.uid, c]));
  const customs = new Set(state.projection.customMembers);
  for (const uid of members) {
    const client = clientsByUid.get(uid);
    if (client) {
      zone.appendChild(clientIcon(client, state.lookups, customs.has(uid)));
    }
  }
  section.addEventListener("dragover", (event) => {
    event.preventDefault();
    section.classList.add("over");
  });
  section.addEventListener("dragleave", () => section.classList.remove("over"));
  section.addEventListener("drop", (event) => {
    event.preventDefault();
    section.classList.remove("over");
    const raw = event.dataTransfer?.getData("text/uid");
    if (!raw) {
      return;
    }
    onDrop(Number(raw), name === GLOBAL_CONTAINER ? null : name);
  });
  return section;
}

export function render(root: HTMLElement, state: UiState, onDrop: DropHandler): void {
  root.replaceChildren();

  const status = el("div", "status");
  const dot = el("span", state.connected ? "dot live" : "dot dead");
  status.appendChild(dot);
  status.appendChild(
    el("span", undefined, state.connected ? `policy v${state.version}` : "disconnected"),
  );
  root.appendChild(status);

  if (state.error) {
    root.appendChild(el("div", "banner", state.error));
  }

  const boards = el("div", "boards");
  boards.appendChild(
    board(GLOBAL_CONTAINER, "no rules: every service global", state.projection.globalMembers, state, onDrop),
  );
  for (const container of state.projection.containers) {
    const subtitle = container.bindings
      .map((b) => `${b.service}:${b.namespace}`)
      .join("  ");
    boards.appendChild(board(container.name, subtitle, container.members, state, onDrop));
  }
  root.appendChild(boards);
}

export function toast(message: string): void {
  const node = el("div", "toast", message);
  document.body.appendChild(node);
  setTimeout(() => node.remove(), 4000);
}
