/**
 * Console bootstrap: load state from the admin API, render, and keep
 * re-projecting on every acknowledged policy version from the event
 * stream. Drag-and-drop is the only mutation surface.
 */

import { AdminApi, ApiError } from "./api.js";
import type { ClientInfo, GroupDef, PolicyRule } from "./model.js";
import { project } from "./model.js";
import { render, toast, type UiState } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? window.location.origin;
const token = params.get("token") ?? "";
const api = new AdminApi(base, token);

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app element");
}

let groups: GroupDef[] = [];
let rules: PolicyRule[] = [];
let clients: ClientInfo[] = [];
const state: UiState = {
  projection: { containers: [], globalMembers: [], customMembers: [] },
  clients: [],
  version: 0,
  lookups: new Map(),
  connected: false,
  error: null,
};

function repaint(): void {
  state.projection = project(groups, rules, clients);
  state.clients = clients;
  render(root as HTMLElement, state, onDrop);
}

async function loadState(): Promise<void> {
  const [g, p, c] = await Promise.all([api.groups(), api.policy(), api.clients()]);
  groups = g;
  rules = p.rules;
  clients = c;
  state.version = p.version;
  state.error = null;
  repaint();
}

function onDrop(uid: number, group: string | null): void {
  api.assign(uid, group).catch((err: unknown) => {
    // no optimistic move happened, so the icon stays (snaps back) where
    // the acknowledged policy put it; surface the server diagnostic
    const message = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    toast(`assignment rejected: ${message}`);
    repaint();
  });
  // membership updates only when the server's policy event arrives
}

async function watchEvents(): Promise<void> {
  for (;;) {
    try {
      state.connected = true;
      await api.events(async (event) => {
        if (event.type === "policy" && typeof event.version === "number") {
          if (event.version !== state.version) {
            await loadState();
          } else {
            state.version = event.version;
            repaint();
          }
        } else if (event.type === "lookup" && typeof event.uid === "number") {
          const previous = state.lookups.get(event.uid) ?? 0;
          state.lookups.set(event.uid, Math.max(previous, event.count ?? previous + 1));
          repaint();
        }
      });
    } catch {
      // fall through to retry
    }
    state.connected = false;
    state.error = `admin API unreachable at ${base}; retrying…`;
    repaint();
    await new Promise((resolve) => setTimeout(resolve, 2000));
    try {
      await loadState();
    } catch {
      // keep the banner until a load succeeds
    }
  }
}

loadState().catch(() => {
  state.error = `admin API unreachable at ${base}; retrying…`;
  repaint();
});
void watchEvents();
