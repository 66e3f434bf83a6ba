// DOM layer: renders state into the static page and wires triage actions.
// No matching logic lives here; the heaviest computation is a sort.

import type { ConsoleState } from "./state";
import { formatTs, visibleAlerts, visibleFeed, visibleRoster } from "./state";
import type { AlertView, ResolveAction } from "./types";

export interface Actions {
  resolve(alertId: string, action: ResolveAction): void;
  setGateFilter(filter: string): void;
  setRosterFilter(filter: string): void;
}

const PLACEHOLDER_SILHOUETTE =
  "data:image/svg+xml;utf8," +
  encodeURIComponent(
    '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 64 64">' +
      '<rect width="64" height="64" fill="#1c2128"/>' +
      '<circle cx="32" cy="24" r="11" fill="#444c56"/>' +
      '<path d="M10 58c2-13 11-19 22-19s20 6 22 19z" fill="#444c56"/></svg>',
  );

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function render(doc: Document, state: ConsoleState, actions: Actions): void {
  renderHeader(doc, state);
  renderFeed(doc, state);
  renderQueue(doc, state, actions);
  renderRoster(doc, state);
  renderNotice(doc, state);
}

function renderHeader(doc: Document, state: ConsoleState): void {
  const dot = doc.getElementById("conn-dot");
  const label = doc.getElementById("conn-label");
  if (dot && label) {
    dot.className = `dot ${state.connection === "live" ? "live" : "down"}`;
    label.textContent = state.connection;
  }
  const stats = doc.getElementById("stats");
  if (stats) {
    if (state.stats) {
      const s = state.stats;
      stats.textContent =
        `frames ${s.frames_processed}/${s.frames_received}` +
        ` · dropped ${s.frames_dropped} · budget violations ${s.budget_violations}`;
    } else {
      stats.textContent = "no stats yet";
    }
  }
}

function renderFeed(doc: Document, state: ConsoleState): void {
  const list = doc.getElementById("feed");
  if (!list) {
    return;
  }
  list.textContent = "";
  const items = visibleFeed(state);
  if (!items.length) {
    list.appendChild(el(doc, "li", "empty", "No activity yet — waiting for camera traffic."));
    return;
  }
  for (const item of items) {
    const li = el(doc, "li", `feed-item ${item.tone}`);
    li.appendChild(el(doc, "span", "time", formatTs(item.ts)));
    li.appendChild(el(doc, "span", "gate", item.gate));
    li.appendChild(el(doc, "span", "text", item.text));
    list.appendChild(li);
  }
}

function renderQueue(doc: Document, state: ConsoleState, actions: Actions): void {
  const list = doc.getElementById("queue");
  const count = doc.getElementById("queue-count");
  if (!list) {
    return;
  }
  const alerts = visibleAlerts(state);
  if (count) {
    count.textContent = String(alerts.length);
  }
  list.textContent = "";
  if (!alerts.length) {
    list.appendChild(el(doc, "li", "empty", "No unknown persons awaiting triage."));
    return;
  }
  for (const alert of alerts) {
    list.appendChild(alertCard(doc, alert, state, actions));
  }
}

function alertCard(
  doc: Document,
  alert: AlertView,
  state: ConsoleState,
  actions: Actions,
): HTMLLIElement {
  const li = el(doc, "li", "alert-card");
  li.dataset.alertId = alert.alert_id;

  const img = el(doc, "img", "snapshot");
  img.alt = "unknown person snapshot";
  img.src = alert.snapshot
    ? `data:image/png;base64,${alert.snapshot}`
    : PLACEHOLDER_SILHOUETTE;
  li.appendChild(img);

  const body = el(doc, "div", "alert-body");
  body.appendChild(el(doc, "div", "alert-title", `Unknown person · ${alert.camera_id}`));
  body.appendChild(
    el(doc, "div", "alert-meta", `${alert.gate} gate · seen ${formatTs(alert.created_ts)} · ${alert.state}`),
  );

  const buttons = el(doc, "div", "alert-actions");
  const validateBtn = el(doc, "button", "btn validate", "Validate");
  const registerBtn = el(doc, "button", "btn register", "Register");
  const dismissBtn = el(doc, "button", "btn dismiss", "Dismiss");
  buttons.append(validateBtn, registerBtn, dismissBtn);
  body.appendChild(buttons);

  const form = el(doc, "div", "alert-form");
  body.appendChild(form);

  validateBtn.addEventListener("click", () =>
    showValidateForm(doc, form, alert, state, actions),
  );
  registerBtn.addEventListener("click", () => showRegisterForm(doc, form, alert, actions));
  dismissBtn.addEventListener("click", () => actions.resolve(alert.alert_id, { action: "dismiss" }));

  li.appendChild(body);
  return li;
}

function showValidateForm(
  doc: Document,
  form: HTMLElement,
  alert: AlertView,
  state: ConsoleState,
  actions: Actions,
): void {
  form.textContent = "";
  const input = el(doc, "input", "name-input");
  input.placeholder = "search enrolled name…";
  const listId = `gallery-options-${alert.alert_id}`;
  input.setAttribute("list", listId);
  const datalist = el(doc, "datalist");
  datalist.id = listId;
  for (const entry of state.gallery) {
    const option = el(doc, "option");
    option.value = entry.display_name;
    option.label = entry.person_id;
    datalist.appendChild(option);
  }
  const submit = el(doc, "button", "btn confirm", "Confirm identity");
  submit.addEventListener("click", () => {
    const name = input.value.trim().toLowerCase();
    const match = state.gallery.find((e) => e.display_name.toLowerCase() === name);
    if (!match) {
      form.appendChild(el(doc, "div", "form-error", "No enrolled person by that name."));
      return;
    }
    actions.resolve(alert.alert_id, { action: "validate", person_id: match.person_id });
  });
  form.append(input, datalist, submit);
  input.focus();
}

function showRegisterForm(
  doc: Document,
  form: HTMLElement,
  alert: AlertView,
  actions: Actions,
): void {
  form.textContent = "";
  const input = el(doc, "input", "name-input register-name");
  input.placeholder = "full name for registration…";
  const submit = el(doc, "button", "btn confirm register-confirm", "Register & admit");
  submit.addEventListener("click", () => {
    const name = input.value.trim();
    if (!name) {
      form.appendChild(el(doc, "div", "form-error", "A display name is required."));
      return;
    }
    actions.resolve(alert.alert_id, { action: "register", display_name: name });
  });
  form.append(input, submit);
  input.focus();
}

function renderRoster(doc: Document, state: ConsoleState): void {
  const tbody = doc.getElementById("roster-body");
  if (!tbody) {
    return;
  }
  tbody.textContent = "";
  const rows = visibleRoster(state);
  if (!rows.length) {
    const tr = el(doc, "tr", "empty-row");
    const td = el(doc, "td", "empty", "Nobody on the roster yet.");
    td.colSpan = 5;
    tr.appendChild(td);
    tbody.appendChild(tr);
    return;
  }
  for (const record of rows) {
    const tr = el(doc, "tr", record.status === "inside" ? "inside" : "departed");
    tr.dataset.personId = record.person_id;
    tr.appendChild(el(doc, "td", "name", record.display_name));
    tr.appendChild(el(doc, "td", undefined, record.person_id));
    tr.appendChild(el(doc, "td", "mono entry-ts", formatTs(record.entry_ts)));
    tr.appendChild(el(doc, "td", "mono", formatTs(record.exit_ts)));
    tr.appendChild(el(doc, "td", `status ${record.status}`, record.status));
    tbody.appendChild(tr);
  }
}

function renderNotice(doc: Document, state: ConsoleState): void {
  const banner = doc.getElementById("notice");
  if (!banner) {
    return;
  }
  if (state.notice) {
    banner.textContent = state.notice;
    banner.classList.remove("hidden");
  } else {
    banner.classList.add("hidden");
  }
}

export function wireFilters(doc: Document, actions: Actions): void {
  const gate = doc.getElementById("gate-filter") as HTMLSelectElement | null;
  gate?.addEventListener("change", () => actions.setGateFilter(gate.value));
  const roster = doc.getElementById("roster-filter") as HTMLSelectElement | null;
  roster?.addEventListener("change", () => actions.setRosterFilter(roster.value));
}
