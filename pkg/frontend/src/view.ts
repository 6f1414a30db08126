import type { MembershipReport, ModelConfig, PerConfigResult } from "./types.js";

// Pure DOM builders. Scores render with two decimals; every value on screen
// is read straight from a validated API payload.

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderModelSelector(
  doc: Document,
  models: ModelConfig[],
  selected: string,
  onChange: (modelId: string) => void,
): HTMLElement {
  const wrap = el(doc, "div", "model-selector");
  if (models.length === 0) {
    wrap.appendChild(el(doc, "p", "empty-state",
      "No auditable models are registered yet; the operator must load a registry first."));
    return wrap;
  }
  const label = el(doc, "label", undefined, "Audited model ");
  const select = el(doc, "select");
  select.id = "model-filter";
  const all = el(doc, "option", undefined, "all models");
  all.value = "";
  select.appendChild(all);
  for (const id of [...new Set(models.map((m) => m.model_id))]) {
    const option = el(doc, "option", undefined, id);
    option.value = id;
    select.appendChild(option);
  }
  select.value = selected;
  select.addEventListener("change", () => onChange(select.value));
  label.appendChild(select);
  wrap.appendChild(label);
  const n = models.length;
  wrap.appendChild(el(doc, "p", "config-count",
    `${n} auditable configuration${n === 1 ? "" : "s"}`));
  return wrap;
}

function renderScoreBar(doc: Document, entry: PerConfigResult): HTMLElement {
  const row = el(doc, "div", "score-row");
  row.appendChild(el(doc, "span", "score-label",
    `${entry.model_id} · ${entry.auditable_data} · ${entry.architecture}`));
  if (entry.error !== undefined) {
    row.classList.add("config-error");
    row.appendChild(el(doc, "span", "score-error", `failed: ${entry.error}`));
    return row;
  }
  const score = entry.score as number;
  const track = el(doc, "div", "score-track");
  const fill = el(doc, "div", `score-fill ${entry.decision}`);
  fill.style.width = `${(score * 100).toFixed(1)}%`;
  track.appendChild(fill);
  row.appendChild(track);
  row.appendChild(el(doc, "span", "score-value", score.toFixed(2)));
  row.appendChild(el(doc, "span", `decision ${entry.decision}`, entry.decision as string));
  return row;
}

export function renderReportCard(
  doc: Document,
  imageName: string,
  report: MembershipReport,
): HTMLElement {
  const card = el(doc, "section", "report-card");
  const header = el(doc, "header");
  header.appendChild(el(doc, "h3", undefined, imageName));
  header.appendChild(el(doc, "span", "sample-id", report.sample_id));
  card.appendChild(header);

  const aggregate = el(doc, "div", "aggregate");
  aggregate.appendChild(el(doc, "span", "aggregate-value",
    report.aggregate_likelihood.toFixed(2)));
  aggregate.appendChild(el(doc, "span", "aggregate-label",
    "aggregate membership likelihood"));
  card.appendChild(aggregate);

  const bars = el(doc, "div", "score-bars");
  for (const entry of report.per_config) {
    bars.appendChild(renderScoreBar(doc, entry));
  }
  card.appendChild(bars);

  card.appendChild(el(doc, "p", "disclaimer", report.disclaimer));
  return card;
}

export function renderErrorBanner(
  doc: Document,
  message: string,
  onRetry?: () => void,
): HTMLElement {
  const banner = el(doc, "div", "error-banner");
  banner.appendChild(el(doc, "span", "error-message", message));
  if (onRetry) {
    const retry = el(doc, "button", "retry-button", "Retry");
    retry.addEventListener("click", onRetry);
    banner.appendChild(retry);
  }
  return banner;
}

export function renderBusy(doc: Document, text: string): HTMLElement {
  return el(doc, "p", "busy-indicator", text);
}
