/**
 * Side-by-side model explorer: pose one question about a document to two
 * providers and render both answers next to the document text. A failed
 * side renders an error badge without hiding the healthy pane.
 */

import { ApiClient, ApiError, ComparisonRecord } from "./api.js";

export interface Pane {
  model: string;
  answer: string | null;
  errorCode: string | null;
  latencyMs: number | null;
}

export interface ComparisonView {
  comparisonId: string;
  question: string;
  paneA: Pane;
  paneB: Pane;
}

export function toView(record: ComparisonRecord): ComparisonView {
  return {
    comparisonId: record.comparison_id,
    question: record.question,
    paneA: {
      model: record.model_a,
      answer: record.answer_a,
      errorCode: record.error_a,
      latencyMs: record.latency_a_ms,
    },
    paneB: {
      model: record.model_b,
      answer: record.answer_b,
      errorCode: record.error_b,
      latencyMs: record.latency_b_ms,
    },
  };
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderPane(pane: Pane): string {
  const header =
    `<header>${escapeHtml(pane.model)}` +
    (pane.latencyMs !== null ? ` <span class="latency">${pane.latencyMs} ms</span>` : "") +
    `</header>`;
  const body =
    pane.answer !== null
      ? `<div class="answer">${escapeHtml(pane.answer)}</div>`
      : `<div class="error-badge">${escapeHtml(pane.errorCode ?? "error")}</div>`;
  return `<section class="pane">${header}${body}</section>`;
}

export function renderComparison(view: ComparisonView): string {
  return (
    `<div class="comparison" data-comparison-id="${view.comparisonId}">` +
    renderPane(view.paneA) +
    renderPane(view.paneB) +
    `</div>`
  );
}

export class Explorer {
  history: ComparisonView[] = [];

  constructor(private readonly api: ApiClient) {}

  /** POST the question to both models; resolves to the rendered pair of
   * panes. Only a both-models failure surfaces as an error. */
  async ask(
    docId: string,
    question: string,
    modelA: string,
    modelB: string,
  ): Promise<ComparisonView> {
    const record = await this.api.compare({
      doc_id: docId,
      question,
      model_a: modelA,
      model_b: modelB,
    });
    const view = toView(record);
    this.history.push(view);
    return view;
  }

  async loadHistory(): Promise<ComparisonView[]> {
    this.history = (await this.api.listComparisons()).map(toView);
    return this.history;
  }
}

export { ApiError };
