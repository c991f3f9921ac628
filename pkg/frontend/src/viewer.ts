/**
 * Dataset viewer: pair list with per-metric badges, metric filtering that
 * round-trips through the pairs endpoint, and chunk display with span
 * highlighting (question / answer / context modes).
 *
 * All rendering is pure string/segment construction over server payloads;
 * no score or span is computed client-side.
 */

import {
  ApiClient,
  Attribution,
  Highlight,
  MetricClause,
  PairContext,
  QAPair,
  SortSpec,
} from "./api.js";

export type HighlightMode = "question" | "answer" | "context";

export interface ViewerState {
  groupId: string | null;
  datasetId: string | null;
  selectedPairId: string | null;
  highlightMode: HighlightMode;
  filter: MetricClause[];
  sort: SortSpec | null;
  pageSize: number;
  cursor: number;
}

export function initialViewerState(): ViewerState {
  return {
    groupId: null,
    datasetId: null,
    selectedPairId: null,
    highlightMode: "context",
    filter: [],
    sort: null,
    pageSize: 50,
    cursor: 0,
  };
}

/** One run of chunk text, either plain or carrying a highlight kind. */
export interface Segment {
  text: string;
  kind: "plain" | "question" | "answer" | "both" | "sentence";
}

/**
 * Split chunk text into renderable segments for a highlight mode.
 *
 * Modes "question" and "answer" color exactly the server-provided spans of
 * that source ("both"-source spans belong to either mode); mode "context"
 * emphasizes the attributed sentence span instead.
 */
export function segmentChunk(
  chunkText: string,
  highlights: Highlight[],
  attribution: Attribution,
  mode: HighlightMode,
): Segment[] {
  let spans: { span: [number, number]; kind: Segment["kind"] }[];
  if (mode === "context") {
    spans = [{ span: attribution.sentence_span, kind: "sentence" }];
  } else {
    spans = highlights
      .filter((h) => h.source === mode || h.source === "both")
      .map((h) => ({ span: h.char_span, kind: h.source }));
  }
  spans.sort((a, b) => a.span[0] - b.span[0]);

  const segments: Segment[] = [];
  let pos = 0;
  for (const { span, kind } of spans) {
    const [start, end] = span;
    if (start > pos) {
      segments.push({ text: chunkText.slice(pos, start), kind: "plain" });
    }
    segments.push({ text: chunkText.slice(start, end), kind });
    pos = end;
  }
  if (pos < chunkText.length) {
    segments.push({ text: chunkText.slice(pos), kind: "plain" });
  }
  return segments.filter((s) => s.text.length > 0);
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderSegments(segments: Segment[]): string {
  return segments
    .map((s) =>
      s.kind === "plain"
        ? escapeHtml(s.text)
        : `<mark class="hl-${s.kind}">${escapeHtml(s.text)}</mark>`,
    )
    .join("");
}

/** Metric badges for one pair, e.g. `combined.bleu2 0.813`. */
export function metricBadges(pair: QAPair): string {
  const badges: string[] = [];
  for (const [field, metrics] of Object.entries(pair.metric_report)) {
    for (const [metric, value] of Object.entries(metrics)) {
      badges.push(
        `<span class="badge" data-metric="${field}.${metric}">` +
          `${field}.${metric} ${value.toFixed(3)}</span>`,
      );
    }
  }
  return badges.join("");
}

export function renderPairList(pairs: QAPair[], state: ViewerState): string {
  if (pairs.length === 0) {
    return `<div class="empty-state">No pairs match the current filter.</div>`;
  }
  const page = pairs.slice(state.cursor, state.cursor + state.pageSize);
  const items = page.map(
    (p) =>
      `<li class="pair" data-pair-id="${p.pair_id}">` +
      `<div class="question">${escapeHtml(p.question)}</div>` +
      `<div class="answer">${escapeHtml(p.answer)}</div>` +
      `<div class="badges">${metricBadges(p)}</div></li>`,
  );
  return `<ul class="pair-list">${items.join("")}</ul>`;
}

export function renderPairDetail(context: PairContext, mode: HighlightMode): string {
  const segments = segmentChunk(
    context.chunk_text,
    context.highlights,
    context.attribution,
    mode,
  );
  return `<div class="chunk" data-mode="${mode}">${renderSegments(segments)}</div>`;
}

/** Fetch-and-render cycle for the viewer; re-runs whenever the filter,
 * sort, or selection changes. Filters are serialized into the pairs query
 * and never applied client-side. */
export class Viewer {
  state: ViewerState = initialViewerState();
  private inflight: Promise<QAPair[]> | null = null;

  constructor(private readonly api: ApiClient) {}

  async loadPairs(): Promise<QAPair[]> {
    if (this.state.datasetId === null) {
      return [];
    }
    // dedupe: a re-render while a fetch is in flight reuses it
    if (this.inflight === null) {
      this.inflight = this.api
        .listPairs(
          this.state.datasetId,
          this.state.filter,
          this.state.sort ?? undefined,
        )
        .finally(() => {
          this.inflight = null;
        });
    }
    return this.inflight;
  }

  async applyFilter(filter: MetricClause[]): Promise<QAPair[]> {
    this.state = { ...this.state, filter, cursor: 0 };
    return this.loadPairs();
  }

  setHighlightMode(mode: HighlightMode): void {
    this.state = { ...this.state, highlightMode: mode };
  }

  async showPair(pairId: string): Promise<string> {
    this.state = { ...this.state, selectedPairId: pairId };
    const context = await this.api.pairContext(pairId);
    return renderPairDetail(context, this.state.highlightMode);
  }
}
