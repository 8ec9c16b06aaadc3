// HTML renderers for the four panels. String-building keeps them pure and
// easy to test; main.ts owns event wiring via delegation.

import type { ViewState, FacetSlot } from './state.js';
import type { ItemCard } from './api.js';

export function escapeHtml(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function renderTranscript(view: ViewState): string {
  const rows = view.transcript.map((m) => {
    const conf = m.confidence !== undefined && m.confidence < 1
      ? `<span class="conf">${m.confidence.toFixed(2)}</span>` : '';
    return `<div class="msg ${m.speaker}">${escapeHtml(m.text)}${conf}</div>`;
  });
  return rows.join('\n');
}

export function renderFacets(view: ViewState): string {
  const blocks = view.facets.map((f: FacetSlot) => {
    const rows = f.values.map((v) => {
      const cls = v.active ? (v.negated ? 'facet-value negated' : 'facet-value active')
        : 'facet-value';
      return `<li class="${cls}" data-slot="${escapeHtml(f.slot)}" `
        + `data-value="${escapeHtml(v.value)}">`
        + `<span class="label">${escapeHtml(v.value)}</span>`
        + `<span class="count">${v.count}</span>`
        + `<button class="neg" title="exclude" data-negate="1">&ne;</button></li>`;
    });
    return `<section class="facet"><h3>${escapeHtml(f.slot)}</h3>`
      + `<ul>${rows.join('')}</ul></section>`;
  });
  return blocks.join('\n');
}

export function renderBelief(view: ViewState): string {
  const blocks = view.belief.map(({ slot, bars }) => {
    const rows = bars.map((b) => {
      const pct = Math.round(b.probability * 100);
      return `<div class="bar-row"><span class="label">${escapeHtml(b.value)}</span>`
        + `<div class="bar"><div class="fill" style="width:${pct}%"></div></div>`
        + `<span class="pct">${b.probability.toFixed(3)}</span></div>`;
    });
    return `<section class="belief-slot"><h3>${escapeHtml(slot)}</h3>`
      + `${rows.join('')}</section>`;
  });
  return blocks.join('\n');
}

function renderCard(card: ItemCard): string {
  const rows = Object.entries(card.values).map(([slot, value]) => {
    const shown = Array.isArray(value) ? value.join(', ') : String(value);
    return `<tr><th>${escapeHtml(slot)}</th><td>${escapeHtml(shown)}</td></tr>`;
  });
  return `<article class="card"><h4>${escapeHtml(card.name)}</h4>`
    + `<table>${rows.join('')}</table></article>`;
}

// Buckets render in order with their sizes; only the first bucket expands
// into item cards. An empty result shows a relaxation hint instead.
export function renderBuckets(view: ViewState): string {
  if (view.resultSize === 0) {
    return '<p class="empty">Nothing matches the current constraints. '
      + 'Try relaxing one of them.</p>';
  }
  const sizes = view.bucketSizes
    .map((n, i) => `<li class="${i === 0 ? 'current' : ''}">`
      + `bucket ${i}: ${n} item${n === 1 ? '' : 's'}</li>`)
    .join('');
  const cards = view.firstBucket.map(renderCard).join('');
  const summary = `${view.resultSize} items in ${view.bucketSizes.length} `
    + `bucket${view.bucketSizes.length === 1 ? '' : 's'}`;
  return `<p class="summary">${summary}</p><ol class="sizes">${sizes}</ol>`
    + `<div class="cards">${cards}</div>`;
}
