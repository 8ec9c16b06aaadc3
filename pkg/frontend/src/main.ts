// Wiring: one session per page, one in-flight turn at a time. Every state
// change refetches /state and re-derives the ViewState, so a page reload
// lands on exactly the same view.

import { ApiError, Client } from './api.js';
import { deriveViewState, turnForFacetClick, ViewState } from './state.js';
import { renderBelief, renderBuckets, renderFacets, renderTranscript } from './render.js';

const KB_ID = new URLSearchParams(window.location.search).get('kb')
  ?? 'hotels-sample';

const transcriptEl = document.getElementById('transcript') as HTMLElement;
const facetsEl = document.getElementById('facets') as HTMLElement;
const beliefEl = document.getElementById('belief') as HTMLElement;
const bucketsEl = document.getElementById('buckets') as HTMLElement;
const inputEl = document.getElementById('input') as HTMLInputElement;
const sendEl = document.getElementById('send') as HTMLButtonElement;
const noticeEl = document.getElementById('notice') as HTMLElement;
const confidenceEl = document.getElementById('confidence') as HTMLInputElement;
const confidenceOut = document.getElementById('confidence-value') as HTMLElement;

const client = new Client('');
let sessionId: string | null = null;
let view: ViewState | null = null;
let pending = false;

function setNotice(text: string) {
  noticeEl.textContent = text;
  noticeEl.hidden = !text;
}

function setPending(value: boolean) {
  pending = value;
  inputEl.disabled = value || (view?.closed ?? false);
  sendEl.disabled = inputEl.disabled;
}

function paint() {
  if (!view) return;
  transcriptEl.innerHTML = renderTranscript(view);
  transcriptEl.scrollTop = transcriptEl.scrollHeight;
  facetsEl.innerHTML = renderFacets(view);
  beliefEl.innerHTML = renderBelief(view);
  bucketsEl.innerHTML = renderBuckets(view);
  if (view.closed) setNotice('Session closed. Reload to start a new one.');
}

async function refresh() {
  if (!sessionId) return;
  view = deriveViewState(await client.getState(sessionId));
  paint();
}

async function submitTurn(text: string) {
  if (!sessionId || pending) return;
  const trimmed = text.trim();
  if (!trimmed) return; // empty input issues no request
  setPending(true);
  setNotice('');
  try {
    await client.postTurn(sessionId, trimmed, Number(confidenceEl.value));
    await refresh();
    inputEl.value = '';
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      setNotice('A turn is still being processed; input is disabled until it finishes.');
      return; // stay disabled; the next refresh re-enables
    }
    setNotice(err instanceof Error ? err.message : String(err));
  } finally {
    if (!(view?.closed ?? false)) setPending(false);
  }
}

async function onFacetClick(target: HTMLElement) {
  if (!view) return;
  const row = target.closest('li.facet-value') as HTMLElement | null;
  if (!row) return;
  const negated = (target as HTMLElement).dataset.negate === '1';
  const turn = turnForFacetClick(view, row.dataset.slot!, row.dataset.value!, negated);
  if (turn === null) {
    setNotice('That constraint is already active.');
    return;
  }
  await submitTurn(turn);
}

async function boot() {
  const created = await client.createSession(KB_ID);
  sessionId = created.session_id;
  await refresh();

  sendEl.addEventListener('click', () => submitTurn(inputEl.value));
  inputEl.addEventListener('keydown', (e) => {
    if (e.key === 'Enter') submitTurn(inputEl.value);
  });
  facetsEl.addEventListener('click', (e) => onFacetClick(e.target as HTMLElement));
  confidenceEl.addEventListener('input', () => {
    confidenceOut.textContent = Number(confidenceEl.value).toFixed(2);
  });
}

boot().catch((err) => setNotice(`Could not start a session: ${err}`));
