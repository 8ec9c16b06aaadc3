// ViewState derivation. Everything here is a pure function of the API's
// /state document, so refetching after a reload reproduces the identical
// ViewState; no engine rule is duplicated client-side.

import type { StateDoc, ItemCard } from './api.js';

export interface Message {
  speaker: 'user' | 'system';
  text: string;
  confidence?: number;
}

export interface FacetValue {
  value: string;
  count: number;
  active: boolean;    // an accepted constraint names this value
  negated: boolean;   // the active constraint is an exclusion
}

export interface FacetSlot {
  slot: string;
  values: FacetValue[];
}

export interface BeliefBar {
  value: string;
  probability: number;
}

export interface ViewState {
  sessionId: string;
  closed: boolean;
  resultSize: number;
  transcript: Message[];
  facets: FacetSlot[];
  belief: { slot: string; bars: BeliefBar[] }[];
  bucketSizes: number[];
  firstBucket: ItemCard[];
  constraints: string[];
  preferences: string[];
}

export function constraintText(slot: string, value: string, negated: boolean): string {
  return `${slot} ${negated ? '!=' : '='} ${value}`;
}

function activeMarks(constraints: string[], slot: string, value: string) {
  return {
    active: constraints.includes(constraintText(slot, value, false))
      || constraints.includes(constraintText(slot, value, true)),
    negated: constraints.includes(constraintText(slot, value, true)),
  };
}

export function deriveViewState(doc: StateDoc): ViewState {
  const transcript: Message[] = [];
  for (const event of doc.history) {
    if (event.user_text) {
      transcript.push({
        speaker: 'user',
        text: event.user_text,
        confidence: event.confidence ?? undefined,
      });
    }
    transcript.push({ speaker: 'system', text: event.system_text });
  }

  // zero-count values never appear: the facet map only carries counts >= 1
  const facets: FacetSlot[] = Object.entries(doc.result.facets)
    .map(([slot, counts]) => ({
      slot,
      values: Object.entries(counts).map(([value, count]) => ({
        value,
        count,
        ...activeMarks(doc.constraints, slot, value),
      })),
    }));

  const belief = Object.entries(doc.belief).map(([slot, probs]) => ({
    slot,
    bars: Object.entries(probs)
      .filter(([value]) => value !== '__none__')
      .map(([value, probability]) => ({ value, probability }))
      .sort((a, b) => b.probability - a.probability || (a.value < b.value ? -1 : 1))
      .slice(0, 6),
  }));

  return {
    sessionId: doc.session_id,
    closed: doc.closed,
    resultSize: doc.result.size,
    transcript,
    facets,
    belief,
    bucketSizes: doc.buckets.sizes,
    firstBucket: doc.buckets.first_bucket,
    constraints: doc.constraints,
    preferences: doc.preferences,
  };
}

// A facet click becomes the textual turn a user could have typed, so the
// server cannot tell the two apart. Returns null when the click would be
// a no-op (the constraint is already active).
export function turnForFacetClick(
  view: ViewState, slot: string, value: string, negated = false,
): string | null {
  const text = constraintText(slot, value, negated);
  if (view.constraints.includes(text)) return null;
  return text;
}
