import type { StateDoc } from '../src/api.js';

export function stateDoc(overrides: Partial<StateDoc> = {}): StateDoc {
  return {
    session_id: 's1',
    kb_id: 'hotels-sample',
    created: '2024-01-01T00:00:00+00:00',
    turn: 1,
    closed: false,
    belief: {
      location: { kyoto: 0.3, osaka: 0.1, __none__: 0.2, minami: 0.05 },
    },
    constraints: ['location = kyoto'],
    preferences: [],
    result: {
      size: 3,
      facets: { location: { kyoto: 3, shimogyo: 2, nakagyo: 1 } },
    },
    buckets: {
      sizes: [1, 2],
      first_bucket: [
        { id: 'h01', name: 'Kamo River Inn', values: { stars: 3, amenities: ['free-wifi'] } },
      ],
      scores: { h01: 1.0 },
      wins: { h01: 2 },
    },
    history: [
      { turn: 0, user_text: null, confidence: null, system_text: 'Hello!', system_act: { type: 'greet' } },
      { turn: 1, user_text: 'in Kyoto', confidence: 0.9, system_text: 'What price range are you looking for?', system_act: { type: 'request', slot: 'pricerange' } },
    ],
    ...overrides,
  };
}
