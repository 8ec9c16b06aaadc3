// Live test against the real engine: spawns the Python service and checks
// the click/type equivalence contract plus reload reproducibility. The
// click path and the typed path must yield identical /state documents
// (up to the session id and creation timestamp).

import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { spawn, ChildProcess } from 'node:child_process';

import { Client } from '../src/api.js';
import { deriveViewState, turnForFacetClick } from '../src/state.js';

const PORT = 8191;
const BASE = `http://127.0.0.1:${PORT}`;
const KB = '../src/prefsearch/data/hotels-sample.json';

let server: ChildProcess;
const client = new Client(BASE);

async function waitForServer(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${BASE}/kbs/hotels-sample/facets`);
      if (r.ok) return;
    } catch { /* not up yet */ }
    await new Promise((res) => setTimeout(res, 250));
  }
  throw new Error('service did not come up');
}

beforeAll(async () => {
  server = spawn('python3', ['-m', 'prefsearch.cli', 'serve',
    '--kb', KB, '--port', String(PORT)],
    { cwd: new URL('..', import.meta.url).pathname, stdio: 'ignore' });
  await waitForServer();
}, 30000);

afterAll(() => {
  server?.kill();
});

function comparable(doc: Record<string, unknown>): string {
  const { session_id: _s, created: _c, ...rest } = doc;
  return JSON.stringify(rest, Object.keys(rest).sort());
}

const CLICKS: Array<[string, string, boolean]> = [
  ['location', 'kyoto', false],
  ['location', 'minami', true],
  ['type', 'hotel', false],
  ['amenities', 'free-wifi', false],
  ['breakfast', 'included', false],
];

describe('click/type equivalence against the live engine', () => {
  it('clicked and typed constraints yield identical state documents', async () => {
    for (const [slot, value, negated] of CLICKS) {
      const clicked = await client.createSession('hotels-sample');
      const typed = await client.createSession('hotels-sample');

      const view = deriveViewState(await client.getState(clicked.session_id));
      const turn = turnForFacetClick(view, slot, value, negated);
      expect(turn).not.toBeNull();

      await client.postTurn(clicked.session_id, turn!);          // click path
      await client.postTurn(typed.session_id, turn!);            // typed path

      const a = await client.getState(clicked.session_id);
      const b = await client.getState(typed.session_id);
      expect(comparable(a as unknown as Record<string, unknown>))
        .toBe(comparable(b as unknown as Record<string, unknown>));

      await client.deleteSession(clicked.session_id);
      await client.deleteSession(typed.session_id);
    }
  }, 30000);

  it('reloading (refetching /state) reproduces the identical ViewState', async () => {
    const s = await client.createSession('hotels-sample');
    await client.postTurn(s.session_id, 'a hotel in Kyoto with free Wi-Fi', 0.9);
    const first = deriveViewState(await client.getState(s.session_id));
    const second = deriveViewState(await client.getState(s.session_id));
    expect(second).toEqual(first);
    await client.deleteSession(s.session_id);
  }, 30000);

  it('second turn while one is in flight surfaces a 409', async () => {
    const s = await client.createSession('hotels-sample');
    const slow = client.postTurn(s.session_id, 'a hotel in Kyoto');
    const race = client.postTurn(s.session_id, 'stars > 2');
    const results = await Promise.allSettled([slow, race]);
    const rejected = results.filter((r) => r.status === 'rejected');
    // the race may lose legitimately; when it collides the API must say 409
    for (const r of rejected) {
      expect((r as PromiseRejectedResult).reason.status).toBe(409);
    }
    await client.deleteSession(s.session_id);
  }, 30000);
});
