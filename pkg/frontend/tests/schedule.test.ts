/** Client-side schedule math: golden values and validation. */

import { describe, expect, it } from 'vitest';
import { makeSchedule, specError, type SchedulerSpec } from '../src/schedule';

// First/probe values of the published default attention schedule (4 dp).
const WA_SPEC: SchedulerSpec = { start: 0.7, end: 0.1, until: 50, type: 'logistic' };

describe('makeSchedule', () => {
  it('reproduces the default attention curve probe points', () => {
    const w = makeSchedule(WA_SPEC, 50);
    expect(w[0]).toBeCloseTo(0.696, 4);
    expect(w[10]).toBeCloseTo(0.6704, 4);
    expect(w[20]).toBeCloseTo(0.5288, 4);
    expect(w[49]).toBeCloseTo(0.104, 4);
  });

  it('realizes the default latent schedule exactly', () => {
    const w = makeSchedule({ start: 0.6, end: 0.0, until: 10, type: 'stepped' }, 50);
    expect(w.slice(0, 10)).toEqual(Array(10).fill(0.6));
    expect(w.slice(10)).toEqual(Array(40).fill(0.0));
  });

  it('is monotone non-increasing and bounded for all four types', () => {
    for (const type of ['stepped', 'linear', 'negexp', 'logistic'] as const) {
      const w = makeSchedule({ start: 0.9, end: 0.2, until: 13, type }, 40);
      expect(w.length).toBe(40);
      for (let i = 1; i < w.length; i++) {
        expect(w[i]).toBeLessThanOrEqual(w[i - 1] + 1e-12);
      }
      expect(Math.max(...w)).toBeLessThanOrEqual(0.9 + 1e-12);
      expect(Math.min(...w)).toBeGreaterThanOrEqual(0.2 - 1e-12);
    }
  });

  it('collapses to a constant when start equals end', () => {
    const w = makeSchedule({ start: 0.3, end: 0.3, until: 5, type: 'logistic' }, 10);
    expect(w).toEqual(Array(10).fill(0.3));
  });

  it('handles the until=1 logistic limit', () => {
    const w = makeSchedule({ start: 0.8, end: 0.2, until: 1, type: 'logistic' }, 4);
    expect(w[0]).toBeCloseTo(0.2 + 0.6 / (1 + Math.exp(-5)), 12);
    expect(w.slice(1)).toEqual([0.2, 0.2, 0.2]);
  });
});

describe('specError', () => {
  it('accepts valid specs', () => {
    expect(specError(WA_SPEC, 50)).toBeNull();
  });

  it('flags each violation with a message', () => {
    expect(specError({ ...WA_SPEC, end: 0.9 }, 50)).toMatch(/decay/);
    expect(specError({ ...WA_SPEC, start: 1.2 }, 50)).toMatch(/\[0, 1\]/);
    expect(specError({ ...WA_SPEC, until: 0 }, 50)).toMatch(/until/);
    expect(specError(WA_SPEC, 20)).toMatch(/step count/);
    expect(specError({ ...WA_SPEC, type: 'cubic' as never }, 50)).toMatch(/unknown/);
  });

  it('makeSchedule throws on invalid specs', () => {
    expect(() => makeSchedule({ ...WA_SPEC, until: 80 }, 50)).toThrow();
  });
});
