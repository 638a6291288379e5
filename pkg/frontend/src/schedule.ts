/**
 * Client-side mixing-weight schedules.
 *
 * Duplicates the server's formulas so curves render instantly while the user
 * drags a slider; the curve editor's "verify" action overlays the server's
 * GET /schedulers/preview values to guard against drift. Both sides compute
 * in IEEE doubles, so agreement is expected to machine precision.
 */

export type DecayType = 'stepped' | 'linear' | 'negexp' | 'logistic';

export const DECAY_TYPES: DecayType[] = ['stepped', 'linear', 'negexp', 'logistic'];

export interface SchedulerSpec {
  start: number;
  end: number;
  until: number;
  type: DecayType;
}

export const DEFAULT_ATTENTION_SPEC: SchedulerSpec = {
  start: 0.7, end: 0.1, until: 50, type: 'logistic',
};
export const DEFAULT_LATENT_SPEC: SchedulerSpec = {
  start: 0.6, end: 0.0, until: 10, type: 'stepped',
};

/** Human-readable reason a spec is invalid, or null when it is fine. */
export function specError(spec: SchedulerSpec, steps: number): string | null {
  if (!Number.isFinite(spec.start) || !Number.isFinite(spec.end)) {
    return 'start and end must be numbers';
  }
  if (spec.start < 0 || spec.start > 1 || spec.end < 0 || spec.end > 1) {
    return 'start and end must lie in [0, 1]';
  }
  if (spec.end > spec.start) {
    return 'schedules decay: end must not exceed start';
  }
  if (!Number.isInteger(spec.until) || spec.until < 1) {
    return 'until must be an integer >= 1';
  }
  if (spec.until > steps) {
    return `until must not exceed the step count (${steps})`;
  }
  if (!DECAY_TYPES.includes(spec.type)) {
    return `unknown decay type ${spec.type}`;
  }
  return null;
}

/** Realize a spec into its length-`steps` weight vector (loop order). */
export function makeSchedule(spec: SchedulerSpec, steps: number): number[] {
  const error = specError(spec, steps);
  if (error !== null) {
    throw new Error(error);
  }
  const { start, end, until } = spec;
  const weights = new Array<number>(steps);

  if (start === end) {
    weights.fill(start);
    return weights;
  }

  for (let i = 0; i < steps; i++) {
    switch (spec.type) {
      case 'stepped':
        weights[i] = i < until ? start : end;
        break;
      case 'linear':
        weights[i] = i < until ? start - ((start - end) * i) / until : end;
        break;
      case 'negexp':
        // time constant until/3, hard clamp to `end` from i = until onwards
        weights[i] = i < until ? end + (start - end) * Math.exp((-3.0 * i) / until) : end;
        break;
      case 'logistic': {
        // midpoint (until-1)/2, slope spanning exponent [-5, 5]; until = 1
        // degenerates to the continuous limit of that parameterization
        let exponent: number;
        if (until === 1) {
          exponent = i === 0 ? -5.0 : Infinity;
        } else {
          const c = (until - 1) / 2.0;
          const k = 10.0 / (until - 1);
          exponent = k * (i - c);
        }
        weights[i] = end + (start - end) / (1.0 + Math.exp(exponent));
        break;
      }
    }
  }
  return weights;
}

/** Largest |client - server| over a pair of weight arrays. */
export function maxDeviation(client: number[], server: number[]): number {
  if (client.length !== server.length) {
    return Infinity;
  }
  let worst = 0;
  for (let i = 0; i < client.length; i++) {
    worst = Math.max(worst, Math.abs(client[i] - server[i]));
  }
  return worst;
}
