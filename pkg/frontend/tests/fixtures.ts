/** Shared test fixtures. */

// 8x8 grayscale 16-bit PNG (seeded random), sized for the toy backend.
export const TEST_IMAGE_B64 =
  'iVBORw0KGgoAAAANSUhEUgAAAAgAAAAIEAAAAACx9D0UAAAAk0lEQVR4nAGIAHf/AMf3mxi1tRbPoXb7' +
  'FWxkHMYA9VCtDDJ7rAv+IzWh2pay6wA4vy9N9ENXJ3D/p/VwtwARAgrhSZfOn0QV/iKJ8lgnL9YEd6nG' +
  'tssH1RHRu/t+3MMXeQRKWy6sun3LXzKU0lwt7v2vAKIQAxOlS/j5tVgTpZdtURkB63AZM/9nFZc+O4sJ' +
  'r6cZBHbWP14+wGh4AAAAAElFTkSuQmCC';

/** Edit payload sized for an 8-step toy run (schedules must fit T=8). */
export function testEditPayload(overrides: Record<string, unknown> = {}) {
  return {
    image_b64: TEST_IMAGE_B64,
    source_prompt: 'a cat on a mat',
    target_prompt: 'a dog on a mat',
    attention_schedule: { start: 0.7, end: 0.1, until: 8, type: 'logistic' },
    latent_schedule: { start: 0.6, end: 0.0, until: 2, type: 'stepped' },
    p2p: {
      edit_type: 'replace',
      cross_replace_fraction: 0.8,
      self_replace_fraction: 0.4,
      reweight: {},
    },
    sampler: { steps: 8, guidance: 7.5, inversion_guidance: 1.0, seed: 0 },
    start_iteration: 0,
    ...overrides,
  };
}
