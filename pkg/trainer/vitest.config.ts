import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    // training runs dominate; individual tests override upward as needed
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
