import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    testTimeout: 30_000,
    hookTimeout: 300_000, // e2e boot may train toy checkpoints on first run
  },
});
