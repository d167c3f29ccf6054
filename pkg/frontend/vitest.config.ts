import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    testTimeout: 30_000,
    hookTimeout: 120_000,
    // The e2e suite owns a fixed server port; keep files sequential.
    fileParallelism: false,
  },
});
