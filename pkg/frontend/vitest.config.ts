import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    hookTimeout: 60_000,
    // the three files run sequentially; e2e spawns the Python service
    fileParallelism: false,
  },
});
