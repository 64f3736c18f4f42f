import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node", // the DOM-dependent suites opt into jsdom per file
    include: ["tests/**/*.test.ts"],
    // jsdom has no canvas backend; the overlay renderer already no-ops on a
    // null context, so drop jsdom's "not implemented" chatter from the output
    onConsoleLog(log) {
      if (log.includes("Not implemented: HTMLCanvasElement")) return false;
    },
  },
});
