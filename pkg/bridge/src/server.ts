/**
 * Stdio entry point: reads newline-delimited JSON requests on stdin,
 * writes one reply per request on stdout. Exits when stdin closes.
 */

import { createInterface } from "node:readline";

import { handleLine } from "./protocol.js";

const rl = createInterface({ input: process.stdin, terminal: false });

rl.on("line", (line: string) => {
  const reply = handleLine(line);
  if (reply !== null) {
    process.stdout.write(JSON.stringify(reply) + "\n");
  }
});

rl.on("close", () => {
  process.exit(0);
});
