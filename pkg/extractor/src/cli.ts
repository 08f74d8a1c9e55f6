#!/usr/bin/env node
/**
 * extract --images <root> --classes <file> --model <id> --grid MxN --out <file>
 */

import { extractGrid, writeContainer } from "./extract.js";

function parseArgs(argv: string[]): Record<string, string> {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    if (argv[i].startsWith("--")) {
      args[argv[i].slice(2)] = argv[i + 1];
      i++;
    }
  }
  return args;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command !== "extract") {
    console.error("usage: aovr-extract extract --images <root> --classes <file> " +
      "--model <id> --grid MxN --out <file>");
    return 2;
  }
  const args = parseArgs(rest);
  for (const key of ["images", "classes", "model", "grid", "out"]) {
    if (!args[key]) {
      console.error(`missing required flag --${key}`);
      return 2;
    }
  }
  const gridMatch = /^(\d+)x(\d+)$/.exec(args.grid);
  if (!gridMatch) {
    console.error(`--grid must look like 12x12, got '${args.grid}'`);
    return 2;
  }
  const container = extractGrid(args.images, args.classes, args.model,
    parseInt(gridMatch[1], 10), parseInt(gridMatch[2], 10));
  writeContainer(container, args.out);
  console.log(`wrote ${args.out}: ${container.classes.length} classes, ` +
    `${container.objects.length} objects, D=${container.dim}, ` +
    `grid ${container.azimuths}x${container.elevations}`);
  return 0;
}

if (process.argv[1] && (process.argv[1].endsWith("cli.js") || process.argv[1].endsWith("cli.ts"))) {
  process.exit(main(process.argv.slice(2)));
}
