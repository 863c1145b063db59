/** Command-line front end: `cslab-report curves|csm|table`. */

import { parseArgs } from "node:util";

import { renderAggregate } from "./aggregate.js";
import { renderCsm } from "./csm.js";
import { DEFAULT_GROUPING, GROUP_FIELDS, GroupField, plotCurves } from "./curves.js";

class UsageError extends Error {}

const USAGE = `usage:
  cslab-report curves [--out DIR] [--group env,method] RUN_DIR...
  cslab-report csm [--out FILE.svg] MACHINE.dot
  cslab-report table [--out FILE.md] AGGREGATE.csv

curves  one SVG panel per group, mean with +-1 and +-2 std bands per seed set
csm     circular state-machine rendering of a DOT export
table   markdown view of an aggregated seed report
`;

function parseGrouping(raw: string): GroupField[] {
  const fields = raw.split(",").map((f) => f.trim()).filter((f) => f.length > 0);
  for (const f of fields) {
    if (!(GROUP_FIELDS as readonly string[]).includes(f)) {
      throw new UsageError(`unknown grouping field ${JSON.stringify(f)}; pick from ${GROUP_FIELDS.join(", ")}`);
    }
  }
  if (fields.length === 0) throw new UsageError("--group needs at least one field");
  return fields as GroupField[];
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "curves": {
        const { values, positionals } = parseArgs({
          args: rest,
          options: {
            out: { type: "string", default: "figures" },
            group: { type: "string" },
          },
          allowPositionals: true,
        });
        if (positionals.length === 0) throw new UsageError("curves needs at least one run directory");
        const grouping = values.group === undefined ? DEFAULT_GROUPING : parseGrouping(values.group);
        const { figures } = plotCurves(positionals, values.out!, grouping);
        for (const fig of figures) {
          console.log(`${fig.path}: ${fig.series.length} series (${fig.panel})`);
        }
        return 0;
      }
      case "csm": {
        const { values, positionals } = parseArgs({
          args: rest,
          options: { out: { type: "string" } },
          allowPositionals: true,
        });
        if (positionals.length !== 1) throw new UsageError("csm needs exactly one DOT file");
        const out = values.out ?? positionals[0].replace(/\.dot$/, "") + ".svg";
        const render = renderCsm(positionals[0], out);
        console.log(`${out}: ${render.nodeCount} states, ${render.edgeCount} transitions`);
        return 0;
      }
      case "table": {
        const { values, positionals } = parseArgs({
          args: rest,
          options: { out: { type: "string" } },
          allowPositionals: true,
        });
        if (positionals.length !== 1) throw new UsageError("table needs exactly one CSV file");
        const table = renderAggregate(positionals[0], values.out);
        if (values.out === undefined) process.stdout.write(table);
        else console.log(values.out);
        return 0;
      }
      case undefined:
      case "-h":
      case "--help":
      case "help": {
        process.stderr.write(USAGE);
        return command === undefined ? 2 : 0;
      }
      default:
        process.stderr.write(`unknown command ${JSON.stringify(command)}\n${USAGE}`);
        return 2;
    }
  } catch (err) {
    const code = (err as { code?: string }).code;
    if (err instanceof UsageError || (typeof code === "string" && code.startsWith("ERR_PARSE_ARGS"))) {
      process.stderr.write(`${err instanceof Error ? err.message : String(err)}\n${USAGE}`);
      return 2;
    }
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}
