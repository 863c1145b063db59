/** Markdown view of the aggregated seed report (`aggregate.csv`). */

import { writeFileSync } from "node:fs";

import { AggregateRow, readAggregateCsv } from "./csv.js";

function fmt(v: number): string {
  if (Number.isInteger(v)) return v.toString();
  return v.toFixed(4);
}

export function aggregateTable(rows: AggregateRow[]): string {
  const header = ["env", "featurizer", "method", "eval mean", "eval std", "seeds"];
  const body = rows.map((r) => [
    r.env,
    r.featurizer,
    r.method,
    fmt(r.evalMean),
    fmt(r.evalStd),
    r.nSeeds === 1 ? "1 *" : r.nSeeds.toString(),
  ]);
  const widths = header.map((h, i) => Math.max(h.length, ...body.map((row) => row[i].length)));
  const line = (cells: string[]) =>
    "| " + cells.map((c, i) => c.padEnd(widths[i])).join(" | ") + " |";
  const out = [
    line(header),
    "| " + widths.map((w) => "-".repeat(w)).join(" | ") + " |",
    ...body.map(line),
  ];
  if (rows.some((r) => r.nSeeds === 1)) {
    out.push("", "\\* single seed: std is 0 by convention");
  }
  return out.join("\n") + "\n";
}

export function renderAggregate(csvPath: string, outPath?: string): string {
  const table = aggregateTable(readAggregateCsv(csvPath));
  if (outPath !== undefined) writeFileSync(outPath, table);
  return table;
}
