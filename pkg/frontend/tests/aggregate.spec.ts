import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { aggregateTable, renderAggregate } from "../src/aggregate.js";
import { readAggregateCsv } from "../src/csv.js";

const fixture = (name: string) =>
  fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url));

describe("readAggregateCsv", () => {
  it("returns the rows verbatim", () => {
    const rows = readAggregateCsv(fixture("aggregate.csv"));
    expect(rows).toEqual([
      {
        env: "toy-o2-k2",
        featurizer: "ground-truth",
        method: "tabular",
        evalMean: 18.666666666666664,
        evalStd: 0.6666666666666661,
        nSeeds: 2,
      },
      {
        env: "toy-o2-k2",
        featurizer: "raw",
        method: "tabular",
        evalMean: 11.0,
        evalStd: 0.0,
        nSeeds: 1,
      },
    ]);
  });

  it("rejects a wrong header", () => {
    const path = join(mkdtempSync(join(tmpdir(), "cslab-report-")), "bad.csv");
    writeFileSync(path, "a,b,c\n1,2,3\n");
    expect(() => readAggregateCsv(path)).toThrow(/expected header/);
  });
});

describe("aggregateTable", () => {
  it("flags single-seed rows", () => {
    const table = aggregateTable(readAggregateCsv(fixture("aggregate.csv")));
    expect(table).toContain("| env");
    expect(table).toContain("18.6667");
    expect(table).toContain("1 *");
    expect(table).toContain("single seed: std is 0 by convention");
  });

  it("writes the table when given an output path", () => {
    const out = join(mkdtempSync(join(tmpdir(), "cslab-report-")), "table.md");
    const table = renderAggregate(fixture("aggregate.csv"), out);
    expect(existsSync(out)).toBe(true);
    expect(readFileSync(out, "utf8")).toBe(table);
  });
});
