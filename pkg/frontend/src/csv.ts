/** Readers for the pipeline's CSV artifacts (RFC 4180, header row first). */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export const CURVE_HEADER = [
  "step",
  "episode",
  "train_reward",
  "eval_reward_mean",
  "eval_reward_std",
  "seed",
] as const;

export const AGGREGATE_HEADER = [
  "env",
  "featurizer",
  "method",
  "eval_mean",
  "eval_std",
  "n_seeds",
] as const;

/** One evaluation checkpoint of a single training run. */
export interface CurvePoint {
  step: number;
  episode: number;
  trainReward: number;
  evalRewardMean: number;
  evalRewardStd: number;
  seed: number;
}

/** One (env, featurizer, method) row of an aggregated report. */
export interface AggregateRow {
  env: string;
  featurizer: string;
  method: string;
  evalMean: number;
  evalStd: number;
  nSeeds: number;
}

function parseRows(path: string): string[][] {
  const text = readFileSync(path, "utf8");
  const out = Papa.parse<string[]>(text, { skipEmptyLines: true });
  if (out.errors.length > 0) {
    const e = out.errors[0];
    const where = e.row === undefined ? "" : ` (row ${e.row})`;
    throw new Error(`${path}: ${e.message}${where}`);
  }
  return out.data;
}

function checkHeader(path: string, rows: string[][], expected: readonly string[]): void {
  if (rows.length === 0 || rows[0].join(",") !== expected.join(",")) {
    throw new Error(`${path}: expected header ${expected.join(",")}`);
  }
}

function num(path: string, field: string, raw: string): number {
  const v = Number(raw);
  if (raw === "" || !Number.isFinite(v)) {
    throw new Error(`${path}: ${field} is not a number: ${JSON.stringify(raw)}`);
  }
  return v;
}

export function readCurveCsv(path: string): CurvePoint[] {
  const rows = parseRows(path);
  checkHeader(path, rows, CURVE_HEADER);
  return rows.slice(1).map((r) => ({
    step: num(path, "step", r[0]),
    episode: num(path, "episode", r[1]),
    trainReward: num(path, "train_reward", r[2]),
    evalRewardMean: num(path, "eval_reward_mean", r[3]),
    evalRewardStd: num(path, "eval_reward_std", r[4]),
    seed: num(path, "seed", r[5]),
  }));
}

export function readAggregateCsv(path: string): AggregateRow[] {
  const rows = parseRows(path);
  checkHeader(path, rows, AGGREGATE_HEADER);
  return rows.slice(1).map((r) => ({
    env: r[0],
    featurizer: r[1],
    method: r[2],
    evalMean: num(path, "eval_mean", r[3]),
    evalStd: num(path, "eval_std", r[4]),
    nSeeds: num(path, "n_seeds", r[5]),
  }));
}
