export { AGGREGATE_HEADER, CURVE_HEADER, readAggregateCsv, readCurveCsv } from "./csv.js";
export type { AggregateRow, CurvePoint } from "./csv.js";
export {
  DEFAULT_GROUPING,
  GROUP_FIELDS,
  aggregateBundle,
  bundleCurves,
  discoverSeedDirs,
  loadRun,
  plotCurves,
} from "./curves.js";
export type {
  Band,
  BandSeries,
  BundleResult,
  CurveBundle,
  CurveFigure,
  GroupField,
  PlotResult,
  RunMeta,
  SeedCurve,
} from "./curves.js";
export { DotError, parseDot, parseEdgeLabel } from "./dot.js";
export type { DotEdge, DotGraph, DotNode, EdgeLabel } from "./dot.js";
export { renderCsm, renderCsmText } from "./csm.js";
export type { CsmRender } from "./csm.js";
export { aggregateTable, renderAggregate } from "./aggregate.js";
export { main } from "./cli.js";
