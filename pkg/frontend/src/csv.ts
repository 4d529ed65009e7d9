/** Readers for the CSV schemas emitted by the campaign runner. */

export interface HistogramBin {
  binLeft: number;
  binRight: number;
  count: number;
  semicircleDensity: number;
}

export interface SweepRow {
  theta: number;
  meanOverlapSq: number;
  stdOverlapSq: number;
  predictedOverlapSq: number;
  trials: number;
}

export function parseCsv(text: string): string[][] {
  return text
    .split(/\r?\n/)
    .filter((line) => line.trim() !== "")
    .map((line) => line.split(","));
}

function requireColumns(header: string[], expected: string[], what: string): void {
  for (const col of expected) {
    if (!header.includes(col)) {
      throw new Error(`${what}: missing required column "${col}" (found: ${header.join(",")})`);
    }
  }
}

export function readHistogramCsv(text: string): HistogramBin[] {
  const rows = parseCsv(text);
  if (rows.length === 0) throw new Error("histogram CSV is empty");
  const header = rows[0];
  requireColumns(header, ["bin_left", "bin_right", "count", "semicircle_density"], "histogram CSV");
  const idx = (name: string) => header.indexOf(name);
  return rows.slice(1).map((row) => ({
    binLeft: Number(row[idx("bin_left")]),
    binRight: Number(row[idx("bin_right")]),
    count: Number(row[idx("count")]),
    semicircleDensity: Number(row[idx("semicircle_density")]),
  }));
}

export function readSweepCsv(text: string): SweepRow[] {
  const rows = parseCsv(text);
  if (rows.length === 0) throw new Error("sweep CSV is empty");
  const header = rows[0];
  requireColumns(
    header,
    ["theta", "mean_overlap_sq", "std_overlap_sq", "predicted_overlap_sq", "trials"],
    "sweep CSV",
  );
  const idx = (name: string) => header.indexOf(name);
  const out = rows.slice(1).map((row) => ({
    theta: Number(row[idx("theta")]),
    meanOverlapSq: Number(row[idx("mean_overlap_sq")]),
    stdOverlapSq: Number(row[idx("std_overlap_sq")]),
    predictedOverlapSq: Number(row[idx("predicted_overlap_sq")]),
    trials: Number(row[idx("trials")]),
  }));
  if (out.length === 0) throw new Error("sweep CSV has no grid points");
  return out;
}
