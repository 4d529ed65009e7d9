/** Figure builders over campaign output files.
 *
 * Everything here consumes emitted CSV/JSON verbatim; the only computation
 * is histogram rescaling and evaluation of the overlap curve 1 - 1/theta^2.
 * Observed outliers are drawn as x markers, predictions as o markers, and
 * every figure embeds the campaign config hash in its footer.
 */

import { readHistogramCsv, readSweepCsv } from "./csv.js";
import { configHash, extractOutliers, Manifest } from "./manifest.js";
import {
  document as svgDocument,
  line,
  linearScale,
  niceTicks,
  polyline,
  rect,
  text,
  xAxis,
  yAxis,
} from "./svg.js";

const WIDTH = 720;
const HEIGHT = 440;
const MARGIN = { left: 55, right: 20, top: 30, bottom: 55 };

const OBSERVED_COLOR = "#1f6fd6";
const PREDICTED_COLOR = "#e68a00";

function footer(hash: string): string {
  return text(MARGIN.left, HEIGHT - 8, `config_hash: ${hash}`, {
    size: 9,
    fill: "#777",
    cls: "footer",
  });
}

export function plotEsd(histogramCsv: string, manifest: Manifest): string {
  const bins = readHistogramCsv(histogramCsv);
  if (bins.length === 0) throw new Error("histogram CSV has no bins");
  const total = bins.reduce((acc, b) => acc + b.count, 0) || 1;
  const markers = extractOutliers(manifest);

  const xLo = Math.min(bins[0].binLeft, -2.5);
  const xHi = Math.max(bins[bins.length - 1].binRight, ...markers.observed, ...markers.predicted, 2.5) + 0.2;
  const densities = bins.map((b) => b.count / total / (b.binRight - b.binLeft || 1));
  const yHi = Math.max(...densities, ...bins.map((b) => b.semicircleDensity)) * 1.15 || 1;

  const sx = linearScale([xLo, xHi], [MARGIN.left, WIDTH - MARGIN.right]);
  const sy = linearScale([0, yHi], [HEIGHT - MARGIN.bottom, MARGIN.top]);
  const body: string[] = [];

  for (let i = 0; i < bins.length; i++) {
    const b = bins[i];
    body.push(
      rect(
        sx(b.binLeft),
        sy(densities[i]),
        sx(b.binRight) - sx(b.binLeft),
        sy(0) - sy(densities[i]),
        "#9ecae1",
        'class="esd-bar" stroke="#6baed6" stroke-width="0.5"',
      ),
    );
  }
  const curve: Array<[number, number]> = bins.map((b) => [
    sx(0.5 * (b.binLeft + b.binRight)),
    sy(b.semicircleDensity),
  ]);
  body.push(polyline(curve, "#d62728", 2));

  markers.observed.forEach((value) => {
    body.push(
      text(sx(value), sy(0) - 6, "×", {
        size: 18,
        fill: OBSERVED_COLOR,
        cls: "outlier-observed",
        anchor: "middle",
        data: { value: String(value) },
      }),
    );
  });
  markers.predicted.forEach((value) => {
    body.push(
      text(sx(value), sy(0) - 22, "○", {
        size: 14,
        fill: PREDICTED_COLOR,
        cls: "outlier-predicted",
        anchor: "middle",
        data: { value: String(value) },
      }),
    );
  });

  body.push(...xAxis(sx, sy(0), niceTicks(xLo, xHi)));
  body.push(...yAxis(sy, MARGIN.left, niceTicks(0, yHi, 5)));
  body.push(text(WIDTH / 2, 18, "Empirical spectral distribution vs semicircle law", { size: 13, anchor: "middle" }));
  body.push(text(WIDTH / 2, HEIGHT - 28, "eigenvalue", { size: 11, anchor: "middle" }));
  body.push(footer(configHash(manifest)));
  return svgDocument(WIDTH, HEIGHT, body);
}

export function plotOverlapSweep(sweepCsv: string, manifest: Manifest): string {
  const rows = readSweepCsv(sweepCsv);
  const thetas = rows.map((r) => r.theta);
  const xLo = Math.min(...thetas) - 0.2;
  const xHi = Math.max(...thetas) + 0.2;
  const sx = linearScale([xLo, xHi], [MARGIN.left, WIDTH - MARGIN.right]);
  const sy = linearScale([-0.05, 1.05], [HEIGHT - MARGIN.bottom, MARGIN.top]);
  const body: string[] = [];

  // limiting overlap curve 1 - 1/theta^2 on a fine grid
  const curve: Array<[number, number]> = [];
  for (let i = 0; i <= 300; i++) {
    const theta = xLo + ((xHi - xLo) * i) / 300;
    const value = theta > 1 ? 1 - 1 / (theta * theta) : 0;
    curve.push([sx(theta), sy(value)]);
  }
  body.push(`<g class="prediction-curve">${polyline(curve, PREDICTED_COLOR, 2)}</g>`);

  for (const row of rows) {
    const x = sx(row.theta);
    const lo = sy(row.meanOverlapSq - row.stdOverlapSq);
    const hi = sy(row.meanOverlapSq + row.stdOverlapSq);
    body.push(`<g class="error-bar" data-theta="${row.theta}">`);
    body.push(line(x, lo, x, hi, OBSERVED_COLOR, 1.5));
    body.push(line(x - 4, lo, x + 4, lo, OBSERVED_COLOR, 1.5));
    body.push(line(x - 4, hi, x + 4, hi, OBSERVED_COLOR, 1.5));
    body.push("</g>");
    body.push(
      text(x, sy(row.meanOverlapSq) + 4, "×", {
        size: 14,
        fill: OBSERVED_COLOR,
        cls: "overlap-mean",
        anchor: "middle",
        data: {
          theta: String(row.theta),
          mean: String(row.meanOverlapSq),
          std: String(row.stdOverlapSq),
          predicted: String(row.predictedOverlapSq),
        },
      }),
    );
  }

  body.push(...xAxis(sx, sy(-0.05), niceTicks(xLo, xHi)));
  body.push(...yAxis(sy, MARGIN.left, [0, 0.25, 0.5, 0.75, 1]));
  body.push(text(WIDTH / 2, 18, "Eigenvector alignment vs signal strength", { size: 13, anchor: "middle" }));
  body.push(text(WIDTH / 2, HEIGHT - 28, "theta", { size: 11, anchor: "middle" }));
  body.push(footer(configHash(manifest)));
  return svgDocument(WIDTH, HEIGHT, body);
}

interface TrialRecordFile {
  config_hash?: string;
  record?: {
    eigenvalues?: number[];
    eigenvectors?: number[][];
  };
}

export function plotEigvecEntries(recordJson: string, manifest: Manifest | null = null): string {
  const parsed = JSON.parse(recordJson) as TrialRecordFile;
  const record = parsed.record ?? (parsed as unknown as TrialRecordFile["record"]);
  const vectors = record?.eigenvectors;
  if (!vectors || vectors.length === 0) {
    throw new Error(
      "trial record has no stored eigenvectors; rerun the campaign with --store-vectors",
    );
  }
  const eigenvalues = record?.eigenvalues ?? [];
  const panels = Math.min(vectors.length, 3);
  const panelHeight = (HEIGHT - MARGIN.top - MARGIN.bottom) / panels;
  const n = vectors[0].length;
  const sx = linearScale([0, n - 1], [MARGIN.left, WIDTH - MARGIN.right]);
  const body: string[] = [];

  for (let p = 0; p < panels; p++) {
    const entries = vectors[p];
    const top = MARGIN.top + p * panelHeight;
    const amp = Math.max(...entries.map((v) => Math.abs(v))) * 1.1 || 1;
    const sy = linearScale([-amp, amp], [top + panelHeight - 8, top + 8]);
    body.push(`<g class="eigvec-panel" data-index="${p + 1}">`);
    body.push(line(MARGIN.left, sy(0), WIDTH - MARGIN.right, sy(0), "#ccc"));
    const points: Array<[number, number]> = entries.map((v, i) => [sx(i), sy(v)]);
    body.push(polyline(points, OBSERVED_COLOR, 0.8));
    const label =
      eigenvalues[p] !== undefined
        ? `u_${p + 1} (lambda = ${eigenvalues[p].toFixed(4)})`
        : `u_${p + 1}`;
    body.push(text(WIDTH - MARGIN.right - 4, top + 16, label, { size: 10, anchor: "end" }));
    body.push("</g>");
  }

  body.push(text(WIDTH / 2, 18, "Top eigenvector entries", { size: 13, anchor: "middle" }));
  body.push(text(WIDTH / 2, HEIGHT - 28, "coordinate", { size: 11, anchor: "middle" }));
  body.push(footer(manifest ? configHash(manifest) : parsed.config_hash ?? "unknown"));
  return svgDocument(WIDTH, HEIGHT, body);
}
