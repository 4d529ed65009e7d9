/** Campaign manifest reader and outlier-marker extraction. */

export interface Manifest {
  schema_version: number;
  config_hash?: string;
  experiment?: string;
  status?: string;
  model?: {
    n?: number;
    r?: number;
    thetas?: number[];
  };
  config?: { model?: { thetas?: number[] } };
  aggregates?: Record<string, unknown> | null;
}

export interface OutlierMarkers {
  observed: number[];
  predicted: number[];
}

export function parseManifest(text: string): Manifest {
  const data = JSON.parse(text);
  if (typeof data !== "object" || data === null) {
    throw new Error("manifest is not a JSON object");
  }
  return data as Manifest;
}

export function configHash(manifest: Manifest): string {
  return manifest.config_hash ?? "unknown";
}

function supercriticalThetas(manifest: Manifest): number[] {
  const thetas = manifest.model?.thetas ?? manifest.config?.model?.thetas ?? [];
  return thetas.filter((t) => t > 1);
}

/**
 * Outlier markers from either manifest flavor.
 *
 * A full-spectrum run stores explicit `outliers_observed` / `outliers_predicted`
 * lists; a trial campaign stores per-index eigenvalue statistics, in which
 * case the observed markers are the mean top eigenvalues aligned with the
 * supercritical signals and predictions are theta + 1/theta.
 */
export function extractOutliers(manifest: Manifest): OutlierMarkers {
  const agg = manifest.aggregates ?? {};
  const observedList = (agg as Record<string, unknown>)["outliers_observed"];
  const predictedList = (agg as Record<string, unknown>)["outliers_predicted"];
  if (Array.isArray(observedList) && Array.isArray(predictedList)) {
    return {
      observed: observedList.map(Number),
      predicted: predictedList.map(Number),
    };
  }
  const thetas = supercriticalThetas(manifest);
  const observed: number[] = [];
  const predicted: number[] = [];
  thetas.forEach((theta, i) => {
    const stats = (agg as Record<string, { mean?: number }>)[`eigenvalue[${i + 1}]`];
    if (stats && typeof stats.mean === "number") {
      observed.push(stats.mean);
      predicted.push(theta + 1 / theta);
    }
  });
  return { observed, predicted };
}
