/** `plot <kind> --in DIR --out FILE` over campaign output directories.
 *
 * Kinds: esd_histogram (histogram.csv + manifest.json), overlap_vs_theta
 * (sweep.csv + manifest.json), eigvec_entries (records/trial_00000.json +
 * manifest.json).  Inputs are read-only; only the output file is written.
 */

import { readFileSync, writeFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import { parseManifest } from "./manifest.js";
import { plotEigvecEntries, plotEsd, plotOverlapSweep } from "./plots.js";

const KINDS = ["esd_histogram", "overlap_vs_theta", "eigvec_entries"] as const;
type Kind = (typeof KINDS)[number];

interface Args {
  kind: Kind;
  inDir: string;
  outFile: string;
}

export function parseArgs(argv: string[]): Args {
  const [kind, ...rest] = argv;
  if (!KINDS.includes(kind as Kind)) {
    throw new Error(`unknown plot kind "${kind}"; choose one of ${KINDS.join(", ")}`);
  }
  let inDir: string | null = null;
  let outFile: string | null = null;
  for (let i = 0; i < rest.length; i += 2) {
    const flag = rest[i];
    const value = rest[i + 1];
    if (value === undefined) throw new Error(`flag ${flag} needs a value`);
    if (flag === "--in") inDir = value;
    else if (flag === "--out") outFile = value;
    else throw new Error(`unknown flag ${flag}`);
  }
  if (!inDir || !outFile) throw new Error("both --in DIR and --out FILE are required");
  return { kind: kind as Kind, inDir, outFile };
}

function readManifestFile(dir: string) {
  return parseManifest(readFileSync(join(dir, "manifest.json"), "utf-8"));
}

export function render(args: Args): string {
  if (args.kind === "esd_histogram") {
    const histogram = readFileSync(join(args.inDir, "histogram.csv"), "utf-8");
    return plotEsd(histogram, readManifestFile(args.inDir));
  }
  if (args.kind === "overlap_vs_theta") {
    const sweep = readFileSync(join(args.inDir, "sweep.csv"), "utf-8");
    return plotOverlapSweep(sweep, readManifestFile(args.inDir));
  }
  const recordsDir = join(args.inDir, "records");
  const names = readdirSync(recordsDir).filter((f) => f.endsWith(".json")).sort();
  if (names.length === 0) throw new Error(`no trial records found in ${recordsDir}`);
  const record = readFileSync(join(recordsDir, names[0]), "utf-8");
  return plotEigvecEntries(record, readManifestFile(args.inDir));
}

export function main(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const svg = render(args);
    writeFileSync(args.outFile, svg, "utf-8");
    console.error(`[sparse-bbp-plots] wrote ${args.outFile}`);
    return 0;
  } catch (err) {
    console.error(`[sparse-bbp-plots] error: ${(err as Error).message}`);
    return 1;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
