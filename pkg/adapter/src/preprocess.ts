/** Preprocess stage: benchmark data in, model-ready partitions out.
 *
 * Within-dataset (source == target): train/val/test are the source split's
 * partitions. Cross-dataset: train/val come from the source split and the
 * test partition is the entire target response table with the target's own
 * features. Standardization is fit on training rows only and applied to
 * all three partitions.
 */

import * as path from "node:path";
import {
  DatasetDescriptor,
  loadBenchmarkIndex,
  loadFeatureTable,
  loadResponseTable,
  readSplitFile,
} from "./csvio";
import { applyScaler, fitScaler, joinFeatures, writePartition } from "./dataio";
import { ParamField } from "./params";
import { runStage } from "./stage";

export const SCHEMA: ParamField[] = [
  { name: "benchmark_root", type: "string", required: true },
  { name: "source_dataset", type: "string", required: true },
  { name: "target_dataset", type: "string", required: true },
  { name: "split_index", type: "int", required: true },
  { name: "split_dir", type: "string", required: true },
  { name: "output_dir", type: "string", required: true },
  { name: "config", type: "string" },
  { name: "supplementary_dir", type: "string" },
  { name: "device", type: "string" },
  { name: "cell_kinds", type: "string", default: "all" },
  { name: "drug_kinds", type: "string", default: "all" },
];

function kinds(raw: string, available: Record<string, string>): string[] {
  if (raw === "all") return Object.keys(available).sort();
  return raw.split(",").map((k) => k.trim()).filter(Boolean);
}

function featureTables(root: string, desc: DatasetDescriptor, names: string[], entity: "cell" | "drug") {
  const paths = entity === "cell" ? desc.omics_paths : desc.drug_feature_paths;
  return names.map((kind) => {
    const rel = paths[kind];
    if (!rel) throw new Error(`dataset ${desc.name} has no ${entity} feature kind ${kind}`);
    return loadFeatureTable(path.join(root, rel));
  });
}

export function main(argv: string[]): number {
  return runStage("preprocess", SCHEMA, argv, (params) => {
    const root = String(params["benchmark_root"]);
    const source = String(params["source_dataset"]);
    const target = String(params["target_dataset"]);
    const splitIndex = Number(params["split_index"]);
    const out = String(params["output_dir"]);

    const descriptors = loadBenchmarkIndex(root);
    const src = descriptors.get(source);
    const tgt = descriptors.get(target);
    if (!src || !tgt) throw new Error(`unknown dataset: ${!src ? source : target}`);

    const srcTable = loadResponseTable(path.join(root, src.response_path));
    const splitDir = String(params["split_dir"]);
    const trainRows = readSplitFile(splitDir, source, splitIndex, "train");
    const valRows = readSplitFile(splitDir, source, splitIndex, "val");
    for (const idx of [...trainRows, ...valRows]) {
      if (idx >= srcTable.auc.length) throw new Error(`split index ${idx} out of range`);
    }

    const cellKinds = kinds(String(params["cell_kinds"]), src.omics_paths);
    const drugKinds = kinds(String(params["drug_kinds"]), src.drug_feature_paths);
    const srcCells = featureTables(root, src, cellKinds, "cell");
    const srcDrugs = featureTables(root, src, drugKinds, "drug");

    const train = joinFeatures(srcTable, trainRows, srcCells, srcDrugs);
    const val = joinFeatures(srcTable, valRows, srcCells, srcDrugs);

    let test;
    if (source === target) {
      const testRows = readSplitFile(splitDir, source, splitIndex, "test");
      test = joinFeatures(srcTable, testRows, srcCells, srcDrugs);
    } else {
      const tgtTable = loadResponseTable(path.join(root, tgt.response_path));
      const allRows = tgtTable.auc.map((_, i) => i);
      const tgtCells = featureTables(root, tgt, cellKinds, "cell");
      const tgtDrugs = featureTables(root, tgt, drugKinds, "drug");
      test = joinFeatures(tgtTable, allRows, tgtCells, tgtDrugs);
    }

    const scaler = fitScaler(train.x);
    for (const part of [train, val, test]) part.x = applyScaler(scaler, part.x);
    writePartition(path.join(out, "train"), train);
    writePartition(path.join(out, "val"), val);
    writePartition(path.join(out, "test"), test);
  });
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
