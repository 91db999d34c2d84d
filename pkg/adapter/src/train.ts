/** Train stage: fit the seeded OLS regressor and score the validation set. */

import * as fs from "node:fs";
import * as path from "node:path";
import { PredictionRecord, writePredictions } from "./csvio";
import { Partition, readPartition } from "./dataio";
import { ParamField } from "./params";
import { fitOls, predictOls } from "./regressor";
import { computeScores, writeScores } from "./scores";
import { runStage } from "./stage";

export const SCHEMA: ParamField[] = [
  { name: "input_dir", type: "string", required: true },
  { name: "output_dir", type: "string", required: true },
  { name: "config", type: "string" },
  { name: "device", type: "string" },
  { name: "seed", type: "int", default: 13 },
  { name: "subsample", type: "int", default: 12 },
];

export function records(part: Partition, preds: number[]): PredictionRecord[] {
  return part.sampleIds.map((sid, i) => ({
    sampleId: sid,
    cellId: part.cellIds[i],
    drugId: part.drugIds[i],
    aucTrue: part.y[i],
    aucPred: preds[i],
  }));
}

export function main(argv: string[]): number {
  return runStage("train", SCHEMA, argv, (params) => {
    const inputDir = String(params["input_dir"]);
    const out = String(params["output_dir"]);
    const train = readPartition(path.join(inputDir, "train"));
    const val = readPartition(path.join(inputDir, "val"));

    const model = fitOls(train.x, train.y, Number(params["seed"]), Number(params["subsample"]));

    const modelDir = path.join(out, "model");
    fs.mkdirSync(modelDir, { recursive: true });
    fs.writeFileSync(path.join(modelDir, "model.json"), JSON.stringify(model, null, 2) + "\n");

    const valRecords = records(val, predictOls(model, val.x));
    writePredictions(valRecords, path.join(out, "val_y_data_predicted.csv"));
    writeScores(computeScores(valRecords), path.join(out, "val_scores.json"));
  });
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
