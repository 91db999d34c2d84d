/** Infer stage: apply the trained model to the test partition. */

import * as fs from "node:fs";
import * as path from "node:path";
import { writePredictions } from "./csvio";
import { readPartition } from "./dataio";
import { ParamField } from "./params";
import { OlsModel, predictOls } from "./regressor";
import { computeScores, writeScores } from "./scores";
import { runStage } from "./stage";
import { records } from "./train";

export const SCHEMA: ParamField[] = [
  { name: "input_dir", type: "string", required: true },
  { name: "model_dir", type: "string", required: true },
  { name: "test_data_dir", type: "string", required: true },
  { name: "output_dir", type: "string", required: true },
  { name: "config", type: "string" },
  { name: "device", type: "string" },
];

export function main(argv: string[]): number {
  return runStage("infer", SCHEMA, argv, (params) => {
    const modelFile = path.join(String(params["model_dir"]), "model.json");
    if (!fs.existsSync(modelFile)) {
      throw new Error(`model dir is incomplete (no model.json): ${params["model_dir"]}`);
    }
    const model = JSON.parse(fs.readFileSync(modelFile, "utf-8")) as OlsModel;
    const test = readPartition(String(params["test_data_dir"]));
    const out = String(params["output_dir"]);
    fs.mkdirSync(out, { recursive: true });

    const testRecords = records(test, predictOls(model, test.x));
    writePredictions(testRecords, path.join(out, "test_y_data_predicted.csv"));
    writeScores(computeScores(testRecords), path.join(out, "test_scores.json"));
  });
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
