/** Shared entry-point wrapper: usage errors exit 2, runtime errors exit 1. */

import { ParamField, ParamValue, UsageError, parseArgv, resolveParams } from "./params";

export function runStage(
  name: string,
  schema: ParamField[],
  argv: string[],
  body: (params: Record<string, ParamValue | undefined>) => void,
): number {
  try {
    const cli = parseArgv(argv);
    body(resolveParams(schema, cli, name));
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      process.stderr.write(`${name}: ${err.message}\n`);
      return 2;
    }
    process.stderr.write(`${name}: ${err instanceof Error ? err.message : err}\n`);
    return 1;
  }
}
