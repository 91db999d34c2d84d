/** Tiered stage parameters: command line over config file over defaults.
 *
 * The config file is INI with a [model] section shared by all stages plus
 * one section per stage; the stage section wins over [model] for the same
 * key. Unknown keys from either override tier are rejected.
 */

import { readIni } from "./ini";

export type ParamValue = string | number | boolean;

export interface ParamField {
  name: string;
  type: "string" | "int" | "float" | "bool";
  default?: ParamValue;
  required?: boolean;
  help?: string;
}

/** Raised for bad invocations (unknown flag, missing value); exit code 2. */
export class UsageError extends Error {}

export function parseArgv(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--")) {
      throw new UsageError(`expected a --flag, got ${flag}`);
    }
    if (i + 1 >= argv.length) {
      throw new UsageError(`flag ${flag} is missing a value`);
    }
    out[flag.slice(2)] = argv[i + 1];
  }
  return out;
}

function coerce(field: ParamField, raw: string): ParamValue {
  switch (field.type) {
    case "string":
      return raw;
    case "int": {
      const n = Number(raw);
      if (!Number.isInteger(n)) {
        throw new UsageError(`parameter ${field.name}: ${raw} is not an integer`);
      }
      return n;
    }
    case "float": {
      const n = Number(raw);
      if (!Number.isFinite(n)) {
        throw new UsageError(`parameter ${field.name}: ${raw} is not a number`);
      }
      return n;
    }
    case "bool": {
      const low = raw.toLowerCase();
      if (["true", "1", "yes", "on"].includes(low)) return true;
      if (["false", "0", "no", "off"].includes(low)) return false;
      throw new UsageError(`parameter ${field.name}: ${raw} is not a boolean`);
    }
  }
}

export function resolveParams(
  schema: ParamField[],
  cli: Record<string, string>,
  stage: string,
): Record<string, ParamValue | undefined> {
  const byName = new Map(schema.map((f) => [f.name, f]));
  const values: Record<string, ParamValue | undefined> = {};
  for (const f of schema) values[f.name] = f.default;

  const configPath = cli["config"];
  if (configPath !== undefined) {
    const doc = readIni(configPath);
    const merged = { ...(doc["model"] ?? {}), ...(doc[stage] ?? {}) };
    for (const [key, raw] of Object.entries(merged)) {
      const field = byName.get(key);
      if (!field) throw new UsageError(`config file sets undeclared parameter ${key}`);
      values[key] = coerce(field, raw);
    }
  }

  for (const [key, raw] of Object.entries(cli)) {
    const field = byName.get(key);
    if (!field) throw new UsageError(`unknown flag --${key}`);
    values[key] = coerce(field, raw);
  }

  for (const f of schema) {
    if (f.required && values[f.name] === undefined) {
      throw new UsageError(`missing required flag --${f.name}`);
    }
  }
  return values;
}
