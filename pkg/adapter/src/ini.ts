/** Minimal INI reader for stage config files ([section], key = value). */

import * as fs from "node:fs";

export type IniDocument = Record<string, Record<string, string>>;

export function parseIni(text: string): IniDocument {
  const doc: IniDocument = {};
  let section = "";
  for (const rawLine of text.split(/\r?\n/)) {
    const line = rawLine.trim();
    if (!line || line.startsWith(";") || line.startsWith("#")) continue;
    if (line.startsWith("[") && line.endsWith("]")) {
      section = line.slice(1, -1).trim();
      doc[section] ??= {};
      continue;
    }
    const eq = line.indexOf("=");
    if (eq < 0) {
      throw new Error(`malformed config line: ${rawLine}`);
    }
    const key = line.slice(0, eq).trim();
    const value = line.slice(eq + 1).trim();
    (doc[section] ??= {})[key] = value;
  }
  return doc;
}

export function readIni(path: string): IniDocument {
  return parseIni(fs.readFileSync(path, "utf-8"));
}
