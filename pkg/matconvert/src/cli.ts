#!/usr/bin/env node
/**
 * matconvert convert --in FILE [--in FILE ...] --out DIR [--labels raw|refined|both]
 *                    [--sensors N] [--fs HZ] [--subject N] [--exercise B|C|D]
 *
 * Exit codes: 0 ok, 2 usage, 66 missing input file, 1 schema/format errors.
 */

import { existsSync } from "node:fs";

import { convert, ConversionJob, LabelMode, MissingFieldError, SchemaError } from "./convert.js";
import { MatFormatError } from "./mat5.js";

const USAGE = `usage: matconvert convert --in FILE [--in FILE ...] --out DIR
                  [--labels raw|refined|both] [--sensors N] [--fs HZ]
                  [--subject N] [--exercise LETTER]`;

export function main(argv: string[]): number {
  if (argv.length === 0 || argv[0] !== "convert") {
    console.error(USAGE);
    return 2;
  }
  let outDir: string | undefined;
  const inputs: string[] = [];
  let labels: LabelMode = "both";
  let sensors: number | undefined;
  let fsHz: number | undefined;
  let subject: number | undefined;
  let exercise: string | undefined;

  const args = argv.slice(1);
  for (let i = 0; i < args.length; i++) {
    const flag = args[i];
    const value = () => {
      if (i + 1 >= args.length) {
        throw new UsageError(`${flag} needs a value`);
      }
      return args[++i];
    };
    try {
      switch (flag) {
        case "--in": inputs.push(value()); break;
        case "--out": outDir = value(); break;
        case "--labels": {
          const v = value();
          if (v !== "raw" && v !== "refined" && v !== "both") {
            throw new UsageError(`--labels must be raw, refined or both, got ${v}`);
          }
          labels = v;
          break;
        }
        case "--sensors": sensors = Number(value()); break;
        case "--fs": fsHz = Number(value()); break;
        case "--subject": subject = Number(value()); break;
        case "--exercise": exercise = value(); break;
        default:
          throw new UsageError(`unknown flag ${flag}`);
      }
    } catch (e) {
      if (e instanceof UsageError) {
        console.error(`error: ${e.message}\n${USAGE}`);
        return 2;
      }
      throw e;
    }
  }
  if (!outDir || inputs.length === 0) {
    console.error(`error: --in and --out are required\n${USAGE}`);
    return 2;
  }

  for (const input of inputs) {
    if (!existsSync(input)) {
      console.error(`error: missing input: ${input}`);
      return 66;
    }
  }

  try {
    for (const input of inputs) {
      const job: ConversionJob = { input, outDir, labels, sensors, fsHz, subject, exercise };
      const written = convert(job);
      for (const w of written) {
        console.log(`wrote ${w.path} (${w.variant} labels, sha256 ${w.sha256.slice(0, 12)}...)`);
      }
    }
  } catch (e) {
    if (e instanceof SchemaError || e instanceof MissingFieldError
        || e instanceof MatFormatError) {
      console.error(`error: ${e.message}`);
      return 1;
    }
    throw e;
  }
  return 0;
}

class UsageError extends Error {}

const isDirectRun = process.argv[1]?.endsWith("cli.js")
  || process.argv[1]?.endsWith("matconvert");
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
