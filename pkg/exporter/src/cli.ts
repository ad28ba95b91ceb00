#!/usr/bin/env node
/**
 * Command line entry point.
 *
 * Exit status: 0 on success, 1 for usage mistakes, 2 when an input
 * fails to load or validate, 3 when the export finished but one or
 * more records were skipped.
 */

import { pathToFileURL } from "node:url";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { CheckpointError, POOLING_POLICIES, PoolingPolicy } from "./checkpoint.js";
import { DEFAULT_TEMPLATE, ExportConfig, TemplateError, exportEmbeddings } from "./export.js";
import { ManifestError } from "./manifest.js";
import { StoreFormatError } from "./store.js";

export const VERSION = "0.1.0";

class UsageError extends Error {}

interface ExportArgs {
  manifest: string;
  model: string;
  pooling?: PoolingPolicy;
  out: string;
  template: string;
  "batch-size": number;
  device: string;
}

function runExport(args: ExportArgs): number {
  const batchSize = args["batch-size"];
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    console.error(`usage error: --batch-size must be a positive integer, got ${batchSize}`);
    return 1;
  }
  // The pooling policy changes the produced vectors, so a silent
  // built-in default would be a trap; when the flag is absent we still
  // export, but say out loud which policy was applied.
  let pooling = args.pooling;
  if (pooling === undefined) {
    pooling = "last_token";
    console.error("pooling not specified; using last_token");
  }
  const config: ExportConfig = {
    model: args.model,
    pooling,
    template: args.template,
    batchSize,
    device: args.device,
  };
  let result;
  try {
    result = exportEmbeddings(args.manifest, config, args.out);
  } catch (err) {
    if (err instanceof TemplateError) {
      console.error(`usage error: ${err.message}`);
      return 1;
    }
    if (err instanceof Error) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
  console.log(
    `wrote ${result.written} embeddings (dim ${result.dim}) to ${args.out} ` +
      `[pooling=${pooling} device=${config.device}]`,
  );
  if (result.skipped.length > 0) {
    for (const skip of result.skipped) {
      console.error(`skipped ${skip.id}: ${skip.reason}`);
    }
    console.error(`skip list written to ${result.skipListPath}`);
    return 3;
  }
  return 0;
}

export function run(argv: string[]): number {
  let code = 0;
  const parser = yargs()
    .scriptName("mtap-export")
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      if (err !== undefined && err !== null && !(err instanceof UsageError)) throw err;
      throw new UsageError(msg ?? err?.message ?? "invalid arguments");
    })
    .command(
      "export",
      "encode manifest records with a frozen checkpoint into an embedding store",
      (y) =>
        y
          .option("manifest", {
            type: "string",
            demandOption: true,
            describe: "dataset manifest (.jsonl)",
          })
          .option("model", {
            type: "string",
            demandOption: true,
            describe: "checkpoint file for the frozen encoder",
          })
          .option("pooling", {
            type: "string",
            choices: POOLING_POLICIES,
            describe: "how per-token states become one vector",
          })
          .option("out", {
            type: "string",
            demandOption: true,
            describe: "output embedding store path",
          })
          .option("template", {
            type: "string",
            default: DEFAULT_TEMPLATE,
            describe: "prompt template with <image>, {request}, {candidate}",
          })
          .option("batch-size", {
            type: "number",
            default: 16,
            describe: "records encoded per batch",
          })
          .option("device", {
            type: "string",
            default: "cpu",
            describe: "device hint recorded in the run summary",
          }),
      (args) => {
        code = runExport(args as unknown as ExportArgs);
      },
    )
    .demandCommand(1, "a command is required")
    .help()
    .version(VERSION)
    .wrap(100);
  try {
    parser.parseSync(argv);
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      return 1;
    }
    if (err instanceof CheckpointError || err instanceof ManifestError || err instanceof StoreFormatError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
  return code;
}

if (import.meta.url === pathToFileURL(process.argv[1] ?? "").href) {
  process.exit(run(hideBin(process.argv)));
}
