#!/usr/bin/env node
// Command line entry point: embed a dataset with a frozen backbone and
// write one binary embedding file per participant.

import { realpathSync } from "fs";
import { fileURLToPath } from "url";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { exportEmbeddings, Modality } from "./export.js";

export const main = async (argv: string[]): Promise<number> => {
  let failed = false;
  await yargs(argv)
    .scriptName("embed-export")
    .command(
      "export",
      "embed a dataset and write one embedding file per participant",
      (command) =>
        command.options({
          modality: {
            choices: ["vision", "tabular"] as const,
            demandOption: true,
            describe: "vision: directory of PPM images; tabular: CSV file",
          },
          backbone: {
            type: "string",
            demandOption: true,
            describe: "backbone id, e.g. toy-16 or dinov2-vit-s14",
          },
          input: {
            type: "string",
            demandOption: true,
            describe: "input path (directory for vision, file for tabular)",
          },
          participants: {
            type: "number",
            demandOption: true,
            describe: "how many vertical splits / embedding files to write",
          },
          out: {
            type: "string",
            demandOption: true,
            describe: "output directory",
          },
          "label-column": {
            type: "string",
            default: "label",
            describe: "tabular label column name",
          },
          labels: {
            type: "string",
            describe: "vision labels CSV with id and label columns",
          },
        }),
      async (args) => {
        try {
          const summary = await exportEmbeddings({
            modality: args.modality as Modality,
            backbone: args.backbone,
            input: args.input,
            participants: args.participants,
            out: args.out,
            labelColumn: args["label-column"],
            labelsFile: args.labels,
          });
          console.log(
            `wrote ${summary.files.length} files under ${args.out}: ` +
              `${summary.samples} samples, width ${summary.width}`,
          );
          for (const file of summary.files) {
            console.log(`  ${file}`);
          }
        } catch (err) {
          console.error(err instanceof Error ? err.message : String(err));
          failed = true;
        }
      },
    )
    .demandCommand(1)
    .strict()
    .version("0.1.0")
    .help()
    .parseAsync();
  return failed ? 1 : 0;
};

const invokedDirectly = (() => {
  if (process.argv[1] === undefined) {
    return false;
  }
  try {
    return realpathSync(process.argv[1]) === fileURLToPath(import.meta.url);
  } catch {
    return false;
  }
})();

if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
