// Export orchestration: embed one dataset with a frozen backbone and
// write one binary embedding file per participant.
//
// Vision: every PPM image in the input directory is cut into vertical
// strips, one per participant, and each strip is embedded separately;
// sample ids follow the sorted filename order. Labels, when given, come
// from a CSV with "id" and "label" columns.
//
// Tabular: feature columns are split into contiguous chunks, and each
// participant embeds the text serialization of its own columns. The
// label column, when present, supplies the labels.
//
// In both modalities every participant's file carries the same ids in
// the same order, and only the active participant (the highest index)
// carries labels.

import { mkdir, readdir, readFile } from "fs/promises";
import { join } from "path";
import { Backbone, loadBackbone } from "./backbone.js";
import { writeEmbeddingFile } from "./embeddingFile.js";
import { serializeRow } from "./serializeRow.js";
import {
  parseCsv,
  parseLabelsCsv,
  splitColumns,
  TabularError,
} from "./tabular.js";
import { decodePpm, patchPayload, verticalStrips } from "./vision.js";

export class ExportError extends Error {}

export type Modality = "vision" | "tabular";

export interface ExportOptions {
  modality: Modality;
  backbone: string;
  input: string;
  participants: number;
  out: string;
  labelColumn?: string;
  labelsFile?: string;
}

export interface ExportSummary {
  files: string[];
  samples: number;
  width: number;
  participants: number;
}

interface ParticipantData {
  ids: bigint[];
  embeddings: number[][];
  labels: number[] | null;
}

const readVisionLabels = async (
  path: string,
  ids: bigint[],
): Promise<number[]> => {
  const byId = parseLabelsCsv(await readFile(path, "utf8"));
  return ids.map((id) => {
    const label = byId.get(id);
    if (label === undefined) {
      throw new ExportError(`labels file ${path} is missing id ${id}`);
    }
    return label;
  });
};

const embedVision = async (
  options: ExportOptions,
  backbone: Backbone,
): Promise<ParticipantData[]> => {
  const names = (await readdir(options.input))
    .filter((name) => name.toLowerCase().endsWith(".ppm"))
    .sort();
  if (names.length === 0) {
    throw new ExportError(`no .ppm images under ${options.input}`);
  }
  const ids = names.map((_, i) => BigInt(i));
  const perParticipant: number[][][] = Array.from(
    { length: options.participants },
    () => [],
  );
  for (const name of names) {
    const image = decodePpm(await readFile(join(options.input, name)));
    const strips = verticalStrips(image, options.participants);
    strips.forEach((strip, k) => {
      perParticipant[k]!.push(backbone.embedBytes(patchPayload(strip)));
    });
  }
  const labels = options.labelsFile
    ? await readVisionLabels(options.labelsFile, ids)
    : null;
  return perParticipant.map((embeddings, k) => ({
    ids,
    embeddings,
    labels: k === options.participants - 1 ? labels : null,
  }));
};

const embedTabular = async (
  options: ExportOptions,
  backbone: Backbone,
): Promise<ParticipantData[]> => {
  const table = parseCsv(
    await readFile(options.input, "utf8"),
    options.labelColumn ?? "label",
  );
  const chunks = splitColumns(table.featureNames, options.participants);
  return chunks.map((names, k) => {
    const columns = names.map((name) => table.featureNames.indexOf(name));
    const embeddings = table.rows.map((row) =>
      backbone.embedText(serializeRow(names, columns.map((c) => row[c] ?? null))),
    );
    return {
      ids: table.ids,
      embeddings,
      labels: k === options.participants - 1 ? table.labels : null,
    };
  });
};

export const exportEmbeddings = async (
  options: ExportOptions,
): Promise<ExportSummary> => {
  if (!Number.isInteger(options.participants) || options.participants < 1) {
    throw new ExportError(
      `participant count must be a positive int: ${options.participants}`,
    );
  }
  const backbone = loadBackbone(options.backbone);
  let data: ParticipantData[];
  if (options.modality === "vision") {
    data = await embedVision(options, backbone);
  } else if (options.modality === "tabular") {
    data = await embedTabular(options, backbone);
  } else {
    throw new ExportError(`unknown modality: ${options.modality}`);
  }

  await mkdir(options.out, { recursive: true });
  const files: string[] = [];
  for (let k = 0; k < data.length; k++) {
    const path = join(options.out, `participant${k}.vfle`);
    await writeEmbeddingFile(path, {
      participantIndex: k,
      ids: data[k]!.ids,
      embeddings: data[k]!.embeddings,
      labels: data[k]!.labels,
    });
    files.push(path);
  }
  return {
    files,
    samples: data[0]!.ids.length,
    width: backbone.dim,
    participants: data.length,
  };
};

export { TabularError };
