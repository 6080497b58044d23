// Tabular input: CSV parsing and vertical column splits.
//
// The label column (named "label" unless overridden) and the optional
// "id" column are lifted out of the feature set. Feature columns are
// partitioned into contiguous chunks, one chunk per participant, with
// the last chunk absorbing the remainder; each participant serializes
// only its own columns.

import Papa from "papaparse";
import { CellValue } from "./serializeRow.js";

export class TabularError extends Error {}

export interface TabularData {
  featureNames: string[];
  rows: CellValue[][];
  ids: bigint[];
  labels: number[] | null;
}

const parseLabel = (value: CellValue, row: number): number => {
  const label = typeof value === "number" ? value : Number(value);
  if (!Number.isInteger(label) || label < 0) {
    throw new TabularError(
      `label in row ${row} must be a non-negative int, got ${value}`,
    );
  }
  return label;
};

const parseId = (value: CellValue, row: number): bigint => {
  try {
    const id = BigInt(String(value));
    if (id < 0n) {
      throw new TabularError("negative");
    }
    return id;
  } catch {
    throw new TabularError(
      `id in row ${row} must be a non-negative int, got ${value}`,
    );
  }
};

const parseRecords = (text: string) => {
  const parsed = Papa.parse<Record<string, CellValue>>(text.trim(), {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
    delimiter: ",",
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0]!;
    throw new TabularError(`CSV parse error: ${first.message}`);
  }
  return parsed;
};

export const parseCsv = (text: string, labelColumn = "label"): TabularData => {
  const parsed = parseRecords(text);
  const columns = parsed.meta.fields ?? [];
  const featureNames = columns.filter(
    (name) => name !== labelColumn && name !== "id",
  );
  if (featureNames.length === 0) {
    throw new TabularError("CSV has no feature columns");
  }
  if (parsed.data.length === 0) {
    throw new TabularError("CSV has no data rows");
  }
  const hasLabels = columns.includes(labelColumn);
  const hasIds = columns.includes("id");
  const rows: CellValue[][] = [];
  const ids: bigint[] = [];
  const labels: number[] = [];
  parsed.data.forEach((record, i) => {
    rows.push(featureNames.map((name) => record[name] ?? null));
    ids.push(hasIds ? parseId(record["id"] ?? null, i) : BigInt(i));
    if (hasLabels) {
      labels.push(parseLabel(record[labelColumn] ?? null, i));
    }
  });
  return { featureNames, rows, ids, labels: hasLabels ? labels : null };
};

// Labels-only CSVs ("id,label" and nothing else) carry no features, so
// they get their own parser instead of TabularData's feature contract.
export const parseLabelsCsv = (
  text: string,
  labelColumn = "label",
): Map<bigint, number> => {
  const parsed = parseRecords(text);
  const columns = parsed.meta.fields ?? [];
  if (!columns.includes("id") || !columns.includes(labelColumn)) {
    throw new TabularError(
      `labels CSV needs "id" and "${labelColumn}" columns, got ${columns.join(", ")}`,
    );
  }
  const byId = new Map<bigint, number>();
  parsed.data.forEach((record, i) => {
    byId.set(
      parseId(record["id"] ?? null, i),
      parseLabel(record[labelColumn] ?? null, i),
    );
  });
  return byId;
};

export const splitColumns = (
  names: string[],
  participants: number,
): string[][] => {
  if (!Number.isInteger(participants) || participants < 1) {
    throw new TabularError(
      `participant count must be a positive int: ${participants}`,
    );
  }
  if (names.length < participants) {
    throw new TabularError(
      `cannot split ${names.length} feature columns across ` +
        `${participants} participants`,
    );
  }
  const chunks: string[][] = [];
  for (let k = 0; k < participants; k++) {
    const start = Math.floor((k * names.length) / participants);
    const end = Math.floor(((k + 1) * names.length) / participants);
    chunks.push(names.slice(start, end));
  }
  return chunks;
};
