// Text serialization of one tabular row for embedding backbones.
//
// Format: "name_1: value_1 | name_2: value_2 | ... | name_M: value_M"
// with a single space after each colon and a single space on both sides
// of every pipe. Numeric values render with String(value), ECMAScript's
// shortest round-trip decimal form: integers print bare ("1", never
// "1.0") and floats keep exactly the digits needed to reparse equal.

export class RowValidationError extends Error {}

export type CellValue = string | number | boolean | null;

export const formatCell = (value: CellValue): string => {
  if (value === null) {
    return "";
  }
  return String(value);
};

export const serializeRow = (names: string[], values: CellValue[]): string => {
  if (names.length !== values.length) {
    throw new RowValidationError(
      `row has ${values.length} values but ${names.length} feature names`,
    );
  }
  if (names.length === 0) {
    throw new RowValidationError("cannot serialize a row with no features");
  }
  return names
    .map((name, i) => `${name}: ${formatCell(values[i] ?? null)}`)
    .join(" | ");
};
