// Binary embedding files: one participant's frozen-backbone outputs.
//
// Little-endian layout, byte-compatible with the vflmope Python loader:
//   magic        4 bytes   "VFLE"
//   version      u32       currently 1
//   participant  u32       participant index
//   n            u64       sample count
//   z            u32       embedding width
//   ids          n x u64   sample ids
//   embeddings   n x z f32 row-major
//   label flag   u8        0 or 1
//   labels       n x u32   present only when the flag is 1

import { readFile, writeFile } from "fs/promises";

export const MAGIC = "VFLE";
export const VERSION = 1;

export class FormatError extends Error {
  offset: number;

  constructor(message: string, offset: number) {
    super(message);
    this.offset = offset;
  }
}

export class ShapeError extends Error {}

export interface EmbeddingFile {
  participantIndex: number;
  ids: bigint[];
  embeddings: number[][];
  labels: number[] | null;
}

const U32_MAX = 0xffffffff;

export const encodeEmbeddingFile = (file: EmbeddingFile): Buffer => {
  const n = file.ids.length;
  if (file.embeddings.length !== n) {
    throw new ShapeError(
      `got ${file.embeddings.length} embedding rows for ${n} ids`,
    );
  }
  const z = n > 0 ? file.embeddings[0]!.length : 1;
  if (z < 1) {
    throw new ShapeError("embedding width must be at least 1");
  }
  for (const row of file.embeddings) {
    if (row.length !== z) {
      throw new ShapeError(`ragged embedding rows: ${row.length} vs ${z}`);
    }
  }
  if (file.participantIndex < 0 || file.participantIndex > U32_MAX) {
    throw new ShapeError(
      `participant index out of u32 range: ${file.participantIndex}`,
    );
  }
  if (file.labels !== null) {
    if (file.labels.length !== n) {
      throw new ShapeError(`got ${file.labels.length} labels for ${n} ids`);
    }
    for (const label of file.labels) {
      if (!Number.isInteger(label) || label < 0 || label > U32_MAX) {
        throw new ShapeError(`label out of u32 range: ${label}`);
      }
    }
  }

  const size =
    24 + 8 * n + 4 * n * z + 1 + (file.labels === null ? 0 : 4 * n);
  const buf = Buffer.alloc(size);
  let offset = buf.write(MAGIC, 0, "ascii");
  offset = buf.writeUInt32LE(VERSION, offset);
  offset = buf.writeUInt32LE(file.participantIndex, offset);
  offset = buf.writeBigUInt64LE(BigInt(n), offset);
  offset = buf.writeUInt32LE(z, offset);
  for (const id of file.ids) {
    offset = buf.writeBigUInt64LE(id, offset);
  }
  for (const row of file.embeddings) {
    for (const value of row) {
      offset = buf.writeFloatLE(value, offset);
    }
  }
  offset = buf.writeUInt8(file.labels === null ? 0 : 1, offset);
  if (file.labels !== null) {
    for (const label of file.labels) {
      offset = buf.writeUInt32LE(label, offset);
    }
  }
  return buf;
};

export const decodeEmbeddingFile = (data: Buffer): EmbeddingFile => {
  let offset = 0;
  const take = (nbytes: number, section: string): number => {
    if (data.length - offset < nbytes) {
      throw new FormatError(
        `truncated file: needed ${nbytes} bytes for ${section} at offset ` +
          `${offset}, only ${data.length - offset} left`,
        offset,
      );
    }
    const start = offset;
    offset += nbytes;
    return start;
  };

  const magicStart = take(4, "magic");
  const magic = data.subarray(magicStart, magicStart + 4).toString("ascii");
  if (magic !== MAGIC) {
    throw new FormatError(
      `bad magic ${JSON.stringify(magic)} at offset 0, expected "${MAGIC}"`,
      0,
    );
  }
  const version = data.readUInt32LE(take(4, "version"));
  if (version !== VERSION) {
    throw new FormatError(`unsupported version ${version} at offset 4`, 4);
  }
  const participantIndex = data.readUInt32LE(take(4, "participant index"));
  const nBig = data.readBigUInt64LE(take(8, "sample count"));
  if (nBig > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new FormatError(`sample count ${nBig} too large`, 12);
  }
  const n = Number(nBig);
  const z = data.readUInt32LE(take(4, "embedding width"));
  if (z < 1) {
    throw new FormatError(`embedding width must be >= 1, got ${z}`, 20);
  }
  const ids: bigint[] = [];
  let start = take(8 * n, "sample ids");
  for (let i = 0; i < n; i++) {
    ids.push(data.readBigUInt64LE(start + 8 * i));
  }
  const embeddings: number[][] = [];
  start = take(4 * n * z, "embedding matrix");
  for (let i = 0; i < n; i++) {
    const row: number[] = [];
    for (let j = 0; j < z; j++) {
      row.push(data.readFloatLE(start + 4 * (i * z + j)));
    }
    embeddings.push(row);
  }
  const flagOffset = offset;
  const flag = data.readUInt8(take(1, "label flag"));
  if (flag !== 0 && flag !== 1) {
    throw new FormatError(
      `label flag must be 0 or 1, got ${flag}`,
      flagOffset,
    );
  }
  let labels: number[] | null = null;
  if (flag === 1) {
    labels = [];
    start = take(4 * n, "labels");
    for (let i = 0; i < n; i++) {
      labels.push(data.readUInt32LE(start + 4 * i));
    }
  }
  if (offset !== data.length) {
    throw new FormatError(
      `${data.length - offset} unexpected trailing bytes at offset ${offset}`,
      offset,
    );
  }
  return { participantIndex, ids, embeddings, labels };
};

export const writeEmbeddingFile = async (
  path: string,
  file: EmbeddingFile,
): Promise<void> => {
  await writeFile(path, encodeEmbeddingFile(file));
};

export const readEmbeddingFile = async (
  path: string,
): Promise<EmbeddingFile> => {
  return decodeEmbeddingFile(await readFile(path));
};
