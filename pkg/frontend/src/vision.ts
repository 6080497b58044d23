// PPM image decoding and vertical-strip patching.
//
// Images arrive as binary PPM (P6, maxval 255), the one raster format
// that needs no native decoder. Each image is cut into as many vertical
// strips as there are participants, left to right, so participant 0
// holds the leftmost strip: with two participants that is the left and
// right halves. The strip count is configurable through the participant
// count rather than hardcoded.

export class ImageFormatError extends Error {}

export interface Image {
  width: number;
  height: number;
  pixels: Uint8Array; // RGB interleaved, row-major
}

const isSpace = (byte: number): boolean =>
  byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;

// PPM headers are whitespace-separated tokens; '#' starts a comment that
// runs to end of line.
const readTokens = (data: Buffer, count: number): [string[], number] => {
  const tokens: string[] = [];
  let offset = 0;
  while (tokens.length < count) {
    while (offset < data.length && isSpace(data[offset]!)) {
      offset++;
    }
    if (offset < data.length && data[offset] === 0x23) {
      while (offset < data.length && data[offset] !== 0x0a) {
        offset++;
      }
      continue;
    }
    const start = offset;
    while (offset < data.length && !isSpace(data[offset]!)) {
      offset++;
    }
    if (offset === start) {
      throw new ImageFormatError("truncated PPM header");
    }
    tokens.push(data.subarray(start, offset).toString("ascii"));
  }
  // Exactly one whitespace byte separates the header from the raster.
  return [tokens, offset + 1];
};

export const decodePpm = (data: Buffer): Image => {
  const [tokens, rasterStart] = readTokens(data, 4);
  const [magic, widthText, heightText, maxvalText] = tokens;
  if (magic !== "P6") {
    throw new ImageFormatError(`expected binary PPM (P6), got "${magic}"`);
  }
  const width = Number(widthText);
  const height = Number(heightText);
  const maxval = Number(maxvalText);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new ImageFormatError(
      `bad PPM dimensions ${widthText} x ${heightText}`,
    );
  }
  if (maxval !== 255) {
    throw new ImageFormatError(`only maxval 255 is supported, got ${maxval}`);
  }
  const expected = 3 * width * height;
  const pixels = data.subarray(rasterStart, rasterStart + expected);
  if (pixels.length !== expected) {
    throw new ImageFormatError(
      `PPM raster has ${pixels.length} bytes, expected ${expected}`,
    );
  }
  return { width, height, pixels: new Uint8Array(pixels) };
};

export const encodePpm = (image: Image): Buffer => {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(image.pixels)]);
};

export const verticalStrips = (image: Image, count: number): Image[] => {
  if (!Number.isInteger(count) || count < 1) {
    throw new ImageFormatError(`strip count must be a positive int: ${count}`);
  }
  if (image.width < count) {
    throw new ImageFormatError(
      `cannot cut a ${image.width}-pixel-wide image into ${count} strips`,
    );
  }
  const strips: Image[] = [];
  for (let k = 0; k < count; k++) {
    const left = Math.floor((k * image.width) / count);
    const right = Math.floor(((k + 1) * image.width) / count);
    const width = right - left;
    const pixels = new Uint8Array(3 * width * image.height);
    for (let row = 0; row < image.height; row++) {
      const src = 3 * (row * image.width + left);
      pixels.set(
        image.pixels.subarray(src, src + 3 * width),
        3 * row * width,
      );
    }
    strips.push({ width, height: image.height, pixels });
  }
  return strips;
};

// Stable byte payload for hashing a patch: dimensions then raster, so two
// patches with identical pixels but different shapes embed differently.
export const patchPayload = (patch: Image): Uint8Array => {
  const header = Buffer.alloc(8);
  header.writeUInt32LE(patch.width, 0);
  header.writeUInt32LE(patch.height, 4);
  return new Uint8Array(Buffer.concat([header, Buffer.from(patch.pixels)]));
};
