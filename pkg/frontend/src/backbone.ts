// Frozen embedding backbones.
//
// Real checkpoints are deliberately not bundled. The documented vision
// backbones (DINOv2 ViT-S/14, ViT-B/14, ViT-L/14) and text backbones
// (Qwen3-Embedding 0.6B, 4B, 8B) are accepted by identifier but raise
// BackboneLoadError until a checkpoint loader is wired in; pinning their
// weights is out of scope on purpose. The toy-<dim> family embeds any
// payload deterministically from a hash of its bytes, so exports are
// reproducible everywhere with no model downloads.

export class BackboneLoadError extends Error {}

export interface Backbone {
  id: string;
  dim: number;
  embedBytes(payload: Uint8Array): number[];
  embedText(text: string): number[];
}

export const REAL_BACKBONE_IDS: ReadonlyMap<string, string> = new Map([
  ["dinov2-vit-s14", "vision"],
  ["dinov2-vit-b14", "vision"],
  ["dinov2-vit-l14", "vision"],
  ["qwen3-embedding-0.6b", "text"],
  ["qwen3-embedding-4b", "text"],
  ["qwen3-embedding-8b", "text"],
]);

// FNV-1a, 32-bit, with an id-dependent basis so distinct toy backbones
// disagree on identical payloads.
const fnv1a = (payload: Uint8Array, basis: number): number => {
  let hash = basis >>> 0;
  for (const byte of payload) {
    hash ^= byte;
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
};

const mulberry32 = (seed: number): (() => number) => {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
};

class ToyBackbone implements Backbone {
  id: string;
  dim: number;

  constructor(id: string, dim: number) {
    this.id = id;
    this.dim = dim;
  }

  embedBytes(payload: Uint8Array): number[] {
    const basis = fnv1a(new TextEncoder().encode(this.id), 0x811c9dc5);
    const next = mulberry32(fnv1a(payload, basis));
    const out: number[] = [];
    for (let i = 0; i < this.dim; i++) {
      out.push(2 * next() - 1);
    }
    return out;
  }

  embedText(text: string): number[] {
    return this.embedBytes(new TextEncoder().encode(text));
  }
}

export const loadBackbone = (id: string): Backbone => {
  const toy = /^toy-(\d+)$/.exec(id);
  if (toy) {
    const dim = Number(toy[1]);
    if (dim < 1) {
      throw new BackboneLoadError(`toy backbone width must be >= 1: ${id}`);
    }
    return new ToyBackbone(id, dim);
  }
  if (REAL_BACKBONE_IDS.has(id)) {
    throw new BackboneLoadError(
      `backbone load failure: no checkpoint bundled for "${id}"; ` +
        `use a toy-<dim> backbone or wire in a checkpoint loader`,
    );
  }
  throw new BackboneLoadError(
    `backbone load failure: unknown backbone "${id}"; known ids are ` +
      `toy-<dim> and ${[...REAL_BACKBONE_IDS.keys()].join(", ")}`,
  );
};
