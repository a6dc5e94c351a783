/* tslint:disable */
/* eslint-disable */

/**
 * A network plus the samples the page has collected for training.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Adds the first `limit` images of an uploaded IDX image/label pair.
     */
    add_idx(images: Uint8Array, labels: Uint8Array, limit: number): number;
    /**
     * Adds a drawn digit to the training pool.
     */
    add_sample(pixels: Float64Array, label: number): number;
    checkpoint(): Uint8Array;
    clear_samples(): void;
    /**
     * Completed training iterations.
     */
    iterations(): bigint;
    /**
     * Latent code of one image.
     */
    latent(pixels: Float64Array): Float64Array;
    /**
     * Replaces the weights with those of a `.caef` checkpoint.
     */
    load_checkpoint(bytes: Uint8Array): void;
    name(): string;
    constructor(netspec: string, seed: bigint);
    /**
     * Reconstruction of a 28x28 image with pixels in [0, 1], as
     * probabilities (sigmoid of the output logits).
     */
    reconstruct(pixels: Float64Array): Float64Array;
    sample_count(): number;
    /**
     * One `name NxCxHxW [min, max]` line per stage, then any saturation
     * warnings.
     */
    trace(pixels: Float64Array): string;
    /**
     * Runs `iters` SGD iterations over the pool and returns the
     * per-iteration training loss (cross-entropy plus Euclidean).
     */
    train(iters: number, base_lr: number, batch_size: number): Float64Array;
}

/**
 * Parameter table, CAE size, symmetry verdict and, when a dataset size in
 * elements is given, the data ratio.
 */
export function audit(netspec: string, data_elements?: number | null): string;

/**
 * Names of the bundled net files.
 */
export function bundled_names(): string[];

/**
 * Text of a bundled net file.
 */
export function bundled_text(name: string): string | undefined;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly audit: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly bundled_names: () => [number, number];
    readonly bundled_text: (a: number, b: number) => [number, number];
    readonly demo_add_idx: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly demo_add_sample: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_checkpoint: (a: number) => [number, number];
    readonly demo_clear_samples: (a: number) => void;
    readonly demo_iterations: (a: number) => bigint;
    readonly demo_latent: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_load_checkpoint: (a: number, b: number, c: number) => [number, number];
    readonly demo_name: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: bigint) => [number, number, number];
    readonly demo_reconstruct: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_sample_count: (a: number) => number;
    readonly demo_trace: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_train: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
