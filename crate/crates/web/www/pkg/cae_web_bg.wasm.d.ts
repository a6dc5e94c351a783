/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const audit: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const bundled_names: () => [number, number];
export const bundled_text: (a: number, b: number) => [number, number];
export const demo_add_idx: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const demo_add_sample: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demo_checkpoint: (a: number) => [number, number];
export const demo_clear_samples: (a: number) => void;
export const demo_iterations: (a: number) => bigint;
export const demo_latent: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_load_checkpoint: (a: number, b: number, c: number) => [number, number];
export const demo_name: (a: number) => [number, number];
export const demo_new: (a: number, b: number, c: bigint) => [number, number, number];
export const demo_reconstruct: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_sample_count: (a: number) => number;
export const demo_trace: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_train: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
