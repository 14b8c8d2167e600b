/* tslint:disable */
/* eslint-disable */

/**
 * Generates a synthetic corpus whose positive vocabulary is partly replaced
 * after `drift_date`, trains on everything up to `cutoff` and tests on the
 * rest. Returns the drift report as JSON.
 */
export function drift_explorer(n_examples: number, seed: bigint, replaced_fraction: number, drift_date: string, cutoff: string, max_features: number): string;

/**
 * Tokens of `text` under the named profile, space separated.
 */
export function preprocess_text(text: string, profile: string, language: string): string;

/**
 * Band report for rows `[{probability, total, hs}, ...]`: each row stands
 * for `total` checked items at that probability, `hs` of them confirmed.
 * `format` is csv, markdown or json.
 */
export function threshold_bands(rows_json: string, format: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly drift_explorer: (a: number, b: bigint, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly preprocess_text: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly threshold_bands: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
