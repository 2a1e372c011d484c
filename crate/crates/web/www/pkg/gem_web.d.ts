/* tslint:disable */
/* eslint-disable */

export class MapResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly detectors: Float64Array;
    readonly extent: number;
    readonly points: Float64Array;
    readonly probs: Float64Array;
    readonly res: number;
    readonly testError: number;
    readonly trainError: number;
}

export function decisionMap(task: string, n: number, seed: number, gamma: number, theta: number, m_max: number, rff_features: number, sigma: number, res: number): MapResult;

export function pairDirections(signal: Float64Array, noise: Float64Array, gamma: number): Float64Array;

export function rffCurve(sigma: number, features: number, seed: number, steps: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_mapresult_free: (a: number, b: number) => void;
    readonly decisionMap: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number];
    readonly mapresult_detectors: (a: number) => [number, number];
    readonly mapresult_extent: (a: number) => number;
    readonly mapresult_points: (a: number) => [number, number];
    readonly mapresult_probs: (a: number) => [number, number];
    readonly mapresult_res: (a: number) => number;
    readonly mapresult_testError: (a: number) => number;
    readonly mapresult_trainError: (a: number) => number;
    readonly pairDirections: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly rffCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
