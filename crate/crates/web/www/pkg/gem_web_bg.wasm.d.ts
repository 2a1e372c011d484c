/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_mapresult_free: (a: number, b: number) => void;
export const decisionMap: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number];
export const mapresult_detectors: (a: number) => [number, number];
export const mapresult_extent: (a: number) => number;
export const mapresult_points: (a: number) => [number, number];
export const mapresult_probs: (a: number) => [number, number];
export const mapresult_res: (a: number) => number;
export const mapresult_testError: (a: number) => number;
export const mapresult_trainError: (a: number) => number;
export const pairDirections: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const rffCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
