/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_nnfview_free: (a: number, b: number) => void;
export const denoise: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const nnfView: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const nnfview_meanDist: (a: number) => number;
export const nnfview_png: (a: number) => [number, number];
export const retarget: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
