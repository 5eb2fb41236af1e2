/* tslint:disable */
/* eslint-disable */

/**
 * Nearest-neighbor field drawn as color: red is the matched x and green the
 * matched y, both relative to the second image's size.
 */
export class NnfView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Mean patch distance over the field.
     */
    readonly meanDist: number;
    readonly png: Uint8Array;
}

export function denoise(img: Uint8Array, k: number, h: number, seed: number): Uint8Array;

export function nnfView(a: Uint8Array, b: Uint8Array, patch_size: number, iterations: number, seed: number): NnfView;

export function retarget(img: Uint8Array, width: number, height: number, seed: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_nnfview_free: (a: number, b: number) => void;
    readonly denoise: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly nnfView: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly nnfview_meanDist: (a: number) => number;
    readonly nnfview_png: (a: number) => [number, number];
    readonly retarget: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
