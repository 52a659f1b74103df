/* tslint:disable */
/* eslint-disable */

/**
 * A small super-resolution network trained in place, one epoch per call.
 */
export class SrDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Bicubic, network output and ground truth for face `index`,
     * each scaled up by `zoom`.
     */
    compare(index: number, zoom: number): Uint8Array;
    constructor(seed: number);
    /**
     * `[bicubic PSNR, network PSNR]` over the training faces.
     */
    psnr(): Float64Array;
    /**
     * One Adam epoch over the training faces; returns the mean L1 loss.
     */
    trainEpoch(): number;
    readonly epoch: number;
    readonly faces: number;
    readonly size: number;
}

/**
 * A `size`×`size` synthetic face with its gaze arrow.
 */
export function face(theta_deg: number, phi_deg: number, id: number, size: number): Uint8Array;

/**
 * Face, kept-coefficient mask and extracted high frequencies side by side,
 * `3·size` wide.
 */
export function spectrum(theta_deg: number, phi_deg: number, id: number, size: number, lambda: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_srdemo_free: (a: number, b: number) => void;
    readonly face: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly srdemo_compare: (a: number, b: number, c: number) => [number, number, number, number];
    readonly srdemo_create: (a: number) => [number, number, number];
    readonly srdemo_epoch: (a: number) => number;
    readonly srdemo_faces: (a: number) => number;
    readonly srdemo_psnr: (a: number) => [number, number, number, number];
    readonly srdemo_size: (a: number) => number;
    readonly srdemo_trainEpoch: (a: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
