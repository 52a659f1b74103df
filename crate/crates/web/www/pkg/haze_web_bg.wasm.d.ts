/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_srdemo_free: (a: number, b: number) => void;
export const face: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const srdemo_compare: (a: number, b: number, c: number) => [number, number, number, number];
export const srdemo_create: (a: number) => [number, number, number];
export const srdemo_epoch: (a: number) => number;
export const srdemo_faces: (a: number) => number;
export const srdemo_psnr: (a: number) => [number, number, number, number];
export const srdemo_size: (a: number) => number;
export const srdemo_trainEpoch: (a: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
