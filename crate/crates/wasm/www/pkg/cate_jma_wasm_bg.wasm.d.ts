/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const cv_surface: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const fit: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const match_preview: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
