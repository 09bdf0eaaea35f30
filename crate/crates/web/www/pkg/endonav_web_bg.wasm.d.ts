/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_frame_free: (a: number, b: number) => void;
export const __wbg_planview_free: (a: number, b: number) => void;
export const bend: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const detect: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const frame_error_px: (a: number) => number;
export const frame_height: (a: number) => number;
export const frame_rgba: (a: number) => [number, number];
export const frame_tip: (a: number) => [number, number];
export const frame_truth: (a: number) => [number, number];
export const frame_width: (a: number) => number;
export const plan_phantom: (a: number, b: bigint) => [number, number, number];
export const planview_length: (a: number) => number;
export const planview_path: (a: number) => [number, number];
export const planview_walls: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
