/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_get_image_summary: (a: number) => number;
export const __wbg_image_free: (a: number, b: number) => void;
export const __wbg_set_image_summary: (a: number, b: number) => void;
export const image_half_width: (a: number) => number;
export const image_size: (a: number) => number;
export const image_values: (a: number) => [number, number];
export const joint_quadratures: (a: number, b: number, c: number) => [number, number, number];
export const lissajous: (a: number, b: number) => [number, number, number, number];
export const single_vdp_wigner: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
