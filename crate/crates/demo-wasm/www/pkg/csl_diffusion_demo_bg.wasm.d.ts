/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const analytic_coefficients: (a: number, b: number) => [number, number, number, number];
export const excess_msd_curve: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
export const fbm_variance: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const fpe_density: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
