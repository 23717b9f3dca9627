/* tslint:disable */
/* eslint-disable */

/**
 * Closed-form `[t³ coefficient of excess <x²>, rate of excess <p²>]`.
 */
export function analytic_coefficients(alpha: number, lambda: number): Float64Array;

/**
 * Excess position and momentum variance over the λ = 0 baseline, effective
 * mode. Rows of `[t, excess_var_x, excess_var_p]`, flattened.
 */
export function excess_msd_curve(alpha: number, lambda: number, n_trajectories: number, n_steps: number, dt: number, seed: bigint): Float64Array;

/**
 * Var(B(t)) of the integrated affine noise, one value per step.
 */
export function fbm_variance(a: number, n_realizations: number, n_steps: number, dt: number, seed: bigint): Float64Array;

/**
 * Phase-space density at `t_final` from a Gaussian of width 0.5 in x and p.
 * Returns `[n_x, n_p, x_min, x_max, p_min, p_max]` followed by the density,
 * x-major.
 */
export function fpe_density(alpha: number, lambda: number, t_final: number, n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly analytic_coefficients: (a: number, b: number) => [number, number, number, number];
    readonly excess_msd_curve: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly fbm_variance: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly fpe_density: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
