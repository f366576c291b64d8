/* tslint:disable */
/* eslint-disable */

/**
 * A square grid handed to JS: row-major values plus the axis extent.
 */
export class Image {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    half_width(): number;
    size(): number;
    values(): Float64Array;
    /**
     * Scalar summary (mean photon number or mutual information).
     */
    summary: number;
}

/**
 * Reconstructed P(x₁, x₂) of the coupled steady state at phase `phi`, coupling `v_hz` (V/2π).
 */
export function joint_quadratures(phi: number, v_hz: number, cutoff: number): Image;

/**
 * Mean-field orbit (x₁, x₂) interleaved, for the classical rates with V/κ₊ = `v_ratio`.
 */
export function lissajous(phi: number, v_ratio: number): Float64Array;

/**
 * Steady-state Wigner function of one oscillator at κ₋/κ₊ = `ratio`.
 */
export function single_vdp_wigner(ratio: number, cutoff: number): Image;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_get_image_summary: (a: number) => number;
    readonly __wbg_image_free: (a: number, b: number) => void;
    readonly __wbg_set_image_summary: (a: number, b: number) => void;
    readonly image_half_width: (a: number) => number;
    readonly image_size: (a: number) => number;
    readonly image_values: (a: number) => [number, number];
    readonly joint_quadratures: (a: number, b: number, c: number) => [number, number, number];
    readonly lissajous: (a: number, b: number) => [number, number, number, number];
    readonly single_vdp_wigner: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
