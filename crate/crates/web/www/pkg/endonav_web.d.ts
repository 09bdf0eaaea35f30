/* tslint:disable */
/* eslint-disable */

/**
 * One simulated fluoroscopy frame and what the detector made of it.
 */
export class Frame {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Detection error, pixels.
     */
    error_px(): number;
    height(): number;
    /**
     * Image pixels; foreground grey, skeleton orange.
     */
    rgba(): Uint8Array;
    /**
     * Detected tip `[u, v]`.
     */
    tip(): Float64Array;
    /**
     * Projected true tip `[u, v]`.
     */
    truth(): Float64Array;
    width(): number;
}

/**
 * A planned path over a generated phantom, in the path-plane chart (mm).
 */
export class PlanView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    length(): number;
    /**
     * Waypoints `[u0, v0, u1, v1, ...]`.
     */
    path(): Float64Array;
    /**
     * Cloud points within 0.5 mm of the plane, same layout.
     */
    walls(): Float64Array;
}

/**
 * Body points of the endoscope for the four angles (rad), flattened as
 * `[x0, y0, z0, x1, ...]` in mm, section base at the origin.
 */
export function bend(theta1: number, theta2: number, theta3: number, theta4: number, delta: number): Float64Array;

/**
 * Renders the endoscope in side view with intensity noise `sigma`, then
 * segments, keeps the largest blob, thins and locates the tip.
 */
export function detect(theta1: number, theta2: number, sigma: number, seed: bigint): Frame;

/**
 * Generates the phantom with the given target lateral offset and plans a
 * path with the given planner seed.
 */
export function plan_phantom(target_lateral: number, seed: bigint): PlanView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_frame_free: (a: number, b: number) => void;
    readonly __wbg_planview_free: (a: number, b: number) => void;
    readonly bend: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly detect: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly frame_error_px: (a: number) => number;
    readonly frame_height: (a: number) => number;
    readonly frame_rgba: (a: number) => [number, number];
    readonly frame_tip: (a: number) => [number, number];
    readonly frame_truth: (a: number) => [number, number];
    readonly frame_width: (a: number) => number;
    readonly plan_phantom: (a: number, b: bigint) => [number, number, number];
    readonly planview_length: (a: number) => number;
    readonly planview_path: (a: number) => [number, number];
    readonly planview_walls: (a: number) => [number, number];
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
