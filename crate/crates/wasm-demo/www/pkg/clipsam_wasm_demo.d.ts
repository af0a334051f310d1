/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    defect_kind(): string;
    extent(): number;
    generate(seed: number): void;
    image(): Uint8Array;
    load_checkpoint(checkpoint: Uint8Array, conf: string): void;
    mask(): Uint8Array;
    constructor();
    quick_train(samples: number, epochs: number): Float64Array;
    segment(threshold: number, points: number, no_mmr: boolean): Segmentation;
}

export class Segmentation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    boxes(): number;
    /**
     * Rough then refined `auroc, ap, f1_max, pro`.
     */
    metrics(): Float64Array;
    overlay(): Uint8Array;
    refined(): Uint8Array;
    rough(): Uint8Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_segmentation_free: (a: number, b: number) => void;
    readonly demo_defect_kind: (a: number) => [number, number];
    readonly demo_extent: (a: number) => number;
    readonly demo_generate: (a: number, b: number) => [number, number];
    readonly demo_image: (a: number) => [number, number];
    readonly demo_load_checkpoint: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly demo_mask: (a: number) => [number, number];
    readonly demo_new: () => [number, number, number];
    readonly demo_quick_train: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_segment: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly segmentation_boxes: (a: number) => number;
    readonly segmentation_metrics: (a: number) => [number, number];
    readonly segmentation_overlay: (a: number) => [number, number];
    readonly segmentation_refined: (a: number) => [number, number];
    readonly segmentation_rough: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
