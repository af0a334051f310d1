/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_segmentation_free: (a: number, b: number) => void;
export const demo_defect_kind: (a: number) => [number, number];
export const demo_extent: (a: number) => number;
export const demo_generate: (a: number, b: number) => [number, number];
export const demo_image: (a: number) => [number, number];
export const demo_load_checkpoint: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const demo_mask: (a: number) => [number, number];
export const demo_new: () => [number, number, number];
export const demo_quick_train: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_segment: (a: number, b: number, c: number, d: number) => [number, number, number];
export const segmentation_boxes: (a: number) => number;
export const segmentation_metrics: (a: number) => [number, number];
export const segmentation_overlay: (a: number) => [number, number];
export const segmentation_refined: (a: number) => [number, number];
export const segmentation_rough: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
