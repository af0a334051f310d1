import init, { Demo } from "./pkg/clipsam_wasm_demo.js";

const $ = (id) => document.getElementById(id);
let demo;

function status(text) {
  $("status").textContent = text;
}

function paint(id, rgba) {
  const n = demo.extent();
  const canvas = $(id);
  canvas.width = n;
  canvas.height = n;
  const img = new ImageData(new Uint8ClampedArray(rgba), n, n);
  canvas.getContext("2d").putImageData(img, 0, 0);
}

function showSample() {
  paint("c-image", demo.image());
  paint("c-mask", demo.mask());
  $("kind").textContent = demo.defect_kind();
}

function segment() {
  const threshold = Number($("threshold").value);
  const points = Number($("points").value);
  $("threshold-val").textContent = threshold.toFixed(2);
  $("points-val").textContent = points;
  const s = demo.segment(threshold, points, $("no-mmr").checked);
  paint("c-rough", s.rough());
  paint("c-refined", s.refined());
  paint("c-overlay", s.overlay());
  s.metrics().forEach((v, i) => ($("m" + i).textContent = v.toFixed(4)));
  s.free();
}

// let the status line repaint before a long synchronous call
const later = (f) => new Promise((resolve) => setTimeout(() => resolve(f()), 20));

async function guarded(label, f) {
  status(label + "...");
  try {
    await later(f);
    segment();
    status("ready");
  } catch (e) {
    status("error: " + (e.message ?? e));
  }
}

async function main() {
  await init();
  demo = new Demo();
  showSample();
  segment();
  status("ready (untrained model: quick train or load a checkpoint)");

  $("generate").onclick = () =>
    guarded("generating", () => {
      demo.generate(Number($("seed").value));
      showSample();
    });
  $("train").onclick = () =>
    guarded("training", () => {
      const means = demo.quick_train(Number($("samples").value), Number($("epochs").value));
      console.log("epoch mean losses", Array.from(means));
    });
  $("load").onclick = async () => {
    const [ckpt, conf] = [$("ckpt").files[0], $("conf").files[0]];
    if (!ckpt || !conf) {
      status("choose both a checkpoint and its .conf file");
      return;
    }
    const bytes = new Uint8Array(await ckpt.arrayBuffer());
    const text = await conf.text();
    await guarded("loading", () => {
      demo.load_checkpoint(bytes, text);
      showSample();
    });
  };
  for (const id of ["threshold", "points", "no-mmr"]) {
    $(id).oninput = () => {
      try {
        segment();
      } catch (e) {
        status("error: " + (e.message ?? e));
      }
    };
  }
}

main();
