import init, { Demo } from "./pkg/sdr_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const status = (t) => { $("status").textContent = t; };

let demo = null;
let box = null;
let drag = null;
let summary = null;

function paint(canvas, rgba, size) {
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), size, size), 0, 0);
}

function outline(canvas, b, color) {
  const ctx = canvas.getContext("2d");
  ctx.strokeStyle = color;
  ctx.lineWidth = 0.6;
  ctx.strokeRect(b[0], b[1], b[2] - b[0], b[3] - b[1]);
}

function redrawInputs() {
  const n = demo.size();
  paint($("phantom"), demo.phantom_rgba(), n);
  paint($("initial"), demo.initial_rgba(), n);
  if ($("show-gt").checked) {
    for (const g of JSON.parse(demo.ground_truth_json())) {
      outline($("phantom"), g.box, "lime");
      outline($("initial"), g.box, "lime");
    }
  }
  if (box) outline($("initial"), box, "red");
}

function redrawRecons() {
  const holder = $("recons");
  holder.innerHTML = "";
  if (!summary) return;
  const n = demo.size();
  const diff = $("diff").checked;
  const scale = Math.max(summary.max_deviation, 1e-9);
  summary.distances_to_initial.forEach((d, i) => {
    const fig = document.createElement("figure");
    const c = document.createElement("canvas");
    c.width = n; c.height = n;
    paint(c, diff ? demo.difference_rgba(i, scale) : demo.reconstruction_rgba(i), n);
    if (box) outline(c, box, "red");
    for (const m of summary.merged_detections) {
      if (m.scores[i] > 0) outline(c, m.box, "orange");
    }
    const cap = document.createElement("figcaption");
    cap.textContent = `#${i + 1} dist ${d.toFixed(2)} res ${summary.consistency_residuals[i].toExponential(1)}`;
    fig.append(c, cap);
    holder.append(fig);
  });
}

function simulate() {
  try {
    demo = new Demo(Number($("seed").value), Number($("accel").value));
  } catch (e) {
    status(`error: ${e.message ?? e}`);
    return;
  }
  box = null;
  summary = null;
  $("run").disabled = true;
  redrawInputs();
  redrawRecons();
  status("drag a box on the initial reconstruction");
}

function pixel(ev) {
  const c = $("initial");
  const r = c.getBoundingClientRect();
  const n = demo.size();
  const clamp = (v) => Math.min(Math.max(v, 0), n);
  return [clamp(((ev.clientX - r.left) / r.width) * n), clamp(((ev.clientY - r.top) / r.height) * n)];
}

$("initial").addEventListener("mousedown", (ev) => { if (demo) drag = pixel(ev); });
$("initial").addEventListener("mousemove", (ev) => {
  if (!drag) return;
  const [x, y] = pixel(ev);
  box = [Math.min(drag[0], x), Math.min(drag[1], y), Math.max(drag[0], x), Math.max(drag[1], y)].map(Math.round);
  redrawInputs();
});
window.addEventListener("mouseup", () => {
  if (!drag) return;
  drag = null;
  const ok = box && box[2] - box[0] >= 4 && box[3] - box[1] >= 4;
  if (!ok) box = null;
  $("run").disabled = !ok;
  redrawInputs();
  status(ok ? `box [${box.join(", ")}]` : "box too small, drag again");
});

$("run").addEventListener("click", () => {
  status("running…");
  setTimeout(() => {
    const t0 = performance.now();
    try {
      summary = JSON.parse(demo.run(...box, Number($("n-rec").value), Number($("n-opt").value),
        Number($("radius").value), Number($("run-seed").value)));
    } catch (e) {
      status(`error: ${e.message ?? e}`);
      return;
    }
    redrawRecons();
    const rows = summary.diversity_matrix.map((r) => r.map((v) => v.toFixed(3).padStart(7)).join(" "));
    status(`done in ${((performance.now() - t0) / 1000).toFixed(1)} s\n` +
      `mean box-feature distance ${summary.seeded_mean_distance.toFixed(3)} -> ${summary.final_mean_distance.toFixed(3)}\n` +
      `diversity matrix\n${rows.join("\n")}\n` +
      `merged detections ${summary.merged_detections.length}`);
  }, 20);
});

$("simulate").addEventListener("click", simulate);
$("show-gt").addEventListener("change", () => demo && redrawInputs());
$("diff").addEventListener("change", redrawRecons);

await init();
simulate();
