import init, { heat_kernel_curve, sample_field, smallball_curve } from "./pkg/smallball_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const status = $("status");

// Polyline of ys against xs, with the y range padded and zero marked.
function plot(canvas, xs, ys, { points = false } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const lo = Math.min(0, ...ys), hi = Math.max(...ys, lo + 1e-12);
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => 30 + ((x - x0) / (x1 - x0 || 1)) * (w - 40);
  const py = (y) => h - 20 - ((y - lo) / (hi - lo)) * (h - 30);
  ctx.strokeStyle = "#aaa";
  ctx.beginPath();
  ctx.moveTo(30, py(0));
  ctx.lineTo(w - 10, py(0));
  ctx.stroke();
  ctx.fillStyle = "#555";
  ctx.fillText(hi.toPrecision(3), 2, 12);
  ctx.fillText(lo.toPrecision(3), 2, h - 22);
  ctx.strokeStyle = ctx.fillStyle = "#1f5fa8";
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
  if (points) xs.forEach((x, i) => ctx.fillRect(px(x) - 2, py(ys[i]) - 2, 4, 4));
}

const grid = (n) => Array.from({ length: n }, (_, i) => i / (n - 1));

function guarded(f) {
  return () => {
    status.textContent = "";
    status.className = "";
    try {
      f();
    } catch (e) {
      status.textContent = String(e);
      status.className = "err";
    }
  };
}

const drawKernel = guarded(() => {
  const ys = heat_kernel_curve(num("k-t"), num("k-x"), 401);
  plot($("k-plot"), grid(401), Array.from(ys));
});

const drawField = guarded(() => {
  const ys = Array.from(sample_field(num("f-nx"), num("f-t"), num("f-sigma"), BigInt(num("f-seed"))));
  plot($("f-plot"), grid(ys.length), ys);
});

const drawBall = guarded(() => {
  const eps = Float64Array.from({ length: 12 }, (_, i) => 0.1 + 0.05 * i);
  const start = performance.now();
  const p = smallball_curve(num("s-nx"), num("s-t"), 1.0, eps, num("s-n"), 1n);
  plot($("s-plot"), Array.from(eps), Array.from(p), { points: true });
  status.textContent = `estimated ${eps.length} radii in ${Math.round(performance.now() - start)} ms`;
});

await init();
$("k-go").onclick = drawKernel;
$("f-go").onclick = drawField;
$("s-go").onclick = drawBall;
drawKernel();
drawField();
