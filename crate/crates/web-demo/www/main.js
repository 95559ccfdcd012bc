import init, { localizeScene, rotationDemo, aliasingCurve } from "./pkg/wideband_doa_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

// Draws polylines on a canvas with simple axes; series = [{x, y, color, points}].
function plot(canvas, series, { xmin, xmax, ymin, ymax, xlabel, ylabel }) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  const sx = (x) => pad + ((x - xmin) / (xmax - xmin)) * (w - 2 * pad);
  const sy = (y) => h - pad + -((y - ymin) / (ymax - ymin)) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText(`${xmin}`, pad, h - pad + 14);
  ctx.fillText(`${xmax}`, w - pad - 20, h - pad + 14);
  ctx.fillText(xlabel, w / 2 - 20, h - 8);
  ctx.fillText(`${ymax.toFixed(1)}`, 2, pad + 4);
  ctx.fillText(`${ymin.toFixed(1)}`, 2, h - pad);
  ctx.fillText(ylabel, 2, pad - 10);
  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    if (s.points) {
      s.x.forEach((x, i) => ctx.fillRect(sx(x) - 3, sy(s.y[i]) - 3, 6, 6));
      continue;
    }
    ctx.beginPath();
    s.x.forEach((x, i) => {
      const y = Math.max(ymin, Math.min(ymax, s.y[i]));
      i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y));
    });
    ctx.stroke();
  }
}

function vlines(canvas, xs, color, range) {
  const ctx = canvas.getContext("2d");
  const pad = 40;
  ctx.strokeStyle = color;
  ctx.setLineDash([4, 3]);
  for (const x of xs) {
    const px = pad + ((x - range.xmin) / (range.xmax - range.xmin)) * (canvas.width - 2 * pad);
    ctx.beginPath();
    ctx.moveTo(px, pad);
    ctx.lineTo(px, canvas.height - pad);
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function fmt(v) {
  return Array.from(v, (d) => d.toFixed(2) + "°").join(", ");
}

function runScene() {
  const out = $("scene-out");
  out.className = "";
  try {
    const doa2 = $("two").checked ? num("doa2") : undefined;
    const r = localizeScene(num("doa1"), doa2, num("snr"), num("secs"), Math.max(0, num("seed") | 0));
    out.textContent =
      `bins used:   ${r.binsUsed}\n` +
      `proposed:    ${fmt(r.proposed)}\n` +
      `hist-ESPRIT: ${fmt(r.hist)}\n` +
      `CSS:         ${fmt(r.css)}`;
    const hist = r.histogram;
    const peak = Math.max(1, ...hist);
    const centers = Array.from(hist, (_, i) => -90 + (i + 0.5) * r.histogramBinWidth);
    const range = { xmin: -90, xmax: 90, ymin: -40, ymax: 0, xlabel: "DOA (deg)", ylabel: "CSS dB / histogram" };
    plot($("scene-plot"), [
      { x: centers, y: Array.from(hist, (c) => -40 + (40 * c) / peak), color: "#bbb" },
      { x: r.cssGrid, y: r.cssSpectrumDb, color: "#1f77b4" },
    ], range);
    vlines($("scene-plot"), r.proposed, "#d62728", range);
  } catch (e) {
    out.className = "error";
    out.textContent = String(e.message ?? e);
  }
}

function runRotation() {
  try {
    const ph = rotationDemo(num("rdoa"), num("fsrc"), num("fref"));
    const p = ph.length / 3;
    const idx = Array.from({ length: p }, (_, i) => i + 1);
    const ys = [ph.slice(0, p), ph.slice(p, 2 * p), ph.slice(2 * p)];
    const lo = Math.min(...ph), hi = Math.max(...ph);
    const span = Math.max(hi - lo, 1e-3);
    plot($("rot-plot"), [
      { x: idx, y: ys[0], color: "#999" },
      { x: idx, y: ys[2], color: "#2ca02c" },
      { x: idx, y: ys[1], color: "#d62728", points: true },
    ], { xmin: 1, xmax: p, ymin: lo - 0.1 * span, ymax: hi + 0.1 * span, xlabel: "microphone", ylabel: "phase (rad)" });
  } catch (e) {
    alert(e.message ?? e);
  }
}

function runAliasing() {
  try {
    const f = aliasingCurve(num("spacing"), num("speed"));
    const doas = Array.from(f, (_, i) => i + 1);
    const finite = Array.from(f).filter(Number.isFinite);
    const ymax = Math.min(Math.max(...finite), 4 * Math.min(...finite));
    plot($("alias-plot"), [{ x: doas, y: f, color: "#9467bd" }],
      { xmin: 1, xmax: 90, ymin: 0, ymax, xlabel: "|DOA| (deg)", ylabel: "limit (Hz)" });
  } catch (e) {
    alert(e.message ?? e);
  }
}

await init();
$("run").onclick = runScene;
$("rotate").onclick = runRotation;
$("alias").onclick = runAliasing;
runScene();
runRotation();
runAliasing();
