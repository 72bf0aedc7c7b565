import init, { explore, ag_trajectory, hcb_pivot_sweep } from "./pkg/pairjoint_web.js";

const $ = (id) => document.getElementById(id);
const inputs = ["v", "seed", "conc", "perturb", "iters"].map($);

function params() {
  return {
    v: Number($("v").value),
    seed: Number($("seed").value) >>> 0,
    conc: Number($("conc").value),
    perturb: Number($("perturb").value),
    iters: Number($("iters").value),
  };
}

// White to dark blue, scaled to the largest cell.
function heatmap(canvas, grid, max) {
  const n = grid.length;
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / n;
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const t = max > 0 ? Math.min(grid[i][j] / max, 1) : 0;
      const c = Math.round(255 * (1 - t));
      ctx.fillStyle = `rgb(${c}, ${c}, ${255 - Math.round(120 * t)})`;
      ctx.fillRect(j * cell, i * cell, Math.ceil(cell), Math.ceil(cell));
    }
  }
}

function figure(title, grid, max) {
  const fig = document.createElement("figure");
  const canvas = document.createElement("canvas");
  canvas.width = canvas.height = 160;
  heatmap(canvas, grid, max);
  const cap = document.createElement("figcaption");
  cap.textContent = title;
  fig.append(canvas, cap);
  return fig;
}

function lineChart(canvas, series) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const floor = 1e-16;
  const all = series.flatMap((s) => s.values).map((x) => Math.max(x, floor));
  const lo = Math.log10(Math.min(...all));
  const hi = Math.log10(Math.max(...all));
  const span = Math.max(hi - lo, 1e-9);
  const steps = Math.max(...series.map((s) => s.values.length)) - 1 || 1;
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.values.forEach((x, k) => {
      const px = ((k + s.offset) / steps) * (canvas.width - 10) + 5;
      const py = canvas.height - 5 - ((Math.log10(Math.max(x, floor)) - lo) / span) * (canvas.height - 10);
      k === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  ctx.fillStyle = "#555";
  ctx.fillText(`1e${hi.toFixed(1)}`, 8, 14);
  ctx.fillText(`1e${lo.toFixed(1)}`, 8, canvas.height - 8);
}

function render() {
  const p = params();
  for (const el of inputs) {
    const out = document.querySelector(`output[for=${el.id}]`);
    if (out) out.textContent = el.value;
  }
  try {
    $("error").textContent = "";
    const r = JSON.parse(explore(p.v, p.seed, p.conc, p.perturb, p.iters));
    const max = Math.max(...r.truth.flat(), ...r.methods.flatMap((m) => m.joint.flat()));
    const joints = $("joints");
    joints.replaceChildren(figure("ground truth", r.truth, max));
    for (const m of r.methods) joints.append(figure(m.method, m.joint, max));
    $("compat").textContent =
      `compatibility residual ${r.compat.residual_max.toExponential(2)} ` +
      `(${r.compat.compatible ? "compatible" : "incompatible"} at 1e-6); ` +
      `HCB pivot (${r.hcb_pivot.join(", ")}); AG ran ${r.ag_iterations} steps` +
      (r.ag_converged ? ", converged" : "");
    $("scores").innerHTML =
      "<tr><th>method</th><th>KL(truth ‖ joint)</th><th>mean conditional KL</th></tr>" +
      r.methods
        .map((m) => `<tr><td>${m.method}</td><td>${m.kl_from_truth.toExponential(3)}</td>` +
          `<td>${m.conditional_kl.toExponential(3)}</td></tr>`)
        .join("");

    const t = JSON.parse(ag_trajectory(p.v, p.seed, p.conc, p.perturb, p.iters));
    lineChart($("trajectory"), [
      { values: t.objective, color: "#2255cc", offset: 0 },
      { values: t.kl_from_truth, color: "#cc2222", offset: 1 },
    ]);

    const s = JSON.parse(hcb_pivot_sweep(p.v, p.seed, p.conc, p.perturb));
    heatmap($("pivots"), s.kl_from_truth, s.max);
    $("pivot-range").textContent =
      `KL from truth by pivot: ${s.min.toExponential(2)} to ${s.max.toExponential(2)}`;
  } catch (e) {
    $("error").textContent = String(e);
  }
}

await init();
for (const el of inputs) el.addEventListener("input", render);
render();
