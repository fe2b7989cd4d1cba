import init, { partitionRoles, solveCircle, alphaScan } from "./pkg/cpm_dd_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

const ROLE_COLORS = {
  disjoint: "#1f77b4",
  overlap: "#7fb3e0",
  ghost: "#bbbbbb",
  boundary: "#d62728",
  outside: "#e8e8e8",
};

function problem() {
  return [num("dx"), num("nsub"), num("nov")];
}

function guard(fn) {
  return () => {
    $("status").textContent = "";
    try {
      fn();
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

// axis-aligned plot box with data-to-pixel maps
function frame(canvas, xr, yr, logY = false) {
  const ctx = canvas.getContext("2d");
  const pad = 40;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  const ty = logY ? Math.log10 : (v) => v;
  const [y0, y1] = [ty(yr[0]), ty(yr[1])];
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  const fmt = (v) => (logY ? `1e${Math.round(v)}` : v.toPrecision(3));
  ctx.fillText(fmt(y1), 2, pad + 4);
  ctx.fillText(fmt(y0), 2, pad + h);
  ctx.fillText(xr[0].toPrecision(3), pad, pad + h + 14);
  ctx.fillText(xr[1].toPrecision(3), pad + w - 24, pad + h + 14);
  return {
    ctx,
    x: (v) => pad + ((v - xr[0]) / (xr[1] - xr[0] || 1)) * w,
    y: (v) => pad + h - ((ty(v) - y0) / (y1 - y0 || 1)) * h,
  };
}

function polyline(f, xs, ys, color) {
  f.ctx.strokeStyle = color;
  f.ctx.beginPath();
  xs.forEach((x, i) => (i ? f.ctx.lineTo(f.x(x), f.y(ys[i])) : f.ctx.moveTo(f.x(x), f.y(ys[i]))));
  f.ctx.stroke();
}

function drawRoles() {
  const [dx, nsub, nov] = problem();
  const v = JSON.parse(partitionRoles(dx, nsub, nov, num("sub"), $("robin-roles").checked));
  const canvas = $("roles");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const ext = Math.max(...v.nodes.map((n) => Math.max(Math.abs(n.x), Math.abs(n.y)))) + dx;
  const s = canvas.width / (2 * ext);
  const r = Math.max(1.5, 0.35 * dx * s);
  for (const n of v.nodes) {
    ctx.fillStyle = ROLE_COLORS[n.role];
    ctx.beginPath();
    ctx.arc(canvas.width / 2 + n.x * s, canvas.height / 2 - n.y * s, r, 0, 2 * Math.PI);
    ctx.fill();
  }
  $("legend").innerHTML = Object.entries(ROLE_COLORS)
    .map(([k, c]) => `<span><i style="background:${c}"></i>${k}</span>`)
    .join("");
  $("roles-info").innerHTML =
    `active nodes ${v.n_active}<br>ghost nodes ${v.n_ghost}<br>` +
    `part sizes ${v.part_sizes.join(", ")}<br>balance ${v.balance.toFixed(3)}<br>edge cut ${v.edge_cut}`;
}

function drawSolve() {
  const [dx, nsub, nov] = problem();
  const v = JSON.parse(solveCircle(dx, nsub, nov, $("tc").value === "robin", num("alpha"), $("mode").value));
  $("solve-info").textContent =
    `${v.status}: ${v.iterations} iterations` + (Number.isFinite(v.max_error) ? `, max error ${v.max_error.toExponential(2)}` : "");
  if (!v.residuals.length) return;
  const res = v.residuals.map((r) => Math.max(r, 1e-16));
  const its = res.map((_, i) => i);
  const fr = frame($("residuals"), [0, Math.max(1, its.length - 1)], [Math.min(...res), Math.max(...res)], true);
  polyline(fr, its, res, "#1f77b4");
  const fs = frame($("solution"), [-Math.PI, Math.PI], [-1.1, 1.1]);
  polyline(fs, v.angle, v.exact, "#bbbbbb");
  fs.ctx.fillStyle = "#d62728";
  v.angle.forEach((a, i) => fs.ctx.fillRect(fs.x(a) - 1, fs.y(v.u[i]) - 1, 2, 2));
}

function drawScan() {
  const [dx, nsub, nov] = problem();
  const alphas = $("alphas").value.split(",").map(Number).filter((a) => a > 0);
  const v = JSON.parse(alphaScan(dx, nsub, nov, new Float64Array(alphas)));
  const ok = v.points.filter((p) => p.converged);
  const top = Math.max(v.ras_iterations, ...ok.map((p) => p.iterations));
  const la = alphas.map(Math.log10);
  const f = frame($("scan"), [Math.min(...la), Math.max(...la) || 1], [0, top * 1.1]);
  polyline(f, [Math.min(...la), Math.max(...la)], [v.ras_iterations, v.ras_iterations], "#999");
  polyline(f, ok.map((p) => Math.log10(p.alpha)), ok.map((p) => p.iterations), "#1f77b4");
  f.ctx.fillText("log10 alpha", f.x((Math.min(...la) + Math.max(...la)) / 2) - 20, $("scan").height - 6);
  $("scan-table").innerHTML =
    `<tr><th>alpha</th><th>iterations</th><th>status</th></tr>` +
    `<tr><td>RAS</td><td>${v.ras_iterations}</td><td></td></tr>` +
    v.points.map((p) => `<tr><td>${p.alpha}</td><td>${p.iterations}</td><td>${p.status}</td></tr>`).join("");
}

await init();
$("run-roles").onclick = guard(drawRoles);
$("run-solve").onclick = guard(drawSolve);
$("run-scan").onclick = guard(drawScan);
guard(drawRoles)();
