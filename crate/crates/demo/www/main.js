import init, { preset_layout, score_layout, trace_pose, fov_slice } from "./pkg/handfield_demo.js";

const $ = (id) => document.getElementById(id);
const EXTENT = 400;
const CELLS = 80;
const SHADES = ["#ffffff", "#dbe9f6", "#a6c8e6", "#5a9bd0", "#1f5f99"];
const SENSOR_COLOURS = ["#d1495b", "#edae49", "#00798c", "#6a4c93", "#30638e", "#8d6a9f"];
const CHAINS = [
  [0, 1],
  [1, 3, 4, 5, 6, 7], [1, 8, 9, 10, 11, 12], [1, 13, 14, 15, 16, 17], [1, 18, 19, 20, 21, 22], [1, 23, 24, 25, 26, 27],
  [9, 14, 19, 24],
];

function sensors() {
  return $("layout").value;
}

function pose() {
  const thumb = +$("thumb").value;
  const index = +$("index").value;
  const others = +$("others").value;
  const finger = (a) => ({ mcp_deg: a, pip_deg: a, dip_deg: a });
  return JSON.stringify({
    position_mm: [0, +$("height").value, 250],
    orientation: $("orientation").value,
    wrist_flexion_deg: +$("wrist").value,
    fingers: [
      { mcp_deg: thumb, pip_deg: 0, dip_deg: thumb },
      finger(index), finger(others), finger(others), finger(others),
    ],
  });
}

function call(f, ...args) {
  try {
    const out = JSON.parse(f(...args));
    $("error").textContent = "";
    return out;
  } catch (e) {
    $("error").textContent = String(e.message ?? e);
    return null;
  }
}

function topToCanvas(x, z, c) {
  const s = c.width / (2 * EXTENT);
  return [(x + EXTENT) * s, (z + EXTENT) * s];
}

function frontToCanvas(x, y, c) {
  const s = c.width / (2 * EXTENT);
  return [(x + EXTENT) * s, c.height - 10 - y * s * 0.5];
}

function drawSensors(ctx, list, toCanvas, c, front) {
  list.forEach((p, k) => {
    const colour = SENSOR_COLOURS[k % SENSOR_COLOURS.length];
    const [u, v] = front ? toCanvas(p.x_mm, 0, c) : toCanvas(p.x_mm, p.z_mm, c);
    ctx.fillStyle = colour;
    ctx.fillRect(u - 6, v - 6, 12, 12);
    ctx.fillStyle = "#000";
    ctx.fillText(String(k + 1), u + 8, v - 8);
    if (!front) {
      // Heading of the sensor's long axis after the vertical-axis rotation.
      const t = (p.theta_deg * Math.PI) / 180;
      ctx.strokeStyle = colour;
      ctx.beginPath();
      ctx.moveTo(u - 14 * Math.cos(t), v + 14 * Math.sin(t));
      ctx.lineTo(u + 14 * Math.cos(t), v - 14 * Math.sin(t));
      ctx.stroke();
    }
  });
}

function drawHand(ctx, markers, project) {
  ctx.strokeStyle = "#333";
  ctx.lineWidth = 1.5;
  for (const chain of CHAINS) {
    ctx.beginPath();
    chain.forEach((i, k) => {
      const [u, v] = project(markers[i]);
      if (k === 0) ctx.moveTo(u, v);
      else ctx.lineTo(u, v);
    });
    ctx.stroke();
  }
  ctx.fillStyle = "#333";
  for (const m of markers) {
    const [u, v] = project(m);
    ctx.beginPath();
    ctx.arc(u, v, 2.2, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.lineWidth = 1;
}

function renderTrace(trace) {
  const head = trace.fingers.map((f) => `<th>${f}</th>`).join("");
  const rows = trace.sensors
    .map((s, k) => {
      const cells = s.visible
        .map((ok, f) => (ok ? `<td class="ok">✓</td>` : `<td class="no">${s.causes[f]}</td>`))
        .join("");
      return `<tr><th>sensor ${k + 1}</th>${cells}</tr>`;
    })
    .join("");
  $("trace-out").innerHTML =
    `<p>Frame score: <b>${trace.score}</b> sensor(s) see every finger.</p>` +
    `<table><tr><th></th>${head}</tr>${rows}</table>`;
}

function redraw() {
  for (const id of ["wrist", "thumb", "index", "others", "height", "slice"]) {
    $(id).nextElementSibling.textContent = $(id).value;
  }
  let list;
  try {
    list = JSON.parse(sensors());
  } catch (e) {
    $("error").textContent = `layout: ${e.message}`;
    return;
  }
  const fov = $("fov").value;
  const top = $("top");
  const ctx = top.getContext("2d");
  ctx.clearRect(0, 0, top.width, top.height);

  const slice = call(fov_slice, sensors(), fov, +$("slice").value, EXTENT, CELLS);
  if (slice) {
    const size = top.width / CELLS;
    slice.counts.forEach((n, i) => {
      ctx.fillStyle = SHADES[Math.min(n, SHADES.length - 1)];
      ctx.fillRect((i % CELLS) * size, Math.floor(i / CELLS) * size, size + 0.5, size + 0.5);
    });
  }
  const trace = call(trace_pose, pose(), sensors(), fov);
  if (trace) {
    drawHand(ctx, trace.markers, (m) => topToCanvas(m[0], m[2], top));
    renderTrace(trace);
  }
  drawSensors(ctx, list, topToCanvas, top, false);

  const front = $("front");
  const fctx = front.getContext("2d");
  fctx.clearRect(0, 0, front.width, front.height);
  fctx.strokeStyle = "#999";
  fctx.beginPath();
  fctx.moveTo(0, front.height - 10);
  fctx.lineTo(front.width, front.height - 10);
  fctx.stroke();
  if (trace) drawHand(fctx, trace.markers, (m) => frontToCanvas(m[0], m[1], front));
  drawSensors(fctx, list, frontToCanvas, front, true);
}

function loadPreset() {
  const list = JSON.parse(preset_layout($("preset").value));
  $("layout").value = JSON.stringify(list, null, 1);
  $("score-out").textContent = "";
  redraw();
}

function score() {
  $("score-out").textContent = "scoring…";
  // Let the message paint before the blocking call.
  setTimeout(() => {
    const s = call(score_layout, sensors(), $("fov").value);
    $("score-out").innerHTML = s
      ? `score <b>${s.score.toFixed(4)}</b>; frames seen by ≥ i sensors: [${s.tier_counts.join(", ")}] of ${s.frame_count}`
      : "";
  }, 10);
}

await init();
$("preset").addEventListener("change", loadPreset);
$("score").addEventListener("click", score);
$("layout").addEventListener("input", redraw);
for (const id of ["fov", "orientation", "wrist", "thumb", "index", "others", "height", "slice"]) {
  $(id).addEventListener("input", redraw);
}
loadPreset();
