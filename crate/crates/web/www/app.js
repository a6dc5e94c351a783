import init, { Demo, audit, bundled_names, bundled_text } from "./pkg/cae_web.js";

const SIDE = 28;
const $ = (id) => document.getElementById(id);

let demo = null;
let losses = [];

function status(msg, isError = false) {
  $("status").textContent = msg;
  $("status").className = isError ? "error" : "";
}

// -- audit ------------------------------------------------------------------

function runAudit() {
  const n = Number($("elements").value);
  try {
    $("audit-out").textContent = audit($("netspec").value, n > 0 ? n : undefined);
    $("audit-out").className = "";
  } catch (e) {
    $("audit-out").textContent = String(e);
    $("audit-out").className = "error";
  }
}

function rebuild() {
  try {
    demo = new Demo($("netspec").value, 1);
    losses = [];
    drawCurve();
    $("pool").textContent = "0";
    status(`network ${demo.name()} ready`);
    refresh();
  } catch (e) {
    demo = null;
    status(String(e), true);
  }
}

// -- drawing pad ------------------------------------------------------------

const pad = $("pad");
const padCtx = pad.getContext("2d");
const cell = pad.width / SIDE;
let pixels = new Float64Array(SIDE * SIDE);
let drawing = false;

function paint(ev) {
  const r = pad.getBoundingClientRect();
  const x = ((ev.clientX - r.left) / r.width) * SIDE;
  const y = ((ev.clientY - r.top) / r.height) * SIDE;
  // soft round brush, roughly the stroke width of MNIST digits
  for (let i = 0; i < SIDE; i++) {
    for (let j = 0; j < SIDE; j++) {
      const d2 = (j + 0.5 - x) ** 2 + (i + 0.5 - y) ** 2;
      const v = Math.exp(-d2 / 1.2);
      if (v > 0.05) pixels[i * SIDE + j] = Math.min(1, pixels[i * SIDE + j] + v);
    }
  }
  drawImage(padCtx, pixels);
}

function drawImage(ctx, values) {
  for (let i = 0; i < SIDE; i++) {
    for (let j = 0; j < SIDE; j++) {
      const g = Math.round(255 * (1 - values[i * SIDE + j]));
      ctx.fillStyle = `rgb(${g},${g},${g})`;
      ctx.fillRect(j * cell, i * cell, cell, cell);
    }
  }
}

pad.addEventListener("pointerdown", (ev) => { drawing = true; pad.setPointerCapture(ev.pointerId); paint(ev); });
pad.addEventListener("pointermove", (ev) => { if (drawing) paint(ev); });
pad.addEventListener("pointerup", () => { drawing = false; refresh(); });

function refresh() {
  if (!demo) return;
  try {
    drawImage($("recon").getContext("2d"), demo.reconstruct(pixels));
    $("latent").textContent = Array.from(demo.latent(pixels), (v) => v.toFixed(3)).join(", ");
    $("trace").textContent = demo.trace(pixels);
  } catch (e) {
    status(String(e), true);
  }
}

// -- training ---------------------------------------------------------------

function drawCurve() {
  const c = $("curve");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  if (losses.length < 2) return;
  const lo = Math.min(...losses);
  const hi = Math.max(...losses);
  const span = hi - lo || 1;
  ctx.strokeStyle = "#1f5fa8";
  ctx.beginPath();
  losses.forEach((v, i) => {
    const x = (i / (losses.length - 1)) * (c.width - 10) + 5;
    const y = c.height - 5 - ((v - lo) / span) * (c.height - 10);
    i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.fillText(hi.toFixed(1), 4, 12);
  ctx.fillText(lo.toFixed(1), 4, c.height - 6);
}

async function train() {
  if (!demo) return;
  const total = Number($("iters").value);
  const lr = Number($("lr").value);
  const batch = Number($("batch").value);
  const chunk = 10;
  $("train").disabled = true;
  try {
    for (let done = 0; done < total; done += chunk) {
      const step = Math.min(chunk, total - done);
      losses.push(...demo.train(step, lr, batch));
      drawCurve();
      status(`iteration ${demo.iterations()}, loss ${losses[losses.length - 1].toFixed(2)}`);
      // let the page repaint between chunks
      await new Promise((r) => setTimeout(r, 0));
    }
    refresh();
  } catch (e) {
    status(String(e), true);
  } finally {
    $("train").disabled = false;
  }
}

async function readFile(input) {
  const f = input.files[0];
  if (!f) throw new Error("choose a file first");
  let bytes = new Uint8Array(await f.arrayBuffer());
  if (bytes[0] === 0x1f && bytes[1] === 0x8b) {
    const stream = new Blob([bytes]).stream().pipeThrough(new DecompressionStream("gzip"));
    bytes = new Uint8Array(await new Response(stream).arrayBuffer());
  }
  return bytes;
}

// -- wiring -----------------------------------------------------------------

await init();

for (const name of bundled_names()) {
  const opt = document.createElement("option");
  opt.textContent = name;
  $("bundled").append(opt);
}
$("bundled").addEventListener("change", () => {
  $("netspec").value = bundled_text($("bundled").value);
  runAudit();
  rebuild();
});
$("netspec").value = bundled_text("model1.net");
$("bundled").value = "model1.net";

$("run-audit").addEventListener("click", () => { runAudit(); rebuild(); });
$("clear").addEventListener("click", () => { pixels = new Float64Array(SIDE * SIDE); drawImage(padCtx, pixels); refresh(); });
$("add").addEventListener("click", () => {
  try {
    $("pool").textContent = demo.add_sample(pixels, Number($("label").value));
  } catch (e) {
    status(String(e), true);
  }
});
$("load-idx").addEventListener("click", async () => {
  try {
    const images = await readFile($("idx-images"));
    const labels = await readFile($("idx-labels"));
    $("pool").textContent = demo.add_idx(images, labels, Number($("idx-limit").value));
  } catch (e) {
    status(String(e), true);
  }
});
$("train").addEventListener("click", train);
$("reset").addEventListener("click", rebuild);
$("ckpt").addEventListener("change", async () => {
  try {
    demo.load_checkpoint(new Uint8Array(await $("ckpt").files[0].arrayBuffer()));
    status(`loaded checkpoint at iteration ${demo.iterations()}`);
    refresh();
  } catch (e) {
    status(String(e), true);
  }
});
$("save").addEventListener("click", () => {
  const blob = new Blob([demo.checkpoint()], { type: "application/octet-stream" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `${demo.name()}_iter_${demo.iterations()}.caef`;
  a.click();
  URL.revokeObjectURL(a.href);
});

drawImage(padCtx, pixels);
runAudit();
rebuild();
