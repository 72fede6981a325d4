import init, { score_text, forgetting_curves, adaptive_lambda } from "./pkg/repeat_wasm_demo.js";

const COLORS = { FT: "#d62728", EWC: "#ff7f0e", EMR: "#1f77b4", REPEAT: "#2ca02c" };
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(el, err) {
  el.textContent = String(err);
  el.className = "out err";
}

function drawChart(runs) {
  const canvas = $("chart");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 10, w - pad - 10, h - pad - 10);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  const steps = runs[0].first_test_accuracy.length;
  const x = (i) => pad + (i * (w - pad - 30)) / (steps - 1) + 10;
  const y = (a) => 10 + (1 - a) * (h - pad - 10);
  for (let i = 0; i < steps; i++) ctx.fillText(`step ${i + 1}`, x(i) - 16, h - 12);
  for (const a of [0, 0.5, 1]) ctx.fillText(a.toFixed(1), 8, y(a) + 4);
  runs.forEach((run, k) => {
    ctx.strokeStyle = COLORS[run.strategy] || "#000";
    ctx.lineWidth = 2;
    ctx.beginPath();
    run.first_test_accuracy.forEach((a, i) => (i ? ctx.lineTo(x(i), y(a)) : ctx.moveTo(x(i), y(a))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(run.strategy, w - 80, 26 + 16 * k);
  });
}

function curvesTable(runs) {
  const rows = runs
    .map((r) => {
      const first = r.first_test_accuracy[0];
      const last = r.first_test_accuracy[r.first_test_accuracy.length - 1];
      const drop = first > 0 ? (100 * (first - last)) / first : 0;
      return `<tr><td>${r.strategy}</td><td>${r.omega_accuracy.toFixed(4)}</td><td>${drop.toFixed(1)}%</td>` +
        `<td>${r.lambda.map((l) => l.toFixed(0)).join(", ")}</td></tr>`;
    })
    .join("");
  return `<table><tr><th>strategy</th><th>&Omega; accuracy</th><th>drop on partition 1</th><th>&lambda; per step</th></tr>${rows}</table>`;
}

async function main() {
  await init();

  $("run-score").onclick = () => {
    const s = JSON.parse(score_text($("cand").value, $("ref").value));
    $("score-out").className = "out";
    $("score-out").textContent =
      `BLEU-4 ${s.bleu4.toFixed(4)}   METEOR ${s.meteor.toFixed(4)}   ROUGE-L ${s.rouge_l.toFixed(4)}`;
  };

  $("run-lambda").onclick = () => {
    try {
      const r = JSON.parse(adaptive_lambda($("current").value, $("stored").value, num("lambda-text")));
      $("lambda-out").className = "out";
      $("lambda-out").textContent = `similarity ${r.similarity.toFixed(4)}   lambda ${r.lambda.toFixed(2)}`;
    } catch (e) {
      fail($("lambda-out"), e);
    }
  };

  $("run-curves").onclick = () => {
    const status = $("curves-status");
    status.textContent = "training...";
    status.className = "";
    // let the status text paint before the synchronous run
    setTimeout(() => {
      try {
        const t0 = performance.now();
        const r = JSON.parse(forgetting_curves(num("drift"), num("budget"), num("lambda-base"), num("seed")));
        drawChart(r.runs);
        $("curves-table").innerHTML = curvesTable(r.runs);
        status.textContent = `done in ${((performance.now() - t0) / 1000).toFixed(1)} s`;
      } catch (e) {
        fail(status, e);
      }
    }, 20);
  };

  $("run-score").onclick();
  $("run-lambda").onclick();
}

main();
