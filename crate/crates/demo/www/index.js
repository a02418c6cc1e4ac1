import init, { maskView, teacherView, trainingCurve } from "./pkg/partial_ner_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const status = (text) => { $("status").textContent = text; };

// Lets the status line repaint before a long synchronous call.
const busy = (text, work) => {
  status(text);
  setTimeout(() => {
    try {
      work();
      status("");
    } catch (e) {
      status(`error: ${e}`);
    }
  }, 20);
};

const el = (tag, attrs = {}, ...children) => {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  for (const c of children) node.append(c);
  return node;
};

function runMask() {
  const view = JSON.parse(maskView(num("mask-seed"), num("mask-fraction"), 12));
  $("mask-summary").textContent = `kept ${view.kept_entities} of ${view.total_entities} entities`;
  const out = $("mask-out");
  out.replaceChildren();
  for (const sentence of view.sentences) {
    const line = el("div", { class: "sentence" });
    for (const t of sentence) {
      const cls = t.gold === "O" ? "tok" : t.kept ? "tok kept" : "tok masked";
      line.append(el("span", { class: cls }, t.token, el("small", {}, t.partial)));
    }
    out.append(line);
  }
}

function runTeacher() {
  const view = JSON.parse(teacherView(num("teacher-seed"), num("teacher-fraction"), 3));
  $("teacher-summary").textContent = `first-stage teacher, validation F1 ${view.fit_val_f1.toFixed(3)}; highlighted rows were replaced by the known labels`;
  const out = $("teacher-out");
  out.replaceChildren();
  for (const sentence of view.sentences) {
    const table = el("table");
    table.append(el("tr", {}, el("th", {}, "token"), el("th", {}, "gold"), ...view.tags.map((t) => el("th", {}, t))));
    for (const t of sentence) {
      const cells = (probs, hot) => probs.map((p) => el("td", hot ? { class: "hot" } : {}, p.toFixed(3)));
      table.append(el("tr", {}, el("td", {}, `${t.token} (before)`), el("td", {}, t.gold), ...cells(t.before, false)));
      if (t.kept) {
        table.append(el("tr", {}, el("td", {}, `${t.token} (after)`), el("td", {}, t.gold), ...cells(t.after, true)));
      }
    }
    out.append(table);
  }
}

const colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
let curves = [];

function drawCurves() {
  const svg = $("curve-plot");
  const [w, h, pad] = [svg.width.baseVal.value, svg.height.baseVal.value, 30];
  const longest = Math.max(2, ...curves.map((c) => c.points.length));
  const x = (i) => pad + (i / (longest - 1)) * (w - 2 * pad);
  const y = (f) => h - pad - f * (h - 2 * pad);
  const ns = "http://www.w3.org/2000/svg";
  const make = (tag, attrs) => {
    const node = document.createElementNS(ns, tag);
    for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
    return node;
  };
  svg.replaceChildren(make("line", { x1: pad, y1: y(0), x2: w - pad, y2: y(0), stroke: "#999" }), make("line", { x1: pad, y1: y(0), x2: pad, y2: y(1), stroke: "#999" }));
  for (const f of [0, 0.5, 1]) {
    const label = make("text", { x: 2, y: y(f) + 4, "font-size": 10 });
    label.textContent = f.toFixed(1);
    svg.append(label);
  }
  const legend = $("curve-legend");
  legend.replaceChildren();
  curves.forEach((c, i) => {
    const color = colors[i % colors.length];
    const points = c.points.map((f, j) => `${x(j)},${y(f)}`).join(" ");
    svg.append(make("polyline", { points, fill: "none", stroke: color, "stroke-width": 2 }));
    if (c.boundary > 0) {
      svg.append(make("line", { x1: x(c.boundary), y1: y(0), x2: x(c.boundary), y2: y(1), stroke: color, "stroke-dasharray": "3 3" }));
    }
    legend.append(el("div", { style: `color:${color}` }, c.label));
  });
}

function runCurve() {
  const method = $("curve-method").value;
  const curve = JSON.parse(trainingCurve(method, num("curve-fraction"), 0, num("curve-epochs")));
  const points = curve.stages.flatMap(([, f1s]) => f1s);
  const boundary = curve.stages.length > 1 ? curve.stages[0][1].length : 0;
  const label = `${curve.method} @ ${curve.fraction} (${curve.kept_entities} kept): selected val F1 ${curve.val_f1.toFixed(3)}`;
  curves.push({ label, points, boundary });
  $("curve-summary").textContent = "dashed line: end of the fitting stage";
  drawCurves();
}

await init();
status("");
$("mask-run").onclick = () => busy("masking…", runMask);
$("teacher-run").onclick = () => busy("fitting teacher…", runTeacher);
$("curve-run").onclick = () => busy("training…", runCurve);
$("curve-clear").onclick = () => { curves = []; drawCurves(); };
runMask();
