import init, { extract_graph, metrics, window_pairs, sample_story } from "./pkg/temprel_web.js";

const $ = (id) => document.getElementById(id);
const SVG = "http://www.w3.org/2000/svg";
const COLORS = { BEFORE: "#222", AFTER: "#222", INCLUDES: "#1f5fbf", IS_INCLUDED: "#1f5fbf", OVERLAP: "#2e7d32" };

const EXAMPLE = {
  doc_id: "quake",
  sentences: [[
    ["Hours", "NNS"], ["after", "IN"], ["the", "DT"], ["earthquake", "NN"], [",", ","], ["rescuers", "NNS"],
    ["searched", "VBD"], ["dozens", "NNS"], ["of", "IN"], ["buildings", "NNS"], ["during", "IN"], ["a", "DT"],
    ["storm", "NN"], [".", "."],
  ].map(([surface, pos]) => ({ surface, pos }))],
  events: [
    { event_id: "e1", sent_idx: 0, first: 3, last: 3 },
    { event_id: "e2", sent_idx: 0, first: 6, last: 6 },
    { event_id: "e3", sent_idx: 0, first: 12, last: 12 },
  ],
  relations: [
    { source: "e1", target: "e2", label: "BEFORE" },
    { source: "e2", target: "e3", label: "IS_INCLUDED" },
  ],
};

function el(tag, attrs = {}, text) {
  const node = document.createElementNS(SVG, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

function drawGraph(view) {
  const svg = $("graph");
  svg.replaceChildren();
  const width = svg.clientWidth || 900;
  const baseline = 200;
  const step = width / (view.nodes.length + 1);
  const x = new Map(view.nodes.map((n, i) => [n.id, step * (i + 1)]));

  const defs = el("defs");
  const marker = el("marker", { id: "arrow", viewBox: "0 0 10 10", refX: 9, refY: 5, markerWidth: 7, markerHeight: 7, orient: "auto" });
  marker.append(el("path", { d: "M0,0 L10,5 L0,10 z", fill: "context-stroke" }));
  defs.append(marker);
  svg.append(defs);

  for (const e of view.edges) {
    const x1 = x.get(e.source), x2 = x.get(e.target);
    const lift = Math.min(170, 30 + Math.abs(x2 - x1) * 0.35);
    const color = COLORS[e.label] ?? "#777";
    svg.append(el("path", {
      d: `M${x1},${baseline - 12} C${x1},${baseline - lift} ${x2},${baseline - lift} ${x2},${baseline - 12}`,
      fill: "none", stroke: color, "stroke-width": 1.5, "marker-end": "url(#arrow)",
      "stroke-dasharray": e.provenance === "inferred" ? "5,4" : "none",
    }));
    svg.append(el("text", { x: (x1 + x2) / 2, y: baseline - lift * 0.75 - 4, "text-anchor": "middle", "font-size": 11, fill: color }, e.label));
  }
  for (const n of view.nodes) {
    svg.append(el("circle", { cx: x.get(n.id), cy: baseline, r: 10, fill: "#fff", stroke: "#333" }));
    svg.append(el("text", { x: x.get(n.id), y: baseline + 4, "text-anchor": "middle", "font-size": 9 }, n.id));
    svg.append(el("text", { x: x.get(n.id), y: baseline + 28, "text-anchor": "middle", "font-size": 12 }, n.text));
  }
  $("dot").textContent = view.dot;
  $("conflicts").textContent = view.conflicts.length
    ? `${view.conflicts.length} conflict(s): ${view.conflicts.map((c) => c.kind === "cycle" ? c.nodes.join(" → ") : `${c.a}/${c.b}`).join("; ")}`
    : "no conflicts";
}

function showWindow(pair) {
  const out = $("window");
  out.replaceChildren();
  if (!pair.window?.length) {
    out.textContent = "Out of window: this gold pair is never classified and counts as a miss.";
    return;
  }
  const [lo, hi] = [Math.min(pair.src_pos, pair.tgt_pos), Math.max(pair.src_pos, pair.tgt_pos)];
  pair.window.forEach((tok, i) => {
    if (i > 0 && tok.sent_idx !== pair.window[i - 1].sent_idx) {
      const sep = document.createElement("span");
      sep.className = "sep";
      sep.textContent = "‖";
      out.append(sep, " ");
    }
    const span = document.createElement("span");
    span.textContent = tok.surface;
    span.title = tok.pos;
    if (i === pair.src_pos || i === pair.tgt_pos) span.className = "anchor";
    else if (i > lo && i < hi) span.className = "between";
    out.append(span, " ");
  });
}

function drawPairs(pairs) {
  const body = $("pairs").querySelector("tbody");
  body.replaceChildren();
  $("window").replaceChildren();
  for (const p of pairs) {
    const row = document.createElement("tr");
    for (const v of [p.kind, p.source, p.target, p.label, p.sent_dist, p.tok_dist ?? ""]) {
      const td = document.createElement("td");
      td.textContent = v;
      row.append(td);
    }
    row.addEventListener("click", () => {
      body.querySelectorAll("tr").forEach((r) => r.classList.remove("selected"));
      row.classList.add("selected");
      showWindow(p);
    });
    body.append(row);
  }
}

function refresh() {
  const text = $("doc").value;
  try {
    drawGraph(JSON.parse(extract_graph(text, $("closure").checked)));
    drawPairs(JSON.parse(window_pairs(text)));
    $("doc-error").textContent = "";
  } catch (err) {
    $("doc-error").textContent = err.message ?? String(err);
  }
}

function score() {
  const [c, p, g] = ["correct", "predicted", "gold"].map((id) => Number($(id).value));
  try {
    const m = JSON.parse(metrics(c, p, g));
    $("metrics").textContent = `P ${(100 * m.precision).toFixed(2)}   R ${(100 * m.recall).toFixed(2)}   F1 ${(100 * m.f1).toFixed(2)}`;
  } catch (err) {
    $("metrics").textContent = err.message ?? String(err);
  }
}

await init();
$("doc").value = JSON.stringify(EXAMPLE, null, 2);
$("doc").addEventListener("input", refresh);
$("closure").addEventListener("change", refresh);
$("sample").addEventListener("click", () => {
  $("doc").value = sample_story(Math.floor(Math.random() * 2 ** 32));
  refresh();
});
$("example").addEventListener("click", () => {
  $("doc").value = JSON.stringify(EXAMPLE, null, 2);
  refresh();
});
for (const id of ["correct", "predicted", "gold"]) $(id).addEventListener("input", score);
refresh();
score();
