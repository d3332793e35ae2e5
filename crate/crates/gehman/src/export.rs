//! Deterministic exports: JSON views of the skeleton, the arc tables and
//! orbit traces, plus a schematic SVG of the tree window. Byte-for-byte
//! stability across rebuilds of the same spec is part of the contract:
//! everything is emitted in sorted or input order and rationals are
//! rendered exactly as `p/q`.

use crate::code::Code;
use crate::dendrite::{build_skeleton, DPoint, Skeleton};
use crate::dynamics::{arc_table, eval_f, ArcKind};
use crate::exact::{eval_f_mod, LimitValue};
use crate::ratio::format_ratio;
use crate::system::System;
use crate::verify::MapChoice;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Nodes of the depth-`cut` window in prefix-first order, with parents,
/// children, cell marks, node kinds and tidy planar coordinates.
pub fn skeleton_json(sys: &System, cut: u32) -> Value {
    let skel = build_skeleton(&sys.codes, cut);
    let lay = layout(&skel);
    let nodes: Vec<Value> = (0..skel.len() as u32)
        .map(|i| {
            let kind = if i == 0 {
                "root"
            } else if skel.cell_mark(i).is_some() {
                "cell"
            } else if skel.children(i).iter().all(|c| c.is_some()) {
                "branch"
            } else {
                "chain"
            };
            let mut node = json!({
                "code": skel.code(i).to_string(),
                "depth": skel.depth(i),
                "kind": kind,
                "parent": skel.parent(i),
                "children": skel.children(i),
                "x": round2(lay.xs[i as usize]),
                "y": round2(lay.ys[i as usize]),
            });
            if let Some((level, cell)) = skel.cell_mark(i) {
                node["cell"] = json!({
                    "level": level,
                    "name": sys.seq.level(level as usize).cell_name(cell),
                });
            }
            node
        })
        .collect();
    let arcs: Vec<Value> = (1..skel.len() as u32)
        .map(|i| {
            json!({
                "code": skel.code(i).to_string(),
                "depth": skel.depth(i),
                "length": format_ratio(&crate::ratio::arc_len(skel.depth(i) as usize)),
            })
        })
        .collect();
    json!({
        "depth_cut": cut,
        "node_count": skel.len(),
        "arc_count": skel.len() - 1,
        "nodes": nodes,
        "arcs": arcs,
    })
}

/// The complete export document: skeleton nodes and arcs, arc tables where
/// the build depth supports them, and optionally an orbit trace.
pub fn scene_json(
    sys: &System,
    cut: u32,
    orbit: Option<(MapChoice, &OrbitTrace)>,
) -> Result<Value, crate::dynamics::MapError> {
    let mut doc = skeleton_json(sys, cut);
    let tables = map_json(sys, cut)?;
    doc["tables"] = tables["arcs"].clone();
    doc["trusted_depth"] = tables["trusted_depth"].clone();
    if let Some((map, trace)) = orbit {
        doc["orbit"] = orbit_json(sys, map, trace);
    }
    Ok(doc)
}

/// Arc tables for every arc of the window, shallowest first. The window is
/// clamped to the trusted depth; the clamp is recorded rather than hidden.
pub fn map_json(sys: &System, cut: u32) -> Result<Value, crate::dynamics::MapError> {
    let trusted = sys.trusted_depth();
    let clamped = cut.min(trusted);
    let skel = build_skeleton(&sys.codes, clamped);
    let mut arcs = Vec::new();
    for idx in skel.below(0, clamped) {
        let arc = skel.code(idx);
        let table = arc_table(sys, arc)?;
        let pieces: Vec<Value> = table
            .pieces
            .iter()
            .map(|p| {
                json!({
                    "from": format_ratio(&p.lo),
                    "to": format_ratio(&p.hi),
                    "chain_top": p.top.to_string(),
                    "chain_bottom": p.bottom.to_string(),
                    "descending": p.down,
                    "stretch": format_ratio(&p.lambda(arc.len() as u32)),
                })
            })
            .collect();
        arcs.push(json!({
            "arc": arc.to_string(),
            "level": table.level,
            "kind": match table.kind { ArcKind::Band => "band", ArcKind::Cell => "cell" },
            "pieces": pieces,
        }));
    }
    Ok(json!({
        "depth_cut": clamped,
        "requested_cut": cut,
        "trusted_depth": trusted,
        "arcs": arcs,
    }))
}

/// One step of an orbit: either an exact point or the unresolved nesting
/// certificate the stage map returns when a parameter never leaves the
/// spread pieces.
#[derive(Debug, Clone)]
pub enum TracePoint {
    Point(DPoint),
    Nested { node: Code, depth: u32 },
}

#[derive(Debug)]
pub struct OrbitTrace {
    pub points: Vec<TracePoint>,
    /// Why iteration ended early, if it did.
    pub stopped: Option<String>,
}

/// Iterates the chosen map from `start`, recording each image and stopping
/// with a notice once a point leaves the map's usable domain.
pub fn run_orbit(
    sys: &System,
    map: MapChoice,
    start: &DPoint,
    steps: u32,
    budget: u32,
) -> OrbitTrace {
    let mut points = vec![TracePoint::Point(start.clone())];
    let mut cur = start.clone();
    let mut stopped = None;
    for _ in 0..steps {
        match map {
            MapChoice::F => match eval_f(sys, &cur) {
                Ok(p) => {
                    points.push(TracePoint::Point(p.clone()));
                    cur = p;
                }
                Err(e) => {
                    stopped = Some(e.to_string());
                    break;
                }
            },
            MapChoice::FMod => match eval_f_mod(sys, &cur, budget) {
                Ok(LimitValue::Point(p)) => {
                    points.push(TracePoint::Point(p.clone()));
                    cur = p;
                }
                Ok(LimitValue::Nested { node, depth }) => {
                    points.push(TracePoint::Nested { node: node.clone(), depth });
                    stopped = Some(format!(
                        "image is pinned below node {node} after {depth} refinements"
                    ));
                    break;
                }
                Err(e) => {
                    stopped = Some(e.to_string());
                    break;
                }
            },
        }
    }
    OrbitTrace { points, stopped }
}

pub fn point_json(sys: &System, p: &TracePoint) -> Value {
    match p {
        TracePoint::Point(DPoint::Node(c)) => json!({ "kind": "node", "code": c.to_string() }),
        TracePoint::Point(DPoint::Interior { arc, t }) => json!({
            "kind": "interior",
            "arc": arc.to_string(),
            "offset": format_ratio(t),
        }),
        TracePoint::Point(DPoint::End(thread)) => json!({
            "kind": "end",
            "cells": thread.describe(&sys.seq),
        }),
        TracePoint::Nested { node, depth } => json!({
            "kind": "nested",
            "node": node.to_string(),
            "refinements": depth,
        }),
    }
}

pub fn orbit_json(sys: &System, map: MapChoice, trace: &OrbitTrace) -> Value {
    let points: Vec<Value> = trace
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut v = point_json(sys, p);
            v["step"] = json!(i);
            v
        })
        .collect();
    json!({
        "map": map.name(),
        "points": points,
        "stopped": trace.stopped,
    })
}

struct Layout {
    xs: Vec<f64>,
    ys: Vec<f64>,
    width: f64,
    height: f64,
}

const X_STEP: f64 = 26.0;
const Y_STEP: f64 = 64.0;
const MARGIN: f64 = 30.0;

/// Tidy layout: leaves take consecutive x slots in prefix order, inner
/// nodes sit midway over their children, y grows with depth (schematic;
/// true arc lengths shrink fourfold per level and would be invisible).
fn layout(skel: &Skeleton) -> Layout {
    let n = skel.len();
    let mut xs = vec![0.0f64; n];
    let mut next_slot = 0.0f64;
    // Prefix order puts children after parents; walk backwards so every
    // child is placed before its parent is averaged.
    for i in (0..n as u32).rev() {
        let kids: Vec<u32> = skel.children(i).iter().flatten().copied().collect();
        xs[i as usize] = if kids.is_empty() {
            next_slot += 1.0;
            next_slot
        } else {
            kids.iter().map(|&k| xs[k as usize]).sum::<f64>() / kids.len() as f64
        };
    }
    // Leaves were numbered right to left; mirror for left-to-right reading.
    let max_x = next_slot;
    let mut ys = vec![0.0f64; n];
    for i in 0..n as u32 {
        xs[i as usize] = MARGIN + (max_x - xs[i as usize]) * X_STEP;
        ys[i as usize] = MARGIN + skel.depth(i) as f64 * Y_STEP;
    }
    let depth_max = (0..n as u32).map(|i| skel.depth(i)).max().unwrap_or(0);
    Layout {
        xs,
        ys,
        width: MARGIN * 2.0 + max_x * X_STEP,
        height: MARGIN * 2.0 + depth_max as f64 * Y_STEP,
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Position of a trace point inside the drawn window; points below the cut
/// are pinned to their deepest drawn ancestor and flagged as clipped.
fn locate(skel: &Skeleton, lay: &Layout, p: &TracePoint) -> (f64, f64, bool) {
    let node_pos = |c: &Code| -> (f64, f64, bool) {
        let mut d = c.len().min(skel.cut() as usize);
        loop {
            if let Some(i) = skel.node(&c.prefix(d)) {
                return (lay.xs[i as usize], lay.ys[i as usize], d < c.len());
            }
            d -= 1;
        }
    };
    match p {
        TracePoint::Point(DPoint::Node(c)) => node_pos(c),
        TracePoint::Point(DPoint::Interior { arc, t }) => {
            if arc.len() as u32 <= skel.cut() {
                let lo = skel.node(&arc.parent().unwrap()).unwrap();
                let hi = skel.node(arc).unwrap();
                let f = t.to_f64().unwrap_or(0.5);
                (
                    lay.xs[lo as usize] + (lay.xs[hi as usize] - lay.xs[lo as usize]) * f,
                    lay.ys[lo as usize] + (lay.ys[hi as usize] - lay.ys[lo as usize]) * f,
                    false,
                )
            } else {
                node_pos(arc)
            }
        }
        TracePoint::Point(DPoint::End(_)) => (lay.xs[0], lay.ys[0], true),
        TracePoint::Nested { node, .. } => node_pos(node),
    }
}

/// Schematic SVG of the window, optionally with an orbit drawn over it.
pub fn svg_scene(sys: &System, cut: u32, orbit: Option<&OrbitTrace>) -> String {
    let skel = build_skeleton(&sys.codes, cut);
    let lay = layout(&skel);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" \
         font-family=\"monospace\" font-size=\"11\">\n",
        fmt(lay.width),
        fmt(lay.height)
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for i in 1..skel.len() as u32 {
        let p = skel.parent(i).unwrap();
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888\" stroke-width=\"1\"/>\n",
            fmt(lay.xs[p as usize]),
            fmt(lay.ys[p as usize]),
            fmt(lay.xs[i as usize]),
            fmt(lay.ys[i as usize]),
        ));
    }
    for i in 0..skel.len() as u32 {
        let (x, y) = (lay.xs[i as usize], lay.ys[i as usize]);
        match skel.cell_mark(i) {
            Some((level, _)) => out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3.5\" fill=\"#2166ac\"><title>level {} cell {}</title></circle>\n",
                fmt(x), fmt(y), level, skel.code(i),
            )),
            None => out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"1.6\" fill=\"#444\"/>\n",
                fmt(x), fmt(y),
            )),
        }
    }
    if let Some(trace) = orbit {
        let spots: Vec<(f64, f64, bool)> =
            trace.points.iter().map(|p| locate(&skel, &lay, p)).collect();
        for w in spots.windows(2) {
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#b2182b\" \
                 stroke-width=\"1.4\" stroke-dasharray=\"4 3\"/>\n",
                fmt(w[0].0),
                fmt(w[0].1),
                fmt(w[1].0),
                fmt(w[1].1),
            ));
        }
        for (i, (x, y, clipped)) in spots.iter().enumerate() {
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"4.5\" fill=\"none\" stroke=\"#b2182b\" stroke-width=\"1.4\"/>\n\
                 <text x=\"{}\" y=\"{}\" fill=\"#b2182b\">{}{}</text>\n",
                fmt(*x),
                fmt(*y),
                fmt(x + 6.0),
                fmt(y - 6.0),
                i,
                if *clipped { "*" } else { "" },
            ));
        }
        if spots.iter().any(|s| s.2) {
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" fill=\"#b2182b\">* point lies below the drawn window</text>\n",
                fmt(MARGIN),
                fmt(lay.height - 8.0),
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Pretty JSON with a trailing newline, the shape every export file uses.
pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable export");
    s.push('\n');
    s
}
