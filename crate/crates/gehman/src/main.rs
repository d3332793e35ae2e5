//! Command-line front end. `build` turns a spec file into a store
//! directory; `eval` and `orbit` apply the maps at exact points; `verify`
//! runs the named check suites; `export` writes JSON or SVG views.
//!
//! Exit codes: 0 on success, 1 when a checked property fails, 2 for usage
//! and structural errors (bad flags, malformed descriptors, missing or
//! stale stores).

use clap::{Args, Parser, Subcommand};
use gehman::code::Code;
use gehman::cover::Thread;
use gehman::dendrite::DPoint;
use gehman::dynamics::eval_f;
use gehman::exact::{eval_f_mod, LimitValue};
use gehman::export::{self, TracePoint};
use gehman::ratio::{format_ratio, parse_ratio, rat_int};
use gehman::subshift::SubshiftError;
use gehman::system::{self, build, spec_digest, BuildError, System, SystemSpec};
use gehman::verify::{self, CheckReport, MapChoice};
use num_traits::Zero;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gehman",
    version,
    about = "Cover towers of Cantor systems, their tree embedding, and two exact piecewise-linear maps"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a spec file and write a build store
    Build {
        /// Spec file: JSON with "kind": full_shift | sft | explicit
        #[arg(short = 'i', long, value_name = "SPEC")]
        input: PathBuf,
        /// Store directory to create or refresh
        #[arg(short = 'o', long, value_name = "DIR")]
        out: PathBuf,
        /// Rebuild even when the stored spec hash matches
        #[arg(long)]
        force: bool,
    },
    /// Apply a map to a point once and print the exact image
    Eval {
        #[command(flatten)]
        at: PointArgs,
    },
    /// Iterate a map from a point and print the orbit
    Orbit {
        #[command(flatten)]
        at: PointArgs,
        /// Number of iterations
        #[arg(long)]
        steps: u32,
    },
    /// Run a named check suite against a store
    Verify {
        #[arg(short = 'd', long, value_name = "DIR")]
        dir: PathBuf,
        /// cover | conjugacy | stretch | mixing | pure | exact | stages |
        /// continuity | geometry | all
        #[arg(long)]
        check: String,
        /// Depth window as a level index; that level's depth mark is the cut
        #[arg(long)]
        level_cut: Option<usize>,
        /// Iteration or stage bound, where the check takes one
        #[arg(long)]
        max_iter: Option<u32>,
        /// Sample count, where the check samples points or pairs
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Print reports as JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// Write a JSON or SVG view of a store
    Export {
        #[arg(short = 'd', long, value_name = "DIR")]
        dir: PathBuf,
        /// json | svg
        #[arg(long)]
        format: String,
        /// Depth window; defaults to the level-1 mark
        #[arg(long)]
        depth_cut: Option<u32>,
        /// Orbit overlay, "<point descriptor>:<steps>"
        #[arg(long)]
        orbit: Option<String>,
        /// Map driving the orbit overlay
        #[arg(long, default_value = "f")]
        map: String,
        /// Output file; stdout when omitted
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PointArgs {
    #[arg(short = 'd', long, value_name = "DIR")]
    dir: PathBuf,
    /// f (the cover-driven map) or fmod (the stage-limit map), any case
    #[arg(long)]
    map: String,
    /// "arc=<bits>,t=<p/q>" or "end=<cell,cell,...>" (one cell per level)
    #[arg(long)]
    point: String,
    /// Refinement budget before an unresolved stage value is reported
    #[arg(long)]
    budget: Option<u32>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Build { input, out, force } => cmd_build(&input, &out, force),
        Cmd::Eval { at } => cmd_eval(&at),
        Cmd::Orbit { at, steps } => cmd_orbit(&at, steps),
        Cmd::Verify { dir, check, level_cut, max_iter, samples, seed, json } => {
            cmd_verify(&dir, &check, level_cut, max_iter, samples, seed, json)
        }
        Cmd::Export { dir, format, depth_cut, orbit, map, out } => {
            cmd_export(&dir, &format, depth_cut, orbit.as_deref(), &map, out.as_deref())
        }
    }
}

fn cmd_build(input: &Path, out: &Path, force: bool) -> Result<ExitCode, String> {
    let text =
        std::fs::read_to_string(input).map_err(|e| format!("{}: {e}", input.display()))?;
    let spec: SystemSpec =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", input.display()))?;
    let digest = spec_digest(&spec);
    if !force && system::stored_digest(out).as_deref() == Some(digest.as_str()) {
        println!("store is current (spec {})", &digest[..12]);
        return Ok(ExitCode::SUCCESS);
    }
    let sys = match build(spec) {
        Ok(sys) => sys,
        Err(e) => return Ok(report_build_failure(&e)),
    };
    write_store(&sys, out)?;
    let top = sys.top_level();
    let marks: Vec<u32> = (0..=top).map(|i| sys.codes.mark(i)).collect();
    println!(
        "built {top} level(s), depth marks {marks:?}, trusted depth {}",
        sys.trusted_depth()
    );
    println!("store written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn report_build_failure(e: &BuildError) -> ExitCode {
    match e {
        BuildError::Subshift(
            s @ (SubshiftError::Empty
            | SubshiftError::NotPerfect { .. }
            | SubshiftError::NotSurjective { .. }),
        ) => {
            eprintln!("not a Cantor system: {s}");
            ExitCode::from(1)
        }
        BuildError::Invalid { report, .. } => {
            eprintln!("cover validation failed:");
            for line in report.lines.iter().filter(|l| !l.pass) {
                eprintln!(
                    "  level {} {}: {}",
                    line.level,
                    line.property,
                    line.witness.as_deref().unwrap_or("no witness")
                );
            }
            ExitCode::from(1)
        }
        other => {
            eprintln!("error: {other}");
            ExitCode::from(2)
        }
    }
}

/// Store layout: the spec and manifest (handled by `system::save`), the
/// validated presentation, the code table, and the level-1 skeleton window.
fn write_store(sys: &System, dir: &Path) -> Result<(), String> {
    system::save(sys, dir).map_err(|e| e.to_string())?;
    let top = sys.top_level();
    let levels: Vec<Value> = (1..=top)
        .map(|i| {
            let g = sys.seq.level(i);
            let cells: Vec<&str> = (0..g.cell_count() as u32).map(|c| g.cell_name(c)).collect();
            let edges: Vec<Value> = g
                .edges()
                .iter()
                .map(|&(a, b)| json!([g.cell_name(a), g.cell_name(b)]))
                .collect();
            let map: Vec<&str> = if i == 1 {
                Vec::new()
            } else {
                (0..g.cell_count() as u32)
                    .map(|c| sys.seq.level(i - 1).cell_name(sys.seq.parent_cell(i, c)))
                    .collect()
            };
            json!({ "cells": cells, "edges": edges, "map": map })
        })
        .collect();
    write_text(&dir.join("presentation.json"), &export::to_pretty(&json!({ "levels": levels })))?;
    let code_rows: Vec<Value> = (1..=top)
        .map(|i| {
            let g = sys.seq.level(i);
            let codes: Vec<String> =
                (0..g.cell_count() as u32).map(|c| sys.codes.code(i, c).to_string()).collect();
            json!({ "level": i, "depth": sys.codes.mark(i), "codes": codes })
        })
        .collect();
    write_text(&dir.join("codes.json"), &export::to_pretty(&json!({ "levels": code_rows })))?;
    let skel = export::skeleton_json(sys, sys.codes.mark(1));
    write_text(&dir.join("skeleton.json"), &export::to_pretty(&skel))
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_store(dir: &Path) -> Result<System, String> {
    let (sys, _) = system::load(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    Ok(sys)
}

fn parse_map(s: &str) -> Result<MapChoice, String> {
    match s.to_ascii_lowercase().as_str() {
        "f" => Ok(MapChoice::F),
        "fmod" | "f_mod" => Ok(MapChoice::FMod),
        other => Err(format!("unknown map {other:?} (f, fmod)")),
    }
}

fn parse_point(sys: &System, desc: &str) -> Result<DPoint, String> {
    if let Some(rest) = desc.strip_prefix("end=") {
        let names: Vec<&str> =
            rest.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let top = sys.top_level();
        if names.len() != top {
            return Err(format!(
                "an end needs one cell per level: expected {top}, got {}",
                names.len()
            ));
        }
        let mut cells = vec![0u32];
        for (i, name) in names.iter().enumerate() {
            let level = i + 1;
            let g = sys.seq.level(level);
            let c = g
                .cell_index(name)
                .ok_or_else(|| format!("level {level} has no cell named {name:?}"))?;
            cells.push(c);
        }
        let thread = Thread::from_cells(&sys.seq, cells).map_err(|e| e.to_string())?;
        return Ok(DPoint::End(thread));
    }
    let mut arc = None;
    let mut t = None;
    for part in desc.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("bad descriptor part {part:?}; use arc=<bits>,t=<p/q>"))?;
        match k.trim() {
            "arc" => arc = Some(Code::parse(v.trim()).map_err(|e| e.to_string())?),
            "t" => t = Some(parse_ratio(v.trim())?),
            other => return Err(format!("unknown descriptor key {other:?}")),
        }
    }
    let arc = arc.ok_or("descriptor needs arc=<bits>")?;
    let t = t.ok_or("descriptor needs t=<p/q>")?;
    if arc.is_empty() {
        return Err("the root is a node, not an arc; its arcs are 0 and 1".into());
    }
    if !sys.codes.node_exists(&arc) {
        return Err(format!("no arc at code {arc} in this build"));
    }
    if t < Zero::zero() || t > rat_int(1) {
        return Err(format!("offset {} is outside [0, 1]", format_ratio(&t)));
    }
    Ok(DPoint::interior(arc, t))
}

fn point_text(sys: &System, p: &TracePoint) -> String {
    match p {
        TracePoint::Point(DPoint::Node(c)) if c.is_empty() => "root".to_string(),
        TracePoint::Point(DPoint::Node(c)) => format!("node {c}"),
        TracePoint::Point(DPoint::Interior { arc, t }) => {
            format!("arc={arc}, t={}", format_ratio(t))
        }
        TracePoint::Point(DPoint::End(th)) if th.depth() == 0 => {
            "end known only to the root level".to_string()
        }
        TracePoint::Point(DPoint::End(th)) => format!("end={}", th.describe(&sys.seq)),
        TracePoint::Nested { node, depth } => {
            format!("nested below {node} after {depth} refinement(s)")
        }
    }
}

// Stage tables cap at 20 refinements; stay under both that and the build.
fn default_budget(sys: &System) -> u32 {
    sys.trusted_depth().min(20)
}

fn cmd_eval(at: &PointArgs) -> Result<ExitCode, String> {
    let sys = load_store(&at.dir)?;
    let map = parse_map(&at.map)?;
    let p = parse_point(&sys, &at.point)?;
    let budget = at.budget.unwrap_or_else(|| default_budget(&sys));
    let image = match map {
        MapChoice::F => TracePoint::Point(eval_f(&sys, &p).map_err(|e| e.to_string())?),
        MapChoice::FMod => match eval_f_mod(&sys, &p, budget).map_err(|e| e.to_string())? {
            LimitValue::Point(q) => TracePoint::Point(q),
            LimitValue::Nested { node, depth } => TracePoint::Nested { node, depth },
        },
    };
    println!("{}", point_text(&sys, &image));
    Ok(ExitCode::SUCCESS)
}

fn cmd_orbit(at: &PointArgs, steps: u32) -> Result<ExitCode, String> {
    let sys = load_store(&at.dir)?;
    let map = parse_map(&at.map)?;
    let p = parse_point(&sys, &at.point)?;
    let budget = at.budget.unwrap_or_else(|| default_budget(&sys));
    let trace = export::run_orbit(&sys, map, &p, steps, budget);
    for (i, step) in trace.points.iter().enumerate() {
        println!("step {i}: {}", point_text(&sys, step));
    }
    if let Some(notice) = &trace.stopped {
        println!("stopped: {notice}");
    }
    Ok(ExitCode::SUCCESS)
}

const ALL_CHECKS: [&str; 9] = [
    "cover",
    "conjugacy",
    "stretch",
    "mixing",
    "pure",
    "exact",
    "stages",
    "continuity",
    "geometry",
];

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    dir: &Path,
    check: &str,
    level_cut: Option<usize>,
    max_iter: Option<u32>,
    samples: Option<usize>,
    seed: u64,
    json_out: bool,
) -> Result<ExitCode, String> {
    let sys = load_store(dir)?;
    let cut_at = |default_level: usize| -> Result<u32, String> {
        let level = level_cut.unwrap_or(default_level);
        if level == 0 || level > sys.top_level() {
            return Err(format!("--level-cut must be 1..={}", sys.top_level()));
        }
        Ok(sys.codes.mark(level))
    };
    let names: Vec<&str> =
        if check == "all" { ALL_CHECKS.to_vec() } else { vec![check] };
    let mut reports: Vec<CheckReport> = Vec::new();
    for name in names {
        let report = match name {
            "cover" => verify::cover_check(&sys),
            "conjugacy" => verify::conjugacy_check(&sys),
            "stretch" => {
                let deepest = (sys.codes.mark(1) + 1).min(sys.trusted_depth());
                verify::stretch_check(&sys, max_iter.unwrap_or(deepest))
            }
            "mixing" => verify::mixing_check(&sys, cut_at(sys.top_level())?, max_iter.unwrap_or(8)),
            "pure" => {
                // The window must reach one arc past the level mark or the
                // level's own cell images fall outside it; shallow builds
                // clamp to the trusted depth instead.
                let cut = (cut_at(1)? + 1).min(sys.trusted_depth());
                verify::pure_check(&sys, cut, max_iter.unwrap_or(6))
            }
            "exact" => verify::exact_check(&sys, max_iter.unwrap_or(5), samples.unwrap_or(60), seed),
            "stages" => verify::stages_check(&sys, max_iter.unwrap_or(8)),
            "continuity" => verify::continuity_check(&sys, samples.unwrap_or(100), seed),
            "geometry" => verify::geometry_check(&sys, samples.unwrap_or(60), seed),
            other => {
                return Err(format!(
                    "unknown check {other:?} (expected one of {}, or all)",
                    ALL_CHECKS.join(", ")
                ))
            }
        };
        reports.push(report);
    }
    if json_out {
        println!(
            "{}",
            serde_json::to_string_pretty(&reports).expect("reports serialize")
        );
    } else {
        for r in &reports {
            println!("[{}] {} ({} ms)", if r.pass { "pass" } else { "FAIL" }, r.name, r.elapsed_ms);
            for d in &r.details {
                println!("    {d}");
            }
            for w in &r.witnesses {
                println!("    witness: {w}");
            }
        }
    }
    if reports.iter().all(|r| r.pass) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_export(
    dir: &Path,
    format: &str,
    depth_cut: Option<u32>,
    orbit: Option<&str>,
    map: &str,
    out: Option<&Path>,
) -> Result<ExitCode, String> {
    let sys = load_store(dir)?;
    let cut = depth_cut.unwrap_or(sys.codes.mark(1));
    let map = parse_map(map)?;
    let trace = match orbit {
        Some(spec) => {
            let (desc, steps) = spec
                .rsplit_once(':')
                .ok_or("an orbit overlay is \"<point descriptor>:<steps>\"")?;
            let steps: u32 =
                steps.trim().parse().map_err(|e| format!("bad step count: {e}"))?;
            let start = parse_point(&sys, desc)?;
            Some(export::run_orbit(&sys, map, &start, steps, default_budget(&sys)))
        }
        None => None,
    };
    let text = match format {
        "json" => {
            let doc = export::scene_json(&sys, cut, trace.as_ref().map(|t| (map, t)))
                .map_err(|e| e.to_string())?;
            export::to_pretty(&doc)
        }
        "svg" => export::svg_scene(&sys, cut, trace.as_ref()),
        other => return Err(format!("unknown format {other:?} (json, svg)")),
    };
    match out {
        Some(path) => {
            write_text(path, &text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
