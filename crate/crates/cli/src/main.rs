mod args;
mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use compass_core::attitude::{estimate_attitude_rig, segment_to_great_circle, CameraAttitude};
use compass_core::database::{build_database, Clearance, Database};
use compass_core::descriptor::{DescriptorStats, RadialDescriptor};
use compass_core::detection::{
    detect_segments, detect_windows, detect_windows_from_segments, read_detections_csv, read_segments_csv,
    write_detections_csv, write_segments_csv, LineSegment,
};
use compass_core::error::{CompassError, Result};
use compass_core::fisheye::{build_visual_descriptor, CameraRig};
use compass_core::floorplan::{load_floorplan, load_floorplan_with_sidecar, ColorRule, FloorPlanRaster, Pose2D};
use compass_core::matching::{correlation_curve, match_query};
use compass_core::raycast::compute_descriptor;
use compass_core::report::{
    agreement_report, correlation_curve_csv, descriptor_csv, ranking_csv, tool_header, CorrelationPeak,
};
use compass_core::svg;
use compass_core::synth::{generate_plan, run_localization_eval, ObservationMode};

use args::*;
use config::RunConfig;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CompassError) -> u8 {
    match e {
        CompassError::Io { .. } | CompassError::Decode { .. } => 3,
        CompassError::EmptyDatabase | CompassError::EmptyAfterFilter { .. } | CompassError::NoAttitude(_) => 2,
        _ => 1,
    }
}

struct Ctx {
    out_dir: Option<PathBuf>,
    quiet: bool,
    cfg: RunConfig,
}

impl Ctx {
    fn out_path(&self, p: &Path) -> Result<PathBuf> {
        let path = match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        };
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CompassError::Io { path: parent.into(), source: e })?;
        }
        Ok(path)
    }

    fn write(&self, p: &Path, text: &str) -> Result<PathBuf> {
        let path = self.out_path(p)?;
        fs::write(&path, text).map_err(|e| CompassError::Io { path: path.clone(), source: e })?;
        self.info(&format!("wrote {}", path.display()));
        Ok(path)
    }

    fn info(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { out_dir: cli.out_dir, quiet: cli.quiet, cfg };
    match cli.command {
        Command::BuildDb(a) => cmd_build_db(&ctx, a),
        Command::Describe(a) => cmd_describe(&ctx, a),
        Command::Match(a) => cmd_match(&ctx, a),
        Command::DetectWindows(a) => cmd_detect_windows(&ctx, a),
        Command::VisualDescriptor(a) => cmd_visual_descriptor(&ctx, a),
        Command::Attitude(a) => cmd_attitude(&ctx, a),
        Command::GeneratePlan(a) => cmd_generate_plan(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
    }
}

fn load_plan(a: &PlanArgs) -> Result<FloorPlanRaster> {
    let origin = match a.origin.as_deref() {
        Some([x, y]) => Some([*x, *y]),
        Some(_) => return Err(CompassError::InvalidConfig("--origin takes X,Y".into())),
        None => None,
    };
    match a.resolution {
        Some(res) => load_floorplan(
            &a.plan,
            ColorRule::DEFAULT_WALL,
            ColorRule::DEFAULT_WINDOW,
            res,
            origin.unwrap_or([0.0, 0.0]),
        ),
        None if origin.is_some() => Err(CompassError::InvalidConfig("--origin requires --resolution".into())),
        None => load_floorplan_with_sidecar(&a.plan),
    }
}

fn cmd_build_db(ctx: &Ctx, a: BuildDbArgs) -> Result<()> {
    let rc = ctx.cfg.raycast(&a.raycast)?;
    let raster = load_plan(&a.plan)?;
    let t0 = Instant::now();
    let db = build_database(&raster, a.grid_step, a.yaw_anchor_deg.to_radians(), &rc, &Clearance(a.clearance))?;
    let dt = t0.elapsed().as_secs_f64();
    let path = ctx.out_path(&a.out)?;
    db.save(&path)?;
    println!("{} candidates in {:.2} s ({} raster probes) -> {}", db.len(), dt, db.probes, path.display());
    if let Some(j) = &a.json {
        let text = serde_json::to_string_pretty(&db.to_json()).expect("json export serializes");
        ctx.write(j, &text)?;
    }
    Ok(())
}

fn cmd_describe(ctx: &Ctx, a: DescribeArgs) -> Result<()> {
    let rc = ctx.cfg.raycast(&a.raycast)?;
    let raster = load_plan(&a.plan)?;
    let pose = Pose2D::new(a.x, a.y, a.yaw_deg.to_radians());
    let d = compute_descriptor(&raster, pose, &rc)?;
    let path = ctx.out_path(&a.out)?;
    Database::single(d.clone(), pose, rc).save(&path)?;
    let stats = DescriptorStats::compute(&d, rc.r_max);
    print!("{}", stats.summary());
    let header = tool_header(
        "describe",
        &json!({ "plan": a.plan, "pose": [a.x, a.y, a.yaw_deg], "raycast": rc }),
    );
    if let Some(p) = &a.csv {
        ctx.write(p, &descriptor_csv(&header, &d))?;
    }
    if let Some(p) = &a.svg {
        let title = format!("descriptor at ({:.2}, {:.2}) heading {:.1} deg", a.x, a.y, a.yaw_deg);
        ctx.write(p, &svg::descriptor_svg(&d, &title))?;
    }
    Ok(())
}

fn load_query(path: &Path) -> Result<RadialDescriptor> {
    let q = Database::load(path)?;
    q.entries
        .into_iter()
        .next()
        .map(|e| e.descriptor)
        .ok_or_else(|| CompassError::Format(format!("{} holds no descriptor", path.display())))
}

fn cmd_match(ctx: &Ctx, a: MatchArgs) -> Result<()> {
    let mc = ctx.cfg.matching(&a.options)?;
    let query = load_query(&a.query)?;
    let db = Database::load(&a.db)?;
    let t0 = Instant::now();
    let results = match_query(&query, &db, &mc)?;
    let dt = t0.elapsed().as_secs_f64();
    let header = tool_header(
        "match",
        &json!({ "query": a.query, "db": a.db, "candidates": db.len(), "matching": mc }),
    );
    ctx.write(&a.out, &ranking_csv(&header, &results))?;
    let best = &results[0];
    println!(
        "best: candidate {} at ({:.3}, {:.3}) yaw {:.2} deg score {:.4} ({} candidates in {:.3} s)",
        best.candidate_index,
        best.position[0],
        best.position[1],
        best.yaw_estimate.to_degrees(),
        best.score,
        db.len(),
        dt
    );
    let cand = &db.entries[best.candidate_index].descriptor;
    if a.curve.is_some() || a.curve_svg.is_some() {
        let curve = correlation_curve(&query, cand, &mc)?;
        let peak = CorrelationPeak::from_curve(&curve, db.grid.yaw_anchor, 10);
        println!("{}", peak.summary());
        if let Some(p) = &a.curve {
            ctx.write(p, &correlation_curve_csv(&header, &curve, db.grid.yaw_anchor))?;
        }
        if let Some(p) = &a.curve_svg {
            let title = format!("correlation with candidate {}", best.candidate_index);
            ctx.write(p, &svg::curve_svg(&curve, &peak, &title))?;
        }
    }
    if a.agreement.is_some() || a.agreement_svg.is_some() {
        let rep = agreement_report(&query, cand, best.best_shift as i64)?;
        println!("{}", rep.summary());
        if let Some(p) = &a.agreement {
            ctx.write(p, &rep.to_csv(&header))?;
        }
        if let Some(p) = &a.agreement_svg {
            ctx.write(p, &svg::agreement_svg(&rep, "camera vs map hit type"))?;
        }
    }
    Ok(())
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).map_err(|e| CompassError::Io { path: path.into(), source: e })?;
    image::load_from_memory(&bytes).map_err(|e| CompassError::Decode { path: path.into(), message: e.to_string() })
}

fn cmd_detect_windows(ctx: &Ctx, a: DetectArgs) -> Result<()> {
    let dc = ctx.cfg.detector;
    let img = open_image(&a.image)?;
    let (gray, color) = (img.to_luma8(), img.to_rgb8());
    let rig = a.rig.as_deref().map(CameraRig::load).transpose()?;
    let camera = match &rig {
        Some(r) => Some(r.camera(&a.camera_id)?.model),
        None => None,
    };
    let out = match &a.segments {
        Some(p) => {
            let segs = read_segments_csv(p)?;
            detect_windows_from_segments(&gray, segs, Some(&color), camera.as_ref(), &a.camera_id, &dc)
        }
        None => detect_windows(&gray, Some(&color), camera.as_ref(), &a.camera_id, &dc),
    };
    let header = tool_header(
        "detect-windows",
        &json!({ "image": a.image, "camera_id": a.camera_id, "rig": a.rig, "segments": a.segments, "detector": dc }),
    );
    let mut buf = Vec::new();
    write_detections_csv(&mut buf, &header, &out.detections)?;
    ctx.write(&a.out, &String::from_utf8(buf).expect("csv is utf-8"))?;
    println!(
        "{} segments, band rows {}-{}, {} clusters, {} windows",
        out.segments.len(),
        out.band.y_top,
        out.band.y_bot,
        out.clusters.len(),
        out.detections.len()
    );
    if let Some(p) = &a.svg {
        let text = svg::detection_overlay_svg([gray.width(), gray.height()], &out.segments, Some(out.band), &out.detections);
        ctx.write(p, &text)?;
    }
    if let Some(p) = &a.segments_out {
        let mut buf = Vec::new();
        write_segments_csv(&mut buf, &header, &out.segments)?;
        ctx.write(p, &String::from_utf8(buf).expect("csv is utf-8"))?;
    }
    Ok(())
}

fn cmd_visual_descriptor(ctx: &Ctx, a: VisualArgs) -> Result<()> {
    let rig = CameraRig::load(&a.rig)?;
    let mut dets = Vec::new();
    for p in &a.detections {
        dets.extend(read_detections_csv(p)?);
    }
    let d = build_visual_descriptor(&rig, &dets, a.n_bins)?;
    let rc = compass_core::raycast::RaycastConfig { n_bins: a.n_bins, ..ctx.cfg.raycast };
    let path = ctx.out_path(&a.out)?;
    Database::single(d.clone(), Pose2D::new(0.0, 0.0, 0.0), rc).save(&path)?;
    let stats = DescriptorStats::compute(&d, rc.r_max);
    println!("{} detections -> {} window bins of {}", dets.len(), stats.window_bins, stats.n_bins);
    let header = tool_header(
        "visual-descriptor",
        &json!({ "rig": a.rig, "detections": a.detections, "n_bins": a.n_bins }),
    );
    if let Some(p) = &a.csv {
        ctx.write(p, &descriptor_csv(&header, &d))?;
    }
    if let Some(p) = &a.svg {
        ctx.write(p, &svg::descriptor_svg(&d, "visual descriptor"))?;
    }
    Ok(())
}

fn cmd_attitude(ctx: &Ctx, a: AttitudeArgs) -> Result<()> {
    let ac = ctx.cfg.attitude(a.seed, a.tolerance_deg, a.iterations)?;
    let rig = CameraRig::load(&a.rig)?;
    let mut per_camera: Vec<Vec<LineSegment>> = vec![Vec::new(); rig.cameras.len()];
    let index = |id: &str| {
        rig.cameras
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| CompassError::InvalidConfig(format!("rig has no camera '{id}'")))
    };
    for (id, p) in &a.segments {
        per_camera[index(id)?].extend(read_segments_csv(p)?);
    }
    for (id, p) in &a.image {
        let gray = open_image(p)?.to_luma8();
        per_camera[index(id)?].extend(detect_segments(&gray, &ctx.cfg.detector.segments));
    }
    let res = estimate_attitude_rig(&rig, &per_camera, &ac)?;
    let header = tool_header(
        "attitude",
        &json!({ "rig": a.rig, "segments": a.segments, "images": a.image, "attitude": ac }),
    );
    let mut out = String::new();
    for line in header.lines() {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str("source,kind,index,roll_deg,pitch_deg,x,y,z,inliers\n");
    let est_row = |src: &str, e: &compass_core::attitude::AttitudeEstimate| {
        format!(
            "{src},attitude,0,{:.6},{:.6},{:.9},{:.9},{:.9},{}\n",
            e.roll.to_degrees(),
            e.pitch.to_degrees(),
            e.gravity[0],
            e.gravity[1],
            e.gravity[2],
            e.inlier_count
        )
    };
    out.push_str(&est_row("fused", &res.fused));
    for (cam, r) in rig.cameras.iter().zip(&res.cameras) {
        match r {
            Ok(c) => {
                out.push_str(&est_row(&c.camera_id, &c.estimate));
                for (k, vp) in c.vanishing_points.iter().enumerate() {
                    let kind = if k == c.vertical { "vertical_vp" } else { "vp" };
                    let [x, y, z] = vp.direction;
                    out.push_str(&format!("{},{kind},{k},,,{x:.9},{y:.9},{z:.9},{}\n", c.camera_id, vp.inlier_count()));
                }
            }
            Err(e) => out.push_str(&format!("# camera {}: {e}\n", cam.id)),
        }
    }
    ctx.write(&a.out, &out)?;
    println!(
        "roll {:.3} deg, pitch {:.3} deg ({} inliers{})",
        res.fused.roll.to_degrees(),
        res.fused.pitch.to_degrees(),
        res.fused.inlier_count,
        if res.fused.single_source { ", single camera" } else { "" }
    );
    if let Some(p) = &a.svg {
        for (k, r) in res.cameras.iter().enumerate() {
            if let Ok(c) = r {
                let text = sphere_for(&rig, k, c, &per_camera[k]);
                ctx.write(&suffixed(p, &c.camera_id), &text)?;
            }
        }
    }
    Ok(())
}

fn sphere_for(rig: &CameraRig, k: usize, c: &CameraAttitude, segs: &[LineSegment]) -> String {
    let model = &rig.cameras[k].model;
    let circles: Vec<_> = c
        .circle_segments
        .iter()
        .filter_map(|&i| segment_to_great_circle(model, &segs[i]).ok())
        .collect();
    let title = format!(
        "{}: roll {:.2} deg, pitch {:.2} deg",
        c.camera_id,
        c.estimate.roll.to_degrees(),
        c.estimate.pitch.to_degrees()
    );
    svg::sphere_svg(&circles, &c.vanishing_points, Some(c.vertical), &title)
}

fn suffixed(p: &Path, tag: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = p.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    p.with_file_name(format!("{stem}_{tag}{ext}"))
}

fn cmd_generate_plan(ctx: &Ctx, a: GeneratePlanArgs) -> Result<()> {
    let spec = ctx.cfg.plan_spec(&a.spec)?;
    let raster = generate_plan(&spec, a.seed)?;
    let path = ctx.out_path(&a.out)?;
    raster.save_png(&path)?;
    println!(
        "{} x {} px plan at {} m/pixel -> {}",
        raster.width(),
        raster.height(),
        raster.resolution(),
        path.display()
    );
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let rc = ctx.cfg.raycast(&a.raycast)?;
    let mc = ctx.cfg.matching(&a.matching)?;
    let mut ec = ctx.cfg.eval;
    ec.noise = ctx.cfg.noise;
    if let Some(t) = a.trials {
        ec.trials = t;
    }
    if let Some(s) = a.seed {
        ec.seed = s;
    }
    if let Some(v) = a.dropout {
        ec.noise.dropout = v;
    }
    if let Some(v) = a.jitter_deg {
        ec.noise.jitter_deg = v;
    }
    if let Some(v) = a.spurious_rate {
        ec.noise.spurious_rate = v;
    }
    if let Some(v) = a.dilation_bins {
        ec.noise.dilation_bins = v;
    }
    if a.all_channels {
        ec.mode = ObservationMode::AllChannels;
    }
    if a.uniform_yaw {
        ec.bin_aligned_yaw = false;
    }
    ec.noise.validate()?;
    let (raster, plan_echo) = match &a.plan {
        Some(p) => (load_floorplan_with_sidecar(p)?, json!({ "plan": p })),
        None => {
            let spec = ctx.cfg.plan_spec(&a.spec)?;
            (generate_plan(&spec, a.plan_seed)?, json!({ "plan_spec": spec, "plan_seed": a.plan_seed }))
        }
    };
    let t0 = Instant::now();
    let db = build_database(&raster, a.grid_step, 0.0, &rc, &Clearance(a.clearance))?;
    ctx.info(&format!("{} candidates built in {:.2} s", db.len(), t0.elapsed().as_secs_f64()));
    let report = run_localization_eval(&raster, &db, &mc, &ec)?;
    let header = tool_header(
        "eval",
        &json!({
            "source": plan_echo,
            "grid_step": a.grid_step,
            "clearance": a.clearance,
            "raycast": rc,
            "matching": mc,
            "eval": ec,
        }),
    );
    let mut text = report.to_csv(&header);
    for line in report.summary_text().lines() {
        text.push_str(&format!("# {line}\n"));
    }
    ctx.write(&a.out, &text)?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(report.summary_text().as_bytes());
    Ok(())
}

