use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use geolayout::io::{
    colorize, read_json, read_layout, read_params, read_seg, resample_params, write_atomic, write_depth, write_json,
    write_layout, write_params, write_ply, write_seg,
};
use geolayout::layout::extract_corners_with;
use geolayout::metrics::LayoutView;
use geolayout::synth::{generate_cuboid_with, generate_noncuboid_with};
use geolayout::{
    aggregate, cluster_param_map, evaluate, fit_annotated, full_pipeline, layout_point_cloud, optimize_param_map,
    params_from_depth, render_scene, stitch_min_depth, CameraIntrinsics, Config, DatasetRecord, DepthFormat, DepthMap,
    Error, Instance, LayoutResult, MetricReport, Mode, ParamMap, Resample, Result, Supervision, SurfaceParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{Common, TrainMode};

fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common.out.as_path();
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    Ok(dir)
}

fn camera(common: &Common, config: &Config) -> Result<CameraIntrinsics> {
    let (w, h) = common.resolution.unwrap_or((config.camera.width, config.camera.height));
    CameraIntrinsics::centered(w, h, config.camera.hfov_deg)
}

fn read_record(dir: &Path, common: &Common) -> Result<DatasetRecord> {
    let rec = DatasetRecord::read(dir)?;
    match common.resolution {
        Some((w, h)) => rec.resampled(w, h),
        None => Ok(rec),
    }
}

fn print(value: serde_json::Value) {
    println!("{value}");
}

pub fn synth(common: &Common, config: &Config, count: u64, walls: Option<usize>) -> Result<()> {
    let out = out_dir(common)?;
    let cam = camera(common, config)?;
    let base = common.seed.unwrap_or(0);
    let format = DepthFormat::from(common.format);
    let results: Vec<(u64, Result<PathBuf>)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = base.wrapping_add(i);
            let scene = || -> Result<PathBuf> {
                let spec = match walls {
                    Some(n) => generate_noncuboid_with(seed, cam, n, &config.synth)?,
                    None => generate_cuboid_with(seed, cam, &config.synth)?,
                };
                let render = render_scene(&spec)?;
                let dir = out.join(format!("scene_{seed:06}"));
                DatasetRecord::from_scene(&spec, &render).write(&dir, format)?;
                write_json(&dir.join("scene.json"), &spec)?;
                write_params(&dir.join("params.glr"), &render.params)?;
                Ok(dir)
            };
            (seed, scene())
        })
        .collect();
    let mut written = Vec::new();
    let mut first_error = None;
    for (seed, r) in results {
        match r {
            Ok(dir) => written.push(dir.display().to_string()),
            Err(e) => {
                eprintln!("{}", json!({ "seed": seed, "error": e.kind(), "message": e.to_string() }));
                first_error.get_or_insert(e);
            }
        }
    }
    print(json!({ "records": written }));
    first_error.map_or(Ok(()), Err)
}

pub fn fit(common: &Common, config: &Config, record: &Path) -> Result<()> {
    let out = out_dir(common)?;
    let rec = read_record(record, common)?;
    let fits = fit_annotated(&rec.depth, &rec.annotations, &config.ransac)?;
    write_json(&out.join("fits.json"), &fits)?;
    print(json!({ "regions": fits.len(), "fits": out.join("fits.json") }));
    Ok(())
}

fn load_params(path: &Path, common: &Common) -> Result<ParamMap> {
    let pm = read_params(path)?;
    match common.resolution {
        Some((w, h)) => resample_params(&pm, w, h, Resample::Bilinear),
        None => Ok(pm),
    }
}

pub fn cluster(common: &Common, config: &Config, params: &Path) -> Result<()> {
    let out = out_dir(common)?;
    let pm = load_params(params, common)?;
    let set = cluster_param_map(&pm, &config.layout.cluster)?;
    write_json(&out.join("instances.json"), &set.instances)?;
    write_seg(&out.join("clustered_seg.png"), &set.seg)?;
    print(json!({ "instances": set.instances.len(), "unassigned": set.seg.sentinel_count() }));
    Ok(())
}

/// Instance files hold either cluster instances or bare surface parameters.
#[derive(Deserialize)]
#[serde(untagged)]
enum InstanceFile {
    Instances(Vec<Instance>),
    Params(Vec<SurfaceParams>),
}

fn load_instances(path: &Path) -> Result<Vec<SurfaceParams>> {
    Ok(match read_json::<InstanceFile>(path)? {
        InstanceFile::Instances(v) => v.into_iter().map(|i| i.params).collect(),
        InstanceFile::Params(v) => v,
    })
}

pub fn stitch(common: &Common, instances: &Path) -> Result<()> {
    let Some((w, h)) = common.resolution else {
        return Err(Error::InvalidArgument("stitch needs --resolution".into()));
    };
    let out = out_dir(common)?;
    let params = load_instances(instances)?;
    let (seg, depth) = stitch_min_depth(&params, w, h);
    let format = DepthFormat::from(common.format);
    write_seg(&out.join("seg.png"), &seg)?;
    write_depth(&out.join(format!("depth.{}", format.extension())), &depth, format)?;
    write_atomic(&out.join("seg_color.png"), &colorize(&seg).encode()?)?;
    print(
        json!({ "instances": params.len(), "valid_pixels": depth.valid_count(), "unassigned": seg.sentinel_count() }),
    );
    Ok(())
}

pub fn corners(common: &Common, config: &Config, instances: &Path, seg: &Path) -> Result<()> {
    let out = out_dir(common)?;
    let params = load_instances(instances)?;
    let seg = read_seg(seg)?;
    let set = extract_corners_with(&params, &seg, config.layout.junction_radius);
    write_json(&out.join("corners.json"), &set)?;
    print(json!({ "corners": set.corners.len(), "skipped": set.skipped.len() }));
    Ok(())
}

#[derive(Serialize)]
struct EvalEntry {
    pred: PathBuf,
    gt: PathBuf,
    #[serde(flatten)]
    report: MetricReport,
}

fn evaluate_pair(pred: &Path, gt: &Path) -> Result<MetricReport> {
    let layout = read_layout(pred)?;
    let mut rec = DatasetRecord::read(gt)?;
    if rec.dims() != layout.seg.dims() {
        let (w, h) = layout.seg.dims();
        rec = rec.resampled(w, h)?;
    }
    let p = LayoutView { seg: &layout.seg, depth: Some(&layout.depth), corners: &layout.meta.corners_2d };
    let g = LayoutView { seg: &rec.seg, depth: Some(&rec.layout_depth), corners: &rec.corners };
    evaluate(&p, &g, Some(&rec.cam))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn report_csv(entries: &[EvalEntry]) -> String {
    let mut s = String::from("pred,gt,e_pix,e_cor,e_3d_cor,rms,rel,log10,delta1,delta2,delta3\n");
    for e in entries {
        let d = e.report.depth.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.pred.display(),
            e.gt.display(),
            e.report.e_pix,
            e.report.e_cor,
            opt(e.report.e_3d_cor),
            opt(d.map(|d| d.rms)),
            opt(d.map(|d| d.rel)),
            opt(d.map(|d| d.log10)),
            opt(d.map(|d| d.delta1)),
            opt(d.map(|d| d.delta2)),
            opt(d.map(|d| d.delta3)),
        );
    }
    s
}

pub fn eval(common: &Common, pred: &[PathBuf], gt: &[PathBuf]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!("{} predictions but {} ground truths", pred.len(), gt.len())));
    }
    let out = out_dir(common)?;
    let reports: Vec<Result<MetricReport>> = pred.par_iter().zip(gt).map(|(p, g)| evaluate_pair(p, g)).collect();
    let mut entries = Vec::with_capacity(reports.len());
    for ((p, g), r) in pred.iter().zip(gt).zip(reports) {
        entries.push(EvalEntry { pred: p.clone(), gt: g.clone(), report: r? });
    }
    let all: Vec<MetricReport> = entries.iter().map(|e| e.report.clone()).collect();
    let summary = aggregate(&all);
    write_json(&out.join("report.json"), &json!({ "reports": entries, "aggregate": summary }))?;
    write_atomic(&out.join("report.csv"), report_csv(&entries).as_bytes())?;
    print(serde_json::to_value(&summary).expect("aggregate serializes"));
    Ok(())
}

fn write_layout_outputs(out: &Path, result: &LayoutResult, cam: Option<&CameraIntrinsics>) -> Result<()> {
    write_layout(out, result)?;
    write_atomic(&out.join("seg_color.png"), &colorize(&result.seg).encode()?)?;
    if let Some(cam) = cam {
        write_ply(&out.join("cloud.ply"), &layout_point_cloud(result, cam))?;
    }
    Ok(())
}

fn score_against(result: &LayoutResult, rec: &DatasetRecord) -> Result<MetricReport> {
    let p = LayoutView { seg: &result.seg, depth: Some(&result.depth), corners: &result.corners_2d };
    let g = LayoutView { seg: &rec.seg, depth: Some(&rec.layout_depth), corners: &rec.corners };
    evaluate(&p, &g, Some(&rec.cam))
}

pub fn train_toy(
    common: &Common,
    config: &Config,
    mode: TrainMode,
    steps: Option<usize>,
    lr: Option<f64>,
    init_noise: f64,
) -> Result<()> {
    if !(init_noise >= 0.0 && init_noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("--init-noise must be non-negative, got {init_noise}")));
    }
    let out = out_dir(common)?;
    let seed = common.seed.unwrap_or(0);
    let spec = generate_cuboid_with(seed, camera(common, config)?, &config.synth)?;
    let render = render_scene(&spec)?;
    let rec = DatasetRecord::from_scene(&spec, &render);

    let noise = Normal::new(0.0, init_noise).expect("finite non-negative deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = render.params.dims();
    let init = ParamMap::from_fn(w, h, |u, v| render.params.get(u, v).map(|c| c.map(|x| x + noise.sample(&mut rng))));
    let sup = Supervision { seg: &render.seg, params: Some(&render.params), depth: Some(&render.layout_depth) };
    let mode = match mode {
        TrainMode::TwoD => Mode::TwoD,
        TrainMode::ThreeD => Mode::ThreeD,
    };
    let steps = steps.unwrap_or(config.optimizer.steps);
    let lr = lr.unwrap_or(config.optimizer.lr);
    let (trained, trace) = optimize_param_map(&init, &sup, mode, &config.loss, steps, lr)?;

    let mut csv = String::from("step,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    write_atomic(&out.join("trace.csv"), csv.as_bytes())?;
    write_params(&out.join("params.glr"), &trained)?;
    write_params(&out.join("init_params.glr"), &init)?;

    let result = full_pipeline(&trained, Some(&rec.cam), &config.layout)?;
    write_layout_outputs(out, &result, Some(&rec.cam))?;
    let report = score_against(&result, &rec)?;
    write_json(&out.join("report.json"), &report)?;
    print(json!({
        "initial_loss": trace.first(),
        "final_loss": trace.last(),
        "instances": result.instances.len(),
        "e_pix": report.e_pix,
        "e_cor": report.e_cor,
    }));
    Ok(())
}

pub fn pipeline(
    common: &Common,
    config: &Config,
    params: Option<&Path>,
    record: Option<&Path>,
    observed: bool,
) -> Result<()> {
    let out = out_dir(common)?;
    let (pm, rec) = match (params, record) {
        (Some(p), _) => (load_params(p, common)?, None),
        (None, Some(r)) => {
            let rec = read_record(r, common)?;
            let depth: &DepthMap = if observed { &rec.depth } else { &rec.layout_depth };
            (params_from_depth(depth), Some(rec))
        }
        (None, None) => return Err(Error::InvalidArgument("pipeline needs --params or --record".into())),
    };
    let cam = rec.as_ref().map(|r| &r.cam);
    let result = full_pipeline(&pm, cam, &config.layout)?;
    write_layout_outputs(out, &result, cam)?;
    let mut summary = json!({
        "instances": result.instances.len(),
        "corners": result.corners_2d.len(),
        "fallback_pixels": result.fallback_pixels,
    });
    if let Some(rec) = &rec {
        let report = score_against(&result, rec)?;
        write_json(&out.join("report.json"), &report)?;
        summary["e_pix"] = json!(report.e_pix);
        summary["e_cor"] = json!(report.e_cor);
        summary["e_3d_cor"] = json!(report.e_3d_cor);
    }
    print(summary);
    Ok(())
}
