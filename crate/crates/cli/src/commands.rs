//! Subcommand bodies. Every command reads and validates all inputs and
//! computes its results before the first output file is created.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use stereo_xct::detect2d::{threshold_map, tile_offsets, BaselineConfig, PixelClassifier, TileSpec};
use stereo_xct::eval::{match_points, position_error_report};
use stereo_xct::geometry::{
    decompose_essential, epipolar_residual, estimate_fundamental, refine_pose, resolve_translation_scale, PoseDelta,
    RefineConfig,
};
use stereo_xct::io::{read_json, read_projection, read_projection_raw, read_volume, write_json, write_projection, write_text, write_volume};
use stereo_xct::map3d::{coincidence_localize, extract_points as component_points, feature_points, merge_points, PointExtraction, VolumeClassifier};
use stereo_xct::nn::{loss_history_csv, TrainConfig};
use stereo_xct::phantom::{
    build_2d_training_set, build_3d_training_set, generate_phantom, Axis, Dataset2dConfig, Dataset3dConfig, PhantomSpec,
    RandomPhantomConfig, SteppedPrism, TrainingPair, VolumePair,
};
use stereo_xct::pipeline::{self, run_pipeline, DetectorConfig, PipelineConfig, TilingConfig};
use stereo_xct::reconstruct::{single_view_backproject, stereo_backproject, StereoConfig};
use stereo_xct::{ConeBeamGeometry, Error, PointMatchSet, PointSet3D, VolumeSpec};

use crate::manifest::{self, Manifest};
use crate::{
    BackprojectArgs, CalibrateArgs, DetectArgs, EvaluateArgs, ExtractArgs, Gen2dArgs, Gen3dArgs, GenPhantomArgs, LocalizeArgs,
    PipelineArgs, RefinePoseArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, Error>;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such file", path.display())))
    }
}

fn config_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

/// The geometry file, or the desk geometry.
fn base_geometry(path: Option<&Path>) -> Result<ConeBeamGeometry> {
    let g = match path {
        Some(p) => read_json::<ConeBeamGeometry>(p)?,
        None => PipelineConfig::default().geometry,
    };
    g.validate()?;
    Ok(g)
}

fn view_pair(base: &ConeBeamGeometry, views: &[f64]) -> (ConeBeamGeometry, ConeBeamGeometry) {
    (base.at_angle(views[0]), base.at_angle(views[1]))
}

fn grid(n: usize, pitch: f64) -> Result<VolumeSpec> {
    Ok(VolumeSpec::centered([n; 3], pitch)?)
}

pub fn gen_phantom(a: &GenPhantomArgs, argv: &[String]) -> Result<()> {
    let grid = grid(a.grid, a.pitch)?;
    let (att, edges, spec, reference) = match (a.kind.as_str(), &a.spec) {
        ("stepped", spec) => {
            let s: SteppedPrism = match spec {
                Some(p) => read_json(p)?,
                None => SteppedPrism { rng_seed: a.seed, ..SteppedPrism::default() },
            };
            let ph = s.build(&grid)?;
            (ph.attenuation, ph.edges, config_value(&s), Some(ph.reference))
        }
        ("random", spec) => {
            let s: PhantomSpec = match spec {
                Some(p) => read_json(p)?,
                None => PhantomSpec::random(a.seed, &RandomPhantomConfig::default()),
            };
            let (att, edges) = generate_phantom(&s, &grid)?;
            (att, edges, config_value(&s), None)
        }
        (other, _) => return Err(invalid(format!("unknown phantom kind `{other}` (random | stepped)"))),
    };

    create_dir(&a.out_dir)?;
    let mut m = Manifest::new("gen-phantom", argv, json!({ "phantom": spec, "grid": grid }), vec![a.seed]);
    let att_path = a.out_dir.join("attenuation.raw");
    let edge_path = a.out_dir.join("edges.raw");
    write_volume(&att_path, &att)?;
    write_volume(&edge_path, &edges)?;
    write_json(&a.out_dir.join("phantom.json"), &spec)?;
    m.outputs.extend([att_path, edge_path, a.out_dir.join("phantom.json")]);
    if let Some(r) = reference {
        let p = a.out_dir.join("reference.json");
        write_json(&p, &r)?;
        m.outputs.push(p);
    }
    m.write(&manifest::in_dir(&a.out_dir))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord2d {
    source: String,
    offset: (usize, usize),
    input: PathBuf,
    target: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord3d {
    angle_deg: f64,
    input: PathBuf,
    target: PathBuf,
}

pub fn gen_2d_dataset(a: &Gen2dArgs, argv: &[String]) -> Result<()> {
    let cfg = Dataset2dConfig {
        grid: grid(a.grid, a.pitch)?,
        geometry: ConeBeamGeometry::new(290.0, 923.0, a.detector, a.detector, a.pixel_pitch, 0.0)?,
        views_per_phantom: a.views,
        block: a.block,
        blocks_per_side: a.blocks_per_side,
    };
    if a.phantoms == 0 || a.views == 0 {
        return Err(invalid("need at least one phantom and one view"));
    }
    let random = RandomPhantomConfig::default();
    let seeds: Vec<u64> = (0..a.phantoms as u64).map(|i| a.seed.wrapping_add(i)).collect();
    let specs: Vec<PhantomSpec> = seeds.iter().map(|s| PhantomSpec::random(*s, &random)).collect();
    let pairs = build_2d_training_set(&specs, &cfg)?;

    let dir = a.out_dir.join("pairs");
    create_dir(&dir)?;
    let mut index = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let input = PathBuf::from(format!("pairs/{i:05}_input.raw"));
        let target = PathBuf::from(format!("pairs/{i:05}_target.raw"));
        write_projection(&a.out_dir.join(&input), &p.input)?;
        write_projection(&a.out_dir.join(&target), &p.target)?;
        index.push(PairRecord2d { source: p.source.clone(), offset: p.offset, input, target });
    }
    write_json(&a.out_dir.join("index.json"), &index)?;
    let mut m = Manifest::new("gen-2d-dataset", argv, json!({ "dataset": cfg, "random": random, "phantoms": a.phantoms }), seeds);
    m.outputs.push(a.out_dir.join("index.json"));
    m.write(&manifest::in_dir(&a.out_dir))?;
    println!("{} pairs", pairs.len());
    Ok(())
}

pub fn gen_3d_dataset(a: &Gen3dArgs, argv: &[String]) -> Result<()> {
    let edges = read_volume(&a.edges)?;
    let base = base_geometry(a.geometry.as_deref())?;
    if a.count == 0 {
        return Err(invalid("--count must be at least 1"));
    }
    let cfg = Dataset3dConfig {
        geometry: base,
        view_angles_deg: (a.views[0], a.views[1]),
        axis: Axis::longest(lit_extent(&edges)),
        stereo: StereoConfig { ramp_filter: a.ramp_filter, ..Default::default() },
    };
    let angles: Vec<f64> = (0..a.count).map(|i| i as f64 * a.step_deg).collect();
    let pairs = build_3d_training_set(&edges, &angles, &cfg)?;

    let dir = a.out_dir.join("pairs");
    create_dir(&dir)?;
    let mut index = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let input = PathBuf::from(format!("pairs/{i:05}_input.raw"));
        let target = PathBuf::from(format!("pairs/{i:05}_target.raw"));
        write_volume(&a.out_dir.join(&input), &p.input)?;
        write_volume(&a.out_dir.join(&target), &p.target)?;
        index.push(PairRecord3d { angle_deg: p.angle_deg, input, target });
    }
    write_json(&a.out_dir.join("index.json"), &index)?;
    let mut m = Manifest::new("gen-3d-dataset", argv, json!({ "dataset": cfg, "angles": angles }), vec![]);
    m.outputs.push(a.out_dir.join("index.json"));
    m.write(&manifest::in_dir(&a.out_dir))?;
    println!("{} pairs", pairs.len());
    Ok(())
}

/// Bounding-box size of the lit voxels (voxels per axis).
fn lit_extent(v: &stereo_xct::Volume) -> [f64; 3] {
    let (mut lo, mut hi) = ([usize::MAX; 3], [0usize; 3]);
    for (idx, x) in v.data().iter().enumerate() {
        if *x > 0.5 {
            let (i, j, k) = v.spec().unindex(idx);
            for (a, c) in [i, j, k].into_iter().enumerate() {
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c);
            }
        }
    }
    std::array::from_fn(|a| if lo[a] == usize::MAX { 0.0 } else { (hi[a] - lo[a] + 1) as f64 })
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let cfg = TrainConfig { lr: a.lr, epochs: a.epochs, batch: a.batch, seed: a.seed, pos_weight: a.pos_weight, ..Default::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn write_training_outputs(out: &Path, history: &[f64], m: &mut Manifest) -> Result<()> {
    let mut loss = out.as_os_str().to_owned();
    loss.push(".loss.csv");
    let loss = PathBuf::from(loss);
    write_text(&loss, &loss_history_csv(history))?;
    m.outputs.extend([out.to_path_buf(), loss]);
    m.write(&manifest::beside(out))?;
    Ok(())
}

pub fn train_2d(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let cfg = train_config(a)?;
    let index: Vec<PairRecord2d> = read_json(&a.data.join("index.json"))?;
    let pairs = index
        .into_iter()
        .map(|r| {
            Ok(TrainingPair {
                input: read_projection_raw(&a.data.join(&r.input))?,
                target: read_projection_raw(&a.data.join(&r.target))?,
                source: r.source,
                offset: r.offset,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut clf = PixelClassifier::new(a.depth, a.base, a.seed)?;
    let history = clf.train(&pairs, &cfg)?;
    clf.save(&a.out)?;
    let mut m = Manifest::new("train-2d", argv, json!({ "train": cfg, "depth": a.depth, "base": a.base, "pairs": pairs.len() }), vec![a.seed]);
    write_training_outputs(&a.out, &history, &mut m)?;
    println!("final loss {:.6}", history.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

pub fn train_3d(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let cfg = train_config(a)?;
    let index: Vec<PairRecord3d> = read_json(&a.data.join("index.json"))?;
    let pairs = index
        .into_iter()
        .map(|r| {
            Ok(VolumePair {
                angle_deg: r.angle_deg,
                input: read_volume(&a.data.join(&r.input))?,
                target: read_volume(&a.data.join(&r.target))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut clf = VolumeClassifier::new(a.depth, a.base, a.seed)?;
    let history = clf.train(&pairs, &cfg)?;
    clf.save(&a.out)?;
    let mut m = Manifest::new("train-3d", argv, json!({ "train": cfg, "depth": a.depth, "base": a.base, "pairs": pairs.len() }), vec![a.seed]);
    write_training_outputs(&a.out, &history, &mut m)?;
    println!("final loss {:.6}", history.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

pub fn detect(a: &DetectArgs, argv: &[String]) -> Result<()> {
    let proj = read_projection(&a.input)?;
    let detector = match &a.model {
        Some(p) => {
            require_file(p)?;
            DetectorConfig::Model { path: p.clone() }
        }
        None => DetectorConfig::Baseline(BaselineConfig { sigma: a.sigma, percentile: a.percentile, scale: None }),
    };
    let tiling = match (a.block, a.grid) {
        (Some(block), Some(n)) => {
            let rows = tile_offsets(proj.rows(), block, TileSpec::PerSide(n))?;
            let cols = tile_offsets(proj.cols(), block, TileSpec::PerSide(n))?;
            eprintln!("{} blocks of {block}x{block}", rows.len() * cols.len());
            Some(TilingConfig { block, grid: TileSpec::PerSide(n) })
        }
        (None, None) => None,
        _ => return Err(invalid("--block and --grid go together")),
    };
    if let Some(t) = a.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("--threshold {t} outside [0, 1]")));
        }
    }
    let cfg = PipelineConfig { detector, tiling, ..PipelineConfig::default() };
    let model = match &cfg.detector {
        DetectorConfig::Model { path } => Some(PixelClassifier::load(path)?),
        DetectorConfig::Baseline(_) => None,
    };
    let map = pipeline::detect(&proj, &cfg, model.as_ref())?;
    let map = match a.threshold {
        Some(t) => threshold_map(&map, t)?,
        None => map,
    };

    write_projection(&a.out, &map)?;
    let mut m = Manifest::new("detect", argv, json!({ "detector": cfg.detector, "tiling": cfg.tiling, "threshold": a.threshold }), vec![]);
    m.outputs.push(a.out.clone());
    m.write(&manifest::beside(&a.out))?;
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs, argv: &[String]) -> Result<()> {
    let matches: PointMatchSet = read_json(&a.matches)?;
    let base = base_geometry(a.geometry.as_deref())?;
    let (g1, g2) = view_pair(&base, &a.views);
    let f = estimate_fundamental(&matches)?;
    let pose = decompose_essential(&f, &g1.intrinsics(), &g2.intrinsics(), &matches)?;
    let scaled = resolve_translation_scale(&pose, g1.sod)?;
    let worst = matches.iter().map(|m| epipolar_residual(&f, m)).fold(0.0, f64::max);
    let t = scaled.translation();
    let out = json!({
        "fundamental": rows(&f),
        "rotation": rows(scaled.rotation()),
        "translation_mm": [t[0], t[1], t[2]],
        "rotation_angle_deg": scaled.rotation_angle_deg(),
        "max_epipolar_residual_px": worst,
        "matches": matches.len(),
    });

    write_json(&a.out, &out)?;
    let mut m = Manifest::new("calibrate", argv, json!({ "geometry": base, "views": a.views }), vec![]);
    m.outputs.push(a.out.clone());
    m.write(&manifest::beside(&a.out))?;
    println!("relative rotation {:.4} deg", scaled.rotation_angle_deg());
    Ok(())
}

fn rows(m: &stereo_xct::Mat3) -> Vec<[f64; 3]> {
    m.row_iter().map(|r| [r[0], r[1], r[2]]).collect()
}

pub fn refine(a: &RefinePoseArgs, argv: &[String]) -> Result<()> {
    let points: PointSet3D = read_json(&a.points)?;
    let left = read_projection(&a.left)?;
    let right = read_projection(&a.right)?;
    let base = base_geometry(a.geometry.as_deref())?;
    let (g1, g2) = view_pair(&base, &a.views);
    let cams = [g1.projection_matrix()?, g2.projection_matrix()?];
    let cfg = RefineConfig { angle_bound_deg: a.angle_bound, shift_bound_mm: a.shift_bound, ..RefineConfig::default() };
    let res = refine_pose(&points, [&left, &right], [&cams[0], &cams[1]], PoseDelta::default(), &cfg)?;

    write_json(&a.out, &res)?;
    let mut m = Manifest::new("refine-pose", argv, json!({ "geometry": base, "views": a.views, "refine": cfg }), vec![]);
    m.outputs.push(a.out.clone());
    m.write(&manifest::beside(&a.out))?;
    println!("residual {:.3} px (initial {:.3})", res.residual_px, res.initial_residual_px);
    Ok(())
}

pub fn backproject(a: &BackprojectArgs, argv: &[String]) -> Result<()> {
    let left = read_projection(&a.left)?;
    let right = read_projection(&a.right)?;
    let base = base_geometry(a.geometry.as_deref())?;
    let (g1, g2) = view_pair(&base, &a.views);
    let target = grid(a.grid, a.pitch)?;
    let stereo = StereoConfig { ramp_filter: a.ramp_filter, ..Default::default() };
    let vl = single_view_backproject(&left, &g1, &target, &stereo)?;
    let vr = single_view_backproject(&right, &g2, &target, &stereo)?;
    let sum = stereo_backproject(&left, &right, &g1, &g2, &target, &stereo)?;

    create_dir(&a.out_dir)?;
    let mut m = Manifest::new("backproject", argv, json!({ "geometry": base, "views": a.views, "grid": target, "stereo": stereo }), vec![]);
    for (name, v) in [("left.raw", &vl), ("right.raw", &vr), ("sum.raw", &sum)] {
        let p = a.out_dir.join(name);
        write_volume(&p, v)?;
        m.outputs.push(p);
    }
    m.write(&manifest::in_dir(&a.out_dir))?;
    Ok(())
}

pub fn localize(a: &LocalizeArgs, argv: &[String]) -> Result<()> {
    let (vol, config) = match (&a.left, &a.right, &a.model, &a.input) {
        (Some(l), Some(r), None, None) => {
            let (l, r) = (read_volume(l)?, read_volume(r)?);
            (coincidence_localize(&l, &r, a.tau)?, json!({ "kind": "coincidence", "tau": a.tau }))
        }
        (None, None, Some(model), Some(input)) => {
            if !(0.0..=1.0).contains(&a.threshold) {
                return Err(invalid(format!("--threshold {} outside [0, 1]", a.threshold)));
            }
            let bp = read_volume(input)?;
            let clf = VolumeClassifier::load(model)?;
            let t = a.threshold;
            (clf.localize(&bp)?.map(|v| if v >= t { 1.0 } else { 0.0 }), json!({ "kind": "model", "threshold": t }))
        }
        _ => return Err(invalid("give either --left/--right or --model/--input")),
    };

    write_volume(&a.out, &vol)?;
    let mut m = Manifest::new("localize", argv, config, vec![]);
    m.outputs.push(a.out.clone());
    m.write(&manifest::beside(&a.out))?;
    println!("{} feature voxels", vol.count_nonzero());
    Ok(())
}

pub fn extract_points(a: &ExtractArgs, argv: &[String]) -> Result<()> {
    let vol = read_volume(&a.input)?;
    if a.merge_radius < 0.0 {
        return Err(invalid("--merge-radius must be non-negative"));
    }
    let points = if a.corners {
        let cfg = PointExtraction { min_cluster: a.min_cluster, corners: true, compact_extent: 0, prune_len: a.prune_len, merge_radius: a.merge_radius };
        feature_points(&vol, &cfg)
    } else {
        let p = component_points(&vol, a.min_cluster);
        if a.merge_radius > 0.0 { merge_points(&p, vol.spec(), a.merge_radius) } else { p }
    };

    write_json(&a.out, &points)?;
    let mut m = Manifest::new(
        "extract-points",
        argv,
        json!({ "min_cluster": a.min_cluster, "corners": a.corners, "prune_len": a.prune_len, "merge_radius": a.merge_radius }),
        vec![],
    );
    m.outputs.push(a.out.clone());
    m.write(&manifest::beside(&a.out))?;
    println!("{} points", points.len());
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, argv: &[String]) -> Result<()> {
    let est: PointSet3D = read_json(&a.estimated)?;
    let reference: PointSet3D = read_json(&a.reference)?;
    if !(a.pitch > 0.0) {
        return Err(invalid("--pitch must be positive"));
    }
    let matches = match_points(&est, &reference, a.max_dist)?;
    let report = position_error_report(&matches, a.pitch);

    create_dir(&a.out_dir)?;
    write_text(&a.out_dir.join("report.csv"), &report.to_csv())?;
    write_json(&a.out_dir.join("summary.json"), &report.summary_json())?;
    let mut m = Manifest::new("evaluate", argv, json!({ "max_dist": a.max_dist, "pitch": a.pitch }), vec![]);
    m.outputs.extend([a.out_dir.join("report.csv"), a.out_dir.join("summary.json")]);
    m.write(&manifest::in_dir(&a.out_dir))?;
    print_summary(&report);
    Ok(())
}

fn print_summary(r: &stereo_xct::eval::PositionReport) {
    println!(
        "matched {}/{}; error voxels median {:.3} max {:.3}; mm median {:.3} max {:.3}",
        r.rows.len() - r.voxels.n_unmatched,
        r.rows.len(),
        r.voxels.median,
        r.voxels.max,
        r.mm.median,
        r.mm.max
    );
}

pub fn pipeline(a: &PipelineArgs, argv: &[String]) -> Result<()> {
    let cfg: PipelineConfig = read_json(&a.config)?;
    cfg.validate()?;
    let out = run_pipeline(&cfg)?;

    create_dir(&a.out_dir)?;
    let d = &a.out_dir;
    let mut m = Manifest::new("pipeline", argv, config_value(&cfg), vec![cfg.phantom.rng_seed]);
    let files: Vec<PathBuf> = ["points.json", "reference.json", "report.csv", "summary.json"].iter().map(|f| d.join(f)).collect();
    write_json(&files[0], &out.points)?;
    write_json(&files[1], &out.phantom.reference)?;
    write_text(&files[2], &out.report.to_csv())?;
    write_json(&files[3], &out.report.summary_json())?;
    m.outputs.extend(files);
    for (i, side) in ["left", "right"].iter().enumerate() {
        for (name, img) in [("projection", &out.projections[i]), ("map", &out.maps[i]), ("binary", &out.binary_maps[i])] {
            let p = d.join(format!("{name}_{side}.pgm"));
            write_projection(&p, img)?;
            m.outputs.push(p);
        }
    }
    let loc = d.join("localized.raw");
    write_volume(&loc, &out.localized)?;
    m.outputs.push(loc);
    m.write(&manifest::in_dir(d))?;
    print_summary(&out.report);
    Ok(())
}
