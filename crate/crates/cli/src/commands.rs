use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use volfuse::analysis::{depth_coded_map, dof_measure, fwhm_vs_depth, map_correlation, DofResult};
use volfuse::metrics::joint_score;
use volfuse::optimizer::{optimize_block_size, Optimized};
use volfuse::phantom::{generate_multifocus, FocalDepth, PhantomScene};
use volfuse::volume::{bscan_extract, map_project};
use volfuse::{fuse_volumes, Axis, BlockPlan, EvaluationReport, FusionConfig, MapImage, Volume};

use crate::args::{AnalyzeArgs, AnalyzeMode, FuseArgs, GenerateArgs, OptimizeArgs, ReproduceArgs};
use crate::manifest::{digests, RunManifest};
use crate::output::{
    as_stored, read_volume, write_curve, write_json, write_pgm, write_ppm, write_trace_csv, write_volume,
};
use crate::params::{resolve, AnalyzeParams, FuseParams, GenerateParams, OptimizeParams, ReproduceParams};

const DEFAULT_OUT: &str = "out";

/// Collects written files and finishes with the manifest.
struct Run {
    command: &'static str,
    dir: PathBuf,
    started: Instant,
    outputs: Vec<String>,
}

impl Run {
    fn start(command: &'static str, out: Option<&Path>) -> Result<Self> {
        let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { command, dir, started: Instant::now(), outputs: Vec::new() })
    }

    fn path(&mut self, name: impl Into<String>) -> PathBuf {
        let name = name.into();
        let p = self.dir.join(&name);
        self.outputs.push(name);
        p
    }

    fn finish(self, parameters: &impl Serialize, inputs: &[&Path], seed: Option<u64>) -> Result<()> {
        RunManifest {
            command: self.command.to_string(),
            parameters: serde_json::to_value(parameters)?,
            input_digests: digests(inputs.iter().copied())?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            duration_s: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        }
        .write(&self.dir)
    }
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<Volume>> {
    paths.iter().map(|p| read_volume(p)).collect()
}

fn require_inputs(inputs: &[PathBuf], min: usize) -> Result<()> {
    if inputs.len() < min {
        bail!("expected at least {min} input volume(s), got {}", inputs.len());
    }
    Ok(())
}

fn path_refs(paths: &[PathBuf]) -> Vec<&Path> {
    paths.iter().map(PathBuf::as_path).collect()
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let mut p: GenerateParams = resolve(args.common.config.as_deref(), "generate")?;
    if let Some(preset) = args.preset {
        p.preset = Some(preset.into());
        p.scene = None;
    }
    if let Some(scene) = args.scene {
        p.scene = Some(scene);
        p.preset = None;
    }
    if let Some(um) = args.foci {
        p.foci_um = Some(um);
        p.foci_index = None;
    }
    if let Some(idx) = args.foci_index {
        p.foci_index = Some(idx);
        p.foci_um = None;
    }

    let scene = match (&p.scene, p.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PhantomScene::from_json(&text).with_context(|| format!("invalid scene {}", path.display()))?
        }
        (None, Some(preset)) => preset.scene(),
        (None, None) => bail!("pass --preset or --scene"),
    };
    let foci = p.focal_depths(if p.scene.is_some() { None } else { p.preset })?;
    if p.foci_um.is_none() && p.foci_index.is_none() {
        p.foci_index = Some(foci.iter().filter_map(|f| if let FocalDepth::Index(k) = f { Some(*k) } else { None }).collect());
    }
    let mf = generate_multifocus(&scene, &foci, &p.beam)?;

    let mut run = Run::start("generate", args.common.out.as_deref())?;
    for (i, src) in mf.sources.iter().enumerate() {
        write_volume(&run.path(format!("sources_{i}.volf")), src)?;
    }
    write_volume(&run.path("truth.volf"), &mf.truth)?;
    write_json(&run.path("scene.json"), &scene)?;
    let inputs: Vec<&Path> = p.scene.iter().map(PathBuf::as_path).collect();
    run.finish(&p, &inputs, None)
}

pub fn fuse(args: FuseArgs) -> Result<()> {
    let mut p: FuseParams = resolve(args.common.config.as_deref(), "fuse")?;
    if !args.inputs.is_empty() {
        p.inputs = args.inputs;
    }
    if let Some(spec) = args.block {
        p.blocks = Some(BlockPlan::Shared(spec));
    }
    if let Some(w) = args.wavelet {
        p.wavelet = Some(w);
    }
    require_inputs(&p.inputs, 2)?;
    let config = p.fusion_config()?;
    let sources = read_all(&p.inputs)?;
    let out = fuse_volumes(&sources, &config)?;

    let mut run = Run::start("fuse", args.common.out.as_deref())?;
    write_volume(&run.path("fused.volf"), &out.fused)?;
    write_json(&run.path("mask.json"), &out.mask)?;
    write_json(&run.path("fusion_config.json"), &config)?;
    run.finish(&p, &path_refs(&p.inputs), None)
}

fn write_optimized(run: &mut Run, opt: &Optimized, fused: &Volume) -> Result<()> {
    write_json(&run.path("best_config.json"), &opt.config)?;
    write_volume(&run.path("fused.volf"), fused)?;
    write_json(&run.path("report.json"), &opt.report)?;
    write_trace_csv(&run.path("trace.csv"), &opt.trace)?;
    write_json(&run.path("trace.json"), &opt.trace)?;
    Ok(())
}

pub fn optimize(args: OptimizeArgs) -> Result<()> {
    let mut p: OptimizeParams = resolve(args.common.config.as_deref(), "optimize")?;
    if !args.inputs.is_empty() {
        p.inputs = args.inputs;
    }
    p.search.apply(&args.de);
    require_inputs(&p.inputs, 2)?;
    let sources = read_all(&p.inputs)?;
    let de = p.search.de_config(sources[0].dims())?;
    let opt = optimize_block_size(&sources, &p.search.weights, &de)?;
    let fused = fuse_volumes(&sources, &opt.config)?.fused;

    let mut run = Run::start("optimize", args.common.out.as_deref())?;
    write_optimized(&mut run, &opt, &fused)?;
    run.finish(&p, &path_refs(&p.inputs), Some(de.seed))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "volume".into())
}

#[derive(Serialize)]
struct DofEntry {
    input: String,
    #[serde(flatten)]
    dof: DofResult,
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mut p: AnalyzeParams = resolve(args.common.config.as_deref(), "analyze")?;
    if !args.inputs.is_empty() {
        p.inputs = args.inputs;
    }
    if let Some(m) = args.mode {
        p.mode = Some(m);
    }
    if let Some(a) = args.axis {
        p.profile_axis = a.into();
        p.bscan_axis = a.into();
    }
    if let Some(i) = args.index {
        p.index = Some(i);
    }
    let Some(mode) = p.mode else {
        bail!("pass --mode fwhm|dof|map|depthmap|bscan");
    };
    require_inputs(&p.inputs, 1)?;
    if matches!(mode, AnalyzeMode::Fwhm | AnalyzeMode::Dof) && p.profile_axis == Axis::Z {
        bail!("resolution profiles run along x or y");
    }
    let vols = read_all(&p.inputs)?;

    let mut run = Run::start("analyze", args.common.out.as_deref())?;
    let mut dofs = Vec::new();
    for (path, vol) in p.inputs.iter().zip(&vols) {
        let name = stem(path);
        match mode {
            AnalyzeMode::Fwhm | AnalyzeMode::Dof => {
                let curve = fwhm_vs_depth(vol, p.profile_axis)?;
                write_curve(&run.path(format!("{name}_fwhm.csv")), &curve)?;
                if mode == AnalyzeMode::Dof {
                    dofs.push(DofEntry { input: path.display().to_string(), dof: dof_measure(&curve) });
                }
            }
            AnalyzeMode::Map => write_pgm(&run.path(format!("{name}_map.pgm")), &map_project(vol, Axis::Z))?,
            AnalyzeMode::Depthmap => write_ppm(&run.path(format!("{name}_depth.ppm")), &depth_coded_map(vol))?,
            AnalyzeMode::Bscan => {
                let axis = p.bscan_axis;
                let index = p.index.unwrap_or(vol.dims().axis_len(axis) / 2);
                let img = bscan_extract(vol, axis, index)?;
                let tag = format!("{axis:?}").to_lowercase();
                write_pgm(&run.path(format!("{name}_bscan_{tag}{index}.pgm")), &img)?;
            }
        }
    }

    if mode == AnalyzeMode::Dof {
        // the last input is compared against the best of the ones before it
        let ratio = match dofs.split_last() {
            Some((last, rest)) if !rest.is_empty() => {
                Some(last.dof.dof_um / rest.iter().map(|d| d.dof.dof_um).fold(f64::MIN, f64::max))
            }
            _ => None,
        };
        let mut stdout = std::io::stdout().lock();
        for d in &dofs {
            writeln!(stdout, "{}\tdof_um={:.4}\tcensored={}", d.input, d.dof.dof_um, d.dof.censored())?;
        }
        if let Some(r) = ratio {
            writeln!(stdout, "ratio={r:.4}")?;
        }
        write_json(&run.path("dof.json"), &json!({ "entries": dofs, "ratio": ratio }))?;
    }
    run.finish(&p, &path_refs(&p.inputs), None)
}

#[derive(Serialize)]
struct SourceSummary {
    file: String,
    focal_depth_um: f64,
    dof: DofResult,
    map_correlation: f64,
    report: EvaluationReport,
}

#[derive(Serialize)]
struct FusedSummary {
    file: String,
    dof: DofResult,
    map_correlation: f64,
    report: EvaluationReport,
}

#[derive(Serialize)]
struct Summary {
    experiment: volfuse::phantom::Preset,
    seed: u64,
    best_config: FusionConfig,
    sources: Vec<SourceSummary>,
    fused: FusedSummary,
    /// Fused DoF over the largest source DoF.
    dof_ratio: f64,
    /// Fused nadir FWHM over the smallest source nadir FWHM.
    nadir_ratio: f64,
    /// Fused MAP correlation with truth minus the best source's.
    correlation_gain: f64,
}

pub fn reproduce(args: ReproduceArgs) -> Result<()> {
    let mut p: ReproduceParams = resolve(args.common.config.as_deref(), "reproduce")?;
    if let Some(e) = args.experiment {
        p.experiment = Some(e.into());
    }
    p.search.apply(&args.de);
    let Some(preset) = p.experiment else {
        bail!("name an experiment: fiber or vessel");
    };

    let scene = preset.scene();
    let mf = generate_multifocus(&scene, &preset.default_foci(), &Default::default())?;
    // work from what is written so a rerun from the files gives the same numbers
    let sources: Vec<Volume> = mf.sources.iter().map(as_stored).collect::<Result<_>>()?;
    let truth = as_stored(&mf.truth)?;

    let de = p.search.de_config(truth.dims())?;
    let opt = optimize_block_size(&sources, &p.search.weights, &de)?;
    let fused = as_stored(&fuse_volumes(&sources, &opt.config)?.fused)?;

    let mut run = Run::start("reproduce", args.common.out.as_deref())?;
    write_json(&run.path("scene.json"), &scene)?;
    write_volume(&run.path("truth.volf"), &truth)?;
    write_pgm(&run.path("truth_map.pgm"), &map_project(&truth, Axis::Z))?;
    write_optimized(&mut run, &opt, &fused)?;

    let truth_map = map_project(&truth, Axis::Z);
    let source_maps: Vec<MapImage> = sources.iter().map(|s| map_project(s, Axis::Z)).collect();
    let mut summaries = Vec::new();
    for (i, (src, map)) in sources.iter().zip(&source_maps).enumerate() {
        let file = format!("sources_{i}.volf");
        write_volume(&run.path(file.clone()), src)?;
        let curve = fwhm_vs_depth(src, Axis::Y)?;
        write_curve(&run.path(format!("sources_{i}_fwhm.csv")), &curve)?;
        write_pgm(&run.path(format!("sources_{i}_map.pgm")), map)?;
        summaries.push(SourceSummary {
            file,
            focal_depth_um: mf.focal_depths_um[i],
            dof: dof_measure(&curve),
            map_correlation: map_correlation(map, &truth_map)?,
            report: joint_score(map, &source_maps, &p.search.weights)?,
        });
    }

    let fused_map = map_project(&fused, Axis::Z);
    let curve = fwhm_vs_depth(&fused, Axis::Y)?;
    write_curve(&run.path("fused_fwhm.csv"), &curve)?;
    write_pgm(&run.path("fused_map.pgm"), &fused_map)?;
    write_ppm(&run.path("fused_depth.ppm"), &depth_coded_map(&fused))?;
    let fused_summary = FusedSummary {
        file: "fused.volf".into(),
        dof: dof_measure(&curve),
        map_correlation: map_correlation(&fused_map, &truth_map)?,
        report: joint_score(&fused_map, &source_maps, &p.search.weights)?,
    };

    let best_dof = summaries.iter().map(|s| s.dof.dof_um).fold(f64::MIN, f64::max);
    let best_nadir = summaries.iter().map(|s| s.dof.nadir_fwhm_um).fold(f64::MAX, f64::min);
    let best_corr = summaries.iter().map(|s| s.map_correlation).fold(f64::MIN, f64::max);
    let summary = Summary {
        experiment: preset,
        seed: de.seed,
        best_config: opt.config.clone(),
        dof_ratio: fused_summary.dof.dof_um / best_dof,
        nadir_ratio: fused_summary.dof.nadir_fwhm_um / best_nadir,
        correlation_gain: fused_summary.map_correlation - best_corr,
        sources: summaries,
        fused: fused_summary,
    };
    write_json(&run.path("summary.json"), &summary)?;
    run.finish(&p, &[], Some(de.seed))
}
