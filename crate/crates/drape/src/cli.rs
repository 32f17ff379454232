//! Subcommands and their flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use drape_core::body::{make_synthetic_body, BodyModel};
use drape_core::eval::{
    garment_errors, intermediate_losses, loss_3d_posed, loss_3d_tpose, rasterize_labels, segmentation_loss, Camera,
    ParameterSet,
};
use drape_core::garment::{dress, dress_rest, garment_displacements, pose_garment, DressedFigure, DressedGarment};
use drape_core::mesh::HeatGeodesics;
use drape_core::registration::{
    label_boundaries, register_garment, RegistrationConfig, RegistrationTarget, Termination,
};
use drape_core::retarget::{retarget_pipeline, Strategy};
use drape_core::segmentation::{build_prior_with, solve_mrf, transfer_labels, MrfProblem, PANTS, SKIN, UPPER_CLOTHES};
use drape_core::shape_space::{fit_pca, PcaShapeSpace, DEFAULT_COMPONENTS};
use drape_core::wardrobe::{generate_wardrobe, order_loops_by_centroid};
use drape_core::Vec3;
use log::{info, warn};
use serde::Serialize;

use crate::error::{CliError, CliResult, Context};
use crate::formats::*;
use crate::obj::{load_obj, save_obj};

#[derive(Parser, Debug)]
#[command(
    name = "drape",
    version,
    about = "Garment registration, retargeting and evaluation on a parametric body"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads. Commands run on one thread regardless.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress; repeat for more detail.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic body model.
    GenBody(GenBody),
    /// Write a body model, garment templates and dressed subjects.
    GenWardrobe(GenWardrobe),
    /// Write the posed layers of a figure as OBJ files.
    Dress(Dress),
    /// Fit a garment template to a labeled scan.
    Register(Register),
    /// Fit a garment shape space to registered garments.
    FitPca(FitPca),
    /// Label body vertices as skin or garment.
    Segment(Segment),
    /// Move the garments of one figure onto another body.
    Retarget(Retarget),
    /// Draw the label image of a figure.
    Render(Render),
    /// Compare a predicted figure with ground truth.
    Evaluate(Evaluate),
}

#[derive(Args, Debug)]
pub struct GenBody {
    #[arg(long, default_value_t = 10)]
    pub betas: usize,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u16).range(2..=64))]
    pub joints: u16,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenWardrobe {
    /// TOML with `subjects`, `betas` and `joints`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured subject count.
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct Dress {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub figure: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct Register {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub body_fit: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Scan label of the garment; defaults from the template class.
    #[arg(long)]
    pub label: Option<u32>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON list of target boundary loops (lists of points) in template
    /// loop order. Taken from the labeled scan when absent.
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
    /// Registered garment in the pose of the fit.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write a figure wearing the registered garment.
    #[arg(long)]
    pub figure: Option<PathBuf>,
    /// Figure whose garments the written figure keeps.
    #[arg(long, requires = "figure")]
    pub base_figure: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitPca {
    #[arg(long)]
    pub class: String,
    /// Garment meshes sharing the template topology.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    pub components: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct Segment {
    #[arg(long)]
    pub body: PathBuf,
    /// One row per body vertex, one column per label.
    #[arg(long)]
    pub unaries: PathBuf,
    #[arg(long)]
    pub regions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Scan to label from the segmented body.
    #[arg(long, requires = "scan_out")]
    pub scan: Option<PathBuf>,
    #[arg(long, requires = "scan")]
    pub scan_out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum StrategyArg {
    Naive,
    BodyAware,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Naive => Strategy::Naive,
            StrategyArg::BodyAware => Strategy::BodyAware,
        }
    }
}

#[derive(Args, Debug)]
pub struct Retarget {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

fn parse_size(s: &str) -> Result<Size, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("{s:?} is not WIDTHxHEIGHT"))?;
    let dim = |t: &str| match t.trim().parse::<usize>() {
        Ok(n) if n > 0 && n <= 16384 => Ok(n),
        _ => Err(format!("{t:?} is not an image dimension in 1..=16384")),
    };
    Ok(Size {
        width: dim(w)?,
        height: dim(h)?,
    })
}

#[derive(Args, Debug)]
pub struct Render {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub figure: PathBuf,
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, value_parser = parse_size, default_value = "512x512")]
    pub size: Size,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// PNG path; the legend goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct Evaluate {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Also compare label images seen through this camera.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, value_parser = parse_size, default_value = "256x256")]
    pub size: Size,
    /// Shape spaces used to compare garment codes.
    #[arg(long, num_args = 1..)]
    pub spaces: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        info!("running single-threaded; --threads {t} has no effect");
    }
    match &cli.command {
        Command::GenBody(a) => gen_body(cli, a),
        Command::GenWardrobe(a) => gen_wardrobe(cli, a),
        Command::Dress(a) => dress_cmd(a),
        Command::Register(a) => register(a),
        Command::FitPca(a) => fit_pca_cmd(a),
        Command::Segment(a) => segment(a),
        Command::Retarget(a) => retarget(a),
        Command::Render(a) => render(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn gen_body(cli: &Cli, a: &GenBody) -> CliResult<()> {
    if a.betas == 0 {
        return Err(CliError::usage("--betas must be at least 1"));
    }
    let m = make_synthetic_body(cli.seed, a.betas, a.joints as usize);
    write_json(&a.out, &body_model_to_json(&m))
}

/// Scan label of a garment class: upper clothes or pants.
pub fn class_label(class: &str) -> u32 {
    if class.ends_with("pants") {
        PANTS
    } else {
        UPPER_CLOTHES
    }
}

/// Front camera looking at a standing figure from 3 m, default intrinsics.
pub fn front_camera(size: Size) -> Camera {
    let mut c = Camera::default_for(size.width, size.height);
    c.rotation = drape_core::Mat3::from_rows([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
    c.translation = c.rotation.mul_vec(Vec3::new(0.0, -0.9, -3.0));
    c
}

#[derive(Serialize)]
struct ManifestSubject {
    dir: String,
    classes: Vec<String>,
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    body: String,
    camera: String,
    templates: BTreeMap<String, String>,
    subjects: Vec<ManifestSubject>,
}

fn gen_wardrobe(cli: &Cli, a: &GenWardrobe) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => read_toml::<WardrobeToml>(p)?,
        None => WardrobeToml::default(),
    };
    if let Some(s) = a.subjects {
        cfg.subjects = s;
    }
    if cfg.betas == 0 || !(2..=64).contains(&cfg.joints) {
        return Err(CliError::usage(
            "wardrobe needs at least 1 shape coefficient and 2..=64 joints",
        ));
    }
    let model = make_synthetic_body(cli.seed, cfg.betas, cfg.joints);
    let w = generate_wardrobe(&model, cli.seed, cfg.subjects)?;
    let out = &a.out;
    let body_path = out.join("body.json");
    write_json(&body_path, &body_model_to_json(&model))?;
    let camera_path = out.join("camera.json");
    let front = front_camera(Size { width: 1, height: 1 });
    let extrinsics = CameraJson {
        rotation: Some(front.rotation.rows),
        translation: Some([front.translation.x, front.translation.y, front.translation.z]),
        ..CameraJson::default()
    };
    write_json(&camera_path, &extrinsics)?;

    let mut templates = BTreeMap::new();
    for t in &w.templates {
        let p = out.join("templates").join(format!("{}.json", t.class));
        save_garment(t, &p)?;
        templates.insert(t.class.clone(), format!("templates/{}.json", t.class));
    }
    let mut subjects = Vec::new();
    for (i, s) in w.subjects.iter().enumerate() {
        let rel = format!("subjects/{i:02}");
        let dir = out.join(&rel);
        let fig_path = dir.join("figure.json");
        let garment_paths = s
            .figure
            .garments
            .iter()
            .map(|g| out.join("templates").join(format!("{}.json", g.garment.class)))
            .collect();
        save_figure(
            &FigureFile {
                figure: s.figure.clone(),
                garment_paths,
            },
            &fig_path,
        )?;
        let params = s.figure.params(0)?;
        write_json(&dir.join("fit.json"), &params_to_json(&params))?;

        let dressed = dress(&model, &s.figure, 0)?;
        let (scan, layers) = dressed.stacked();
        let labels: Vec<u32> = layers
            .iter()
            .map(|&l| {
                if l == 0 {
                    SKIN
                } else {
                    class_label(&s.classes[l as usize - 1])
                }
            })
            .collect();
        save_obj(&scan, &dir.join("scan.obj"))?;
        write_labels(&dir.join("labels.txt"), &labels)?;
        let regions = RegionsJson {
            regions: s
                .figure
                .garments
                .iter()
                .map(|g| {
                    let mut v = g.garment.indicator.clone();
                    v.sort_unstable();
                    v.dedup();
                    RegionJson {
                        label: class_label(&g.garment.class),
                        vertices: v,
                    }
                })
                .collect(),
            kappa: drape_core::segmentation::DEFAULT_KAPPA,
            prior_weight: drape_core::segmentation::DEFAULT_PRIOR_WEIGHT,
            pair_weight: drape_core::segmentation::DEFAULT_PAIR_WEIGHT,
        };
        write_json(&dir.join("regions.json"), &regions)?;
        info!("subject {i}: {}", s.classes.join(", "));
        subjects.push(ManifestSubject {
            dir: rel,
            classes: s.classes.clone(),
        });
    }
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            seed: cli.seed,
            body: "body.json".into(),
            camera: "camera.json".into(),
            templates,
            subjects,
        },
    )
}

fn dress_cmd(a: &Dress) -> CliResult<()> {
    let model = load_body_model(&a.model)?;
    let fig = load_figure(&a.figure, &model)?;
    let d = dress(&model, &fig.figure, a.frame).in_file(&a.figure)?;
    save_obj(&d.meshes[0], &a.out.join("skin.obj"))?;
    for (i, g) in fig.figure.garments.iter().enumerate() {
        save_obj(
            &d.meshes[i + 1],
            &a.out.join(format!("{:02}-{}.obj", i + 1, g.garment.class)),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EnergyJson {
    data: f64,
    laplacian: f64,
    interpenetration: f64,
    unpose: f64,
    total: f64,
    inside: usize,
}

#[derive(Serialize)]
struct RegisterReport {
    class: String,
    label: u32,
    termination: &'static str,
    iterations: usize,
    boundary_pairs: usize,
    init_boundary_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    energies: Vec<EnergyJson>,
}

fn register(a: &Register) -> CliResult<()> {
    let model = load_body_model(&a.model)?;
    let template = load_garment(&a.template)?;
    template.validate_for(&model).in_file(&a.template)?;
    let fit = load_params(&a.body_fit, &model)?;
    let scan = load_obj(&a.target)?;
    let labels = read_labels(&a.labels)?;
    if labels.len() != scan.vertex_count() {
        return Err(CliError::at(
            &a.labels,
            format!("{} labels for {} scan vertices", labels.len(), scan.vertex_count()),
        ));
    }
    let cfg: RegistrationConfig = match &a.config {
        Some(p) => read_toml::<RegistrationToml>(p)?.into(),
        None => RegistrationConfig::default(),
    };
    cfg.validate()
        .in_file(a.config.as_deref().unwrap_or(Path::new("registration config")))?;
    let label = a.label.unwrap_or_else(|| class_label(&template.class));

    let loops = match &a.boundaries {
        Some(p) => read_json::<Vec<Vec<[f64; 3]>>>(p)?
            .iter()
            .map(|l| l.iter().map(|&q| Vec3::from(q)).collect())
            .collect(),
        None => {
            // pair scan loops with template loops by centroid after posing
            let zero = vec![0.0; model.n_betas()];
            let d = garment_displacements(&model, &template, &template.mesh.vertices, &zero)?;
            let posed = pose_garment(&model, &fit, &d, &template)?;
            let reference: Vec<Vec<Vec3>> = template
                .boundary_loops
                .iter()
                .map(|l| l.iter().map(|&i| posed[i]).collect())
                .collect();
            order_loops_by_centroid(&reference, label_boundaries(&scan, &labels, label)).in_file(&a.target)?
        }
    };
    let target = RegistrationTarget {
        fit: &fit,
        fit_skin: None,
        mesh: &scan,
        labels: &labels,
        label,
        boundaries: &loops,
    };
    let r = register_garment(&model, &template, target, &cfg)?;
    let diag = &r.diagnostics;
    if let Some(w) = &diag.warning {
        warn!("{w}");
    }
    let last = diag.energies.last().copied().unwrap_or_default();
    info!(
        "{}: {} steps, total energy {:.6e}, {} vertices inside",
        template.class,
        diag.energies.len().saturating_sub(1),
        last.total,
        last.inside
    );
    save_obj(&template.mesh.with_vertices(r.posed.clone())?, &a.out)?;
    if let Some(p) = &a.report {
        let rep = RegisterReport {
            class: template.class.clone(),
            label,
            termination: match diag.termination {
                Termination::Converged => "converged",
                Termination::LineSearchStalled => "line-search-stalled",
                Termination::MaxIterations => "max-iterations",
            },
            iterations: diag.energies.len().saturating_sub(1),
            boundary_pairs: diag.boundary_pairs,
            init_boundary_residual: diag.init_boundary_residual,
            warning: diag.warning.clone(),
            energies: diag
                .energies
                .iter()
                .map(|e| EnergyJson {
                    data: e.data,
                    laplacian: e.laplacian,
                    interpenetration: e.interpenetration,
                    unpose: e.unpose,
                    total: e.total,
                    inside: e.inside,
                })
                .collect(),
        };
        write_json(p, &rep)?;
    }
    if let Some(fp) = &a.figure {
        let mut file = match &a.base_figure {
            Some(b) => {
                let base = load_figure(b, &model)?;
                if base.figure.beta != fit.beta {
                    warn!("{}: shape differs from the body fit; using the fit", b.display());
                }
                base
            }
            None => FigureFile {
                figure: DressedFigure::naked(&model, &fit),
                garment_paths: Vec::new(),
            },
        };
        file.figure.beta = fit.beta.clone();
        file.figure.poses = vec![fit.theta.clone()];
        file.figure.trans = fit.trans;
        let dg = DressedGarment {
            garment: template.clone(),
            displacements: r.displacements.clone(),
        };
        match file
            .figure
            .garments
            .iter()
            .position(|g| g.garment.class == template.class)
        {
            Some(i) => {
                file.figure.garments[i] = dg;
                file.garment_paths[i] = a.template.clone();
            }
            None => {
                file.figure.garments.push(dg);
                file.garment_paths.push(a.template.clone());
            }
        }
        save_figure(&file, fp)?;
    }
    Ok(())
}

fn fit_pca_cmd(a: &FitPca) -> CliResult<()> {
    let mut samples = Vec::with_capacity(a.inputs.len());
    let mut faces: Option<(&Path, Vec<[usize; 3]>)> = None;
    for p in &a.inputs {
        let m = load_obj(p)?;
        match &faces {
            Some((first, f)) if *f != m.faces => {
                return Err(CliError::at(p, format!("topology differs from {}", first.display())));
            }
            Some(_) => {}
            None => faces = Some((p, m.faces.clone())),
        }
        samples.push(m.vertices);
    }
    let fit = fit_pca(&a.class, &samples, a.components)?;
    if let Some(w) = &fit.warning {
        warn!("{w}");
    }
    write_json(&a.out, &shape_space_to_json(&fit.space))
}

#[derive(Serialize)]
struct SegmentReport {
    energy: f64,
    start_energies: Vec<f64>,
    counts: BTreeMap<u32, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flagged_scan_vertices: Option<Vec<usize>>,
}

fn segment(a: &Segment) -> CliResult<()> {
    let body = load_obj(&a.body)?;
    let unaries = read_table(&a.unaries)?;
    if unaries.len() != body.vertex_count() {
        return Err(CliError::at(
            &a.unaries,
            format!("{} rows for {} body vertices", unaries.len(), body.vertex_count()),
        ));
    }
    let regions: RegionsJson = read_json(&a.regions)?;
    let geo = if regions.regions.is_empty() {
        None
    } else {
        Some(HeatGeodesics::new(&body).in_file(&a.body)?)
    };
    let mut priors = Vec::new();
    for (i, r) in regions.regions.iter().enumerate() {
        let g = geo.as_ref().expect("built for nonempty regions");
        let prior = build_prior_with(g, &body, r.label, &r.vertices, regions.kappa)
            .map_err(|e| CliError::at(&a.regions, format!("regions[{i}]: {e}")))?;
        priors.push(prior);
    }
    let mut problem = MrfProblem::new(&body, unaries, priors);
    problem.prior_weight = regions.prior_weight;
    problem.pair_weight = regions.pair_weight;
    problem.validate().in_file(&a.regions)?;
    let sol = solve_mrf(&problem)?;
    write_labels(&a.out, &sol.labels)?;
    let mut counts = BTreeMap::new();
    for &l in &sol.labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let mut flagged = None;
    if let (Some(sp), Some(so)) = (&a.scan, &a.scan_out) {
        let scan = load_obj(sp)?;
        let t = transfer_labels(&body, &sol.labels, &scan)?;
        if !t.flagged.is_empty() {
            warn!("{} scan vertices are far from the body", t.flagged.len());
        }
        write_labels(so, &t.labels)?;
        flagged = Some(t.flagged);
    }
    if let Some(p) = &a.report {
        write_json(
            p,
            &SegmentReport {
                energy: sol.energy,
                start_energies: sol.start_energies,
                counts,
                flagged_scan_vertices: flagged,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GarmentDiagJson {
    class: String,
    interpenetration: f64,
    inside_count: usize,
}

#[derive(Serialize)]
struct RetargetReportJson {
    strategy: &'static str,
    garments: Vec<GarmentDiagJson>,
}

fn retarget(a: &Retarget) -> CliResult<()> {
    let model = load_body_model(&a.model)?;
    let source = load_figure(&a.source, &model)?;
    let target = load_figure(&a.target, &model)?;
    let (fig, rep) = retarget_pipeline(&model, &source.figure, &target.figure, a.strategy.into())?;
    let path_of = |file: &FigureFile, class: &str| {
        file.figure
            .garments
            .iter()
            .position(|g| g.garment.class == class)
            .map(|i| file.garment_paths[i].clone())
    };
    let garment_paths = fig
        .garments
        .iter()
        .map(|g| {
            path_of(&source, &g.garment.class)
                .or_else(|| path_of(&target, &g.garment.class))
                .expect("every garment comes from one of the figures")
        })
        .collect();
    save_figure(
        &FigureFile {
            figure: fig,
            garment_paths,
        },
        &a.out,
    )?;
    for g in &rep.garments {
        info!("{}: {} vertices inside the body", g.class, g.inside_count);
    }
    if let Some(p) = &a.report {
        write_json(
            p,
            &RetargetReportJson {
                strategy: rep.strategy.name(),
                garments: rep
                    .garments
                    .into_iter()
                    .map(|g| GarmentDiagJson {
                        class: g.class,
                        interpenetration: g.interpenetration,
                        inside_count: g.inside_count,
                    })
                    .collect(),
            },
        )?;
    }
    Ok(())
}

fn load_camera(path: Option<&Path>, size: Size) -> CliResult<Camera> {
    let c = match path {
        Some(p) => {
            let c = camera_from_json(&read_json(p)?, size.width, size.height);
            c.validate().in_file(p)?;
            c
        }
        None => front_camera(size),
    };
    Ok(c)
}

#[derive(Serialize)]
struct RenderSidecar {
    width: usize,
    height: usize,
    legend: BTreeMap<u32, String>,
    camera: CameraJson,
}

fn write_png(path: &Path, width: usize, height: usize, labels: &[u32]) -> CliResult<()> {
    let pixels = labels
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| CliError::domain(format!("label {l} does not fit an 8-bit image"))))
        .collect::<CliResult<Vec<u8>>>()?;
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| CliError::at(path, e))?;
        w.write_image_data(&pixels).map_err(|e| CliError::at(path, e))?;
    }
    write_file(path, &bytes)
}

fn render(a: &Render) -> CliResult<()> {
    let model = load_body_model(&a.model)?;
    let fig = load_figure(&a.figure, &model)?;
    let cam = load_camera(a.camera.as_deref(), a.size)?;
    let img = rasterize_labels(&model, &fig.figure, a.frame, &cam, a.size.width, a.size.height)?;
    write_png(&a.out, img.width, img.height, &img.labels)?;
    let mut legend = BTreeMap::new();
    legend.insert(0, "background".to_string());
    legend.insert(1, "skin".to_string());
    for (i, g) in fig.figure.garments.iter().enumerate() {
        legend.insert(i as u32 + 2, g.garment.class.clone());
    }
    write_json(
        &a.out.with_extension("json"),
        &RenderSidecar {
            width: img.width,
            height: img.height,
            legend,
            camera: camera_to_json(&img.camera),
        },
    )
}

#[derive(Serialize)]
struct SegmentationJson {
    loss: f64,
    mismatched: usize,
    iou: BTreeMap<u32, f64>,
}

#[derive(Serialize)]
struct IntermediateJson {
    pose: f64,
    shape: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    garment: Option<f64>,
}

#[derive(Serialize)]
struct Metrics {
    /// Symmetric surface error per garment class.
    garment_error: BTreeMap<String, f64>,
    mean_garment_error: f64,
    loss_3d_tpose: f64,
    loss_3d_posed: f64,
    intermediate: IntermediateJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    segmentation: Option<SegmentationJson>,
}

/// `pred` with its garments in the class order of `gt`.
fn align_garments(pred: &DressedFigure, gt: &DressedFigure, pred_path: &Path) -> CliResult<DressedFigure> {
    let mut out = pred.clone();
    out.garments = gt
        .garments
        .iter()
        .map(|g| {
            pred.garments
                .iter()
                .find(|p| p.garment.class == g.garment.class)
                .cloned()
                .ok_or_else(|| CliError::at(pred_path, format!("no {} garment", g.garment.class)))
        })
        .collect::<CliResult<_>>()?;
    Ok(out)
}

fn garment_codes(
    model: &BodyModel,
    fig: &DressedFigure,
    spaces: &[(PathBuf, PcaShapeSpace)],
) -> CliResult<Vec<Vec<f64>>> {
    let rest = dress_rest(model, fig)?;
    let mut codes = Vec::new();
    for (i, g) in fig.garments.iter().enumerate() {
        let Some((p, s)) = spaces.iter().find(|(_, s)| s.class == g.garment.class) else {
            continue;
        };
        let v = &rest.meshes[i + 1].vertices;
        codes.push(s.encode(v).in_file(p)?.z);
    }
    Ok(codes)
}

fn evaluate(a: &Evaluate) -> CliResult<()> {
    let model = load_body_model(&a.model)?;
    let gt = load_figure(&a.gt, &model)?.figure;
    let pred = align_garments(&load_figure(&a.pred, &model)?.figure, &gt, &a.pred)?;
    if pred.frame_count() != gt.frame_count() {
        return Err(CliError::at(
            &a.pred,
            format!("{} frames, ground truth has {}", pred.frame_count(), gt.frame_count()),
        ));
    }
    let mut pd = Vec::new();
    let mut gd = Vec::new();
    for f in 0..gt.frame_count() {
        pd.push(dress(&model, &pred, f)?);
        gd.push(dress(&model, &gt, f)?);
    }
    let (per_label, mean) = garment_errors(&pd, &gd)?;
    let garment_error = per_label
        .into_iter()
        .map(|(l, e)| (gt.garments[l as usize - 1].garment.class.clone(), e))
        .collect();

    let spaces = a
        .spaces
        .iter()
        .map(|p| Ok((p.clone(), load_shape_space(p)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let params = |f: &DressedFigure| -> CliResult<ParameterSet> {
        Ok(ParameterSet {
            poses: f.poses.clone(),
            beta: f.beta.clone(),
            codes: garment_codes(&model, f, &spaces)?,
        })
    };
    let il = intermediate_losses(&params(&pred)?, &params(&gt)?)?;

    let segmentation = match &a.camera {
        Some(p) => {
            let cam = load_camera(Some(p), a.size)?;
            let r = rasterize_labels(&model, &pred, 0, &cam, a.size.width, a.size.height)?;
            let i = rasterize_labels(&model, &gt, 0, &cam, a.size.width, a.size.height)?;
            let c = segmentation_loss(&r, &i)?;
            Some(SegmentationJson {
                loss: c.loss,
                mismatched: c.mismatched,
                iou: c.iou,
            })
        }
        None => None,
    };
    let metrics = Metrics {
        garment_error,
        mean_garment_error: mean,
        loss_3d_tpose: loss_3d_tpose(&model, &pred, &gt)?,
        loss_3d_posed: loss_3d_posed(&model, &pred, &gt)?,
        intermediate: IntermediateJson {
            pose: il.pose,
            shape: il.shape,
            garment: if spaces.is_empty() { None } else { Some(il.garment) },
        },
        segmentation,
    };
    info!("mean garment error {:.6} m", metrics.mean_garment_error);
    write_json(&a.out, &metrics)
}
