//! Command-line front end.
//!
//! Every artifact-producing command writes `run.json` next to its outputs.
//! `replay` re-runs a recorded command into a new directory and compares
//! the artifacts against the recorded hashes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{
    fixed_distance_samples, l2_histogram, robustness_report, robustness_triples, triple_distances, write_histogram_csv,
    write_robustness_csv, EpeReport,
};
use crate::flow::FlowField;
use crate::gradcheck::{check_all, GradcheckConfig, GradcheckReport};
use crate::image::{FeatureMap, Image};
use crate::io;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::matcher::{estimate_flow, fill_nearest_valid};
use crate::net::{checkpoint, NetworkParams};
use crate::pyramid::{build_pyramid, lowpass_featuremap, FeatureExtractor, ScalePyramid};
use crate::sampler::{normalize_image, ImagePair};
use crate::synth::generate_dataset;
use crate::trainer::{train, write_log_csv};

#[derive(Parser, Debug)]
#[command(name = "siamflow", version, about = "Siamese patch features and dense flow matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset with ground-truth flow and occlusion masks.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on a dataset manifest.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the feature pyramid of one image.
    Features {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// Network for the coarse-resolution scales (defaults to --model).
        #[arg(long)]
        model_multi: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate flow for one image pair or every pair of a dataset.
    Flow {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        model_multi: Option<PathBuf>,
        #[arg(long, requires = "image2", conflicts_with = "data")]
        image1: Option<PathBuf>,
        #[arg(long, requires = "image1")]
        image2: Option<PathBuf>,
        #[arg(long, required_unless_present = "image1")]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Matching robustness of a network, optionally relative to a reference.
    EvalRobustness {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Also evaluate feature low-pass factors 1, 1.5, 2, 2.25 and 2.5.
        #[arg(long)]
        lowpass_curve: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Endpoint error of flow files written by `flow --data`.
    EvalEpe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        flows: PathBuf,
        /// Fill invalid estimates from the nearest valid pixel first.
        #[arg(long)]
        fill: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients for every loss.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 8)]
        params: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a recorded command and compare its artifacts.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A fully resolved command: what `run.json` records.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: String,
    pub args: BTreeMap<String, String>,
    pub config: Config,
    pub out: Option<PathBuf>,
}

pub const LOWPASS_CURVE: [f64; 5] = [1.0, 1.5, 2.0, 2.25, 2.5];

fn resolve_config(c: &ConfigArgs) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_overrides(&c.set)?;
    cfg.validate()?;
    Ok(cfg)
}

fn path_arg(args: &mut BTreeMap<String, String>, key: &str, p: &Option<PathBuf>) {
    if let Some(p) = p {
        let abs = std::path::absolute(p).unwrap_or_else(|_| p.clone());
        args.insert(key.into(), abs.display().to_string());
    }
}

impl Invocation {
    pub fn from_command(cmd: &Command) -> Result<Option<Self>> {
        let mut args = BTreeMap::new();
        let (name, cfg, out) = match cmd {
            Command::Synth { cfg, out } => ("synth", cfg, Some(out)),
            Command::Train { cfg, data, out } => {
                path_arg(&mut args, "data", &Some(data.clone()));
                ("train", cfg, Some(out))
            }
            Command::Features {
                cfg,
                model,
                model_multi,
                image,
                out,
            } => {
                path_arg(&mut args, "model", &Some(model.clone()));
                path_arg(&mut args, "model_multi", model_multi);
                path_arg(&mut args, "image", &Some(image.clone()));
                ("features", cfg, Some(out))
            }
            Command::Flow {
                cfg,
                model,
                model_multi,
                image1,
                image2,
                data,
                out,
            } => {
                path_arg(&mut args, "model", &Some(model.clone()));
                path_arg(&mut args, "model_multi", model_multi);
                path_arg(&mut args, "image1", image1);
                path_arg(&mut args, "image2", image2);
                path_arg(&mut args, "data", data);
                ("flow", cfg, Some(out))
            }
            Command::EvalRobustness {
                cfg,
                model,
                reference,
                data,
                lowpass_curve,
                out,
            } => {
                path_arg(&mut args, "model", &Some(model.clone()));
                path_arg(&mut args, "reference", reference);
                path_arg(&mut args, "data", &Some(data.clone()));
                if *lowpass_curve {
                    args.insert("lowpass_curve".into(), "true".into());
                }
                ("eval-robustness", cfg, Some(out))
            }
            Command::EvalEpe {
                cfg,
                data,
                flows,
                fill,
                out,
            } => {
                path_arg(&mut args, "data", &Some(data.clone()));
                path_arg(&mut args, "flows", &Some(flows.clone()));
                if *fill {
                    args.insert("fill".into(), "true".into());
                }
                ("eval-epe", cfg, Some(out))
            }
            Command::Gradcheck { cfg, cases, params, out } => {
                args.insert("cases".into(), cases.to_string());
                args.insert("params".into(), params.to_string());
                ("gradcheck", cfg, out.as_ref())
            }
            Command::Replay { .. } => return Ok(None),
        };
        Ok(Some(Self {
            command: name.to_string(),
            args,
            config: resolve_config(cfg)?,
            out: out.cloned(),
        }))
    }

    pub fn from_manifest(m: &RunManifest, out: PathBuf) -> Result<Self> {
        let config = Config::from_text(&m.config)?;
        config.validate()?;
        Ok(Self {
            command: m.command.clone(),
            args: m.args.clone(),
            config,
            out: Some(out),
        })
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.opt_path(key)
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` needs --{}", self.command, key.replace('_', "-"))))
    }

    fn opt_path(&self, key: &str) -> Option<PathBuf> {
        self.args.get(key).map(PathBuf::from)
    }

    fn flag(&self, key: &str) -> bool {
        self.args.get(key).is_some_and(|v| v == "true")
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.args.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad --{key} value `{v}`"))),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` needs --out", self.command)))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_file(dir: &Path, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
}

/// Loads a dataset manifest and records it and every file it lists.
fn load_recorded_dataset(path: &Path, m: &mut RunManifest) -> Result<Vec<ImagePair>> {
    m.add_input(path)?;
    let entries = io::read_manifest(path)?;
    let mut pairs = Vec::with_capacity(entries.len());
    for e in &entries {
        for p in [&e.image1, &e.image2, &e.flow].into_iter().chain(e.extra.as_ref()) {
            m.add_input(p)?;
        }
        pairs.push(io::load_pair(e)?.0);
    }
    Ok(pairs)
}

fn load_model(path: &Path, m: &mut RunManifest) -> Result<NetworkParams> {
    m.add_input(path)?;
    checkpoint::load(path)
}

fn load_models(inv: &Invocation, m: &mut RunManifest) -> Result<(NetworkParams, NetworkParams)> {
    let full = load_model(&inv.path("model")?, m)?;
    let multi = match inv.opt_path("model_multi") {
        Some(p) => load_model(&p, m)?,
        None => full.clone(),
    };
    Ok((full, multi))
}

fn pyramid_of(img: &Image, nets: &(NetworkParams, NetworkParams), cfg: &Config) -> Result<ScalePyramid> {
    build_pyramid(&normalize_image(img).0, &nets.0, &nets.1, &cfg.pyramid)
}

fn run_synth(inv: &Invocation, m: &mut RunManifest, out: &Path) -> Result<()> {
    let cfg = &inv.config;
    m.seeds.insert("synth".into(), cfg.synth.seed);
    let pairs = m.timed("generate", || generate_dataset(&cfg.synth, cfg.synth_count))?;
    let mut rows = Vec::with_capacity(pairs.len());
    m.timed("write", || {
        for (k, p) in pairs.iter().enumerate() {
            let names = [
                format!("pair_{k:03}_1.pgm"),
                format!("pair_{k:03}_2.pgm"),
                format!("pair_{k:03}_flow.flo"),
                format!("pair_{k:03}_occ.pgm"),
            ];
            io::save_pgm(&out.join(&names[0]), &p.i1, 65535)?;
            io::save_pgm(&out.join(&names[1]), &p.i2, 65535)?;
            io::save_flo(&out.join(&names[2]), &p.flow, true)?;
            io::save_pgm(&out.join(&names[3]), &io::mask_image(&p.occlusion, p.width(), p.height())?, 255)?;
            rows.push(names);
        }
        io::write_manifest(&out.join("dataset.txt"), &rows)
    })?;
    for names in &rows {
        for n in names {
            m.add_output(out, n)?;
        }
    }
    m.add_output(out, "dataset.txt")?;
    println!("wrote {} pairs to {}", pairs.len(), out.display());
    Ok(())
}

fn run_train(inv: &Invocation, m: &mut RunManifest, out: &Path) -> Result<()> {
    let cfg = &inv.config.train;
    m.seeds.insert("train".into(), cfg.seed);
    let pairs = load_recorded_dataset(&inv.path("data")?, m)?;
    let outcome = m.timed("train", || train(&pairs, cfg))?;
    checkpoint::save(&outcome.params, &out.join("model.ckpt"))?;
    csv_file(out, "train_log.csv", |w| write_log_csv(w, &outcome.log))?;
    m.add_output(out, "model.ckpt")?;
    m.add_output(out, "train_log.csv")?;
    println!(
        "trained {} batches ({} samples back-propagated of {} scanned)",
        outcome.stats.batches, outcome.stats.samples_backpropagated, outcome.stats.candidates_scanned
    );
    Ok(())
}

fn run_features(inv: &Invocation, m: &mut RunManifest, out: &Path) -> Result<()> {
    let nets = load_models(inv, m)?;
    let path = inv.path("image")?;
    m.add_input(&path)?;
    let img = io::load_image(&path)?;
    let pyr = m.timed("features", || pyramid_of(&img, &nets, &inv.config))?;
    for (s, fm) in pyr.scales.iter().enumerate() {
        let name = format!("scale{s}.sfmap");
        io::save_featuremap(&out.join(&name), fm)?;
        m.add_output(out, &name)?;
    }
    Ok(())
}

fn write_flow(out: &Path, stem: &str, flow: &FlowField, sentinel: bool, m: &mut RunManifest) -> Result<()> {
    let (flo, mask) = (format!("{stem}.flo"), format!("{stem}_valid.png"));
    io::save_flo(&out.join(&flo), flow, sentinel)?;
    io::save_png_gray(&out.join(&mask), &io::mask_image(&flow.valid, flow.width(), flow.height())?)?;
    m.add_output(out, &flo)?;
    m.add_output(out, &mask)
}

fn run_flow(inv: &Invocation, m: &mut RunManifest, out: &Path) -> Result<()> {
    let cfg = &inv.config;
    m.seeds.insert("matcher".into(), cfg.matcher.seed);
    if cfg.consistency.secondary_enabled {
        m.seeds.insert("secondary".into(), cfg.consistency.secondary_seed);
    }
    let nets = load_models(inv, m)?;
    let jobs: Vec<(String, Image, Image)> = match inv.opt_path("data") {
        Some(data) => load_recorded_dataset(&data, m)?
            .into_iter()
            .enumerate()
            .map(|(k, p)| (format!("pair_{k:03}"), p.i1, p.i2))
            .collect(),
        None => {
            let (a, b) = (inv.path("image1")?, inv.path("image2")?);
            m.add_input(&a)?;
            m.add_input(&b)?;
            vec![("flow".into(), io::load_image(&a)?, io::load_image(&b)?)]
        }
    };
    for (stem, i1, i2) in &jobs {
        let est = m.timed(&format!("match {stem}"), || {
            let (p1, p2) = (pyramid_of(i1, &nets, cfg)?, pyramid_of(i2, &nets, cfg)?);
            estimate_flow(&p1, &p2, &cfg.matcher, &cfg.consistency)
        })?;
        write_flow(out, stem, &est.filtered, cfg.flo_sentinel, m)?;
        println!(
            "{stem}: {} of {} pixels pass the consistency check",
            est.filtered.valid_count(),
            est.filtered.len()
        );
    }
    Ok(())
}

fn dense_features(net: &NetworkParams, pairs: &[ImagePair]) -> Result<Vec<(FeatureMap, FeatureMap)>> {
    pairs
        .iter()
        .map(|p| {
            let n = p.normalized();
            Ok((net.extract(&n.i1)?, net.extract(&n.i2)?))
        })
        .collect()
}

fn run_eval_robustness(inv: &Invocation, m: &mut RunManifest, out: &Path) -> Result<()> {
    let cfg = &inv.config;
    m.seeds.insert("eval".into(), cfg.eval.seed);
    let net = load_model(&inv.path("model")?, m)?;
    let reference = inv.opt_path("reference").map(|p| load_model(&p, m)).transpose()?;
    let pairs = load_recorded_dataset(&inv.path("data")?, m)?;
    let mut rc = cfg.eval.robustness;
    rc.window = net.receptive_field();
    let dist = cfg
        .train
        .negative
        .for_image(pairs[0].width(), pairs[0].height());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
    let triples = robustness_triples(&pairs, &dist, &rc, &mut rng)?;
    let feats = m.timed("features", || dense_features(&net, &pairs))?;
    let report = robustness_report(&triples, &triple_distances(&triples, &feats)?)?;
    let ref_report = match &reference {
        Some(r) => {
            let rf = m.timed("reference features", || dense_features(r, &pairs))?;
            Some(robustness_report(&triples, &triple_distances(&triples, &rf)?)?)
        }
        None => None,
    };
    csv_file(out, "robustness.csv", |w| write_robustness_csv(w, &report, ref_report.as_ref()))?;
    m.add_output(out, "robustness.csv")?;

    let (pos, neg) = fixed_distance_samples(
        &pairs,
        &feats,
        cfg.eval.histogram_distance,
        rc.window,
        cfg.eval.histogram_samples,
        &mut rng,
    )?;
    let hist = l2_histogram(&pos, &neg, cfg.eval.histogram_bins, None)?;
    csv_file(out, "histogram.csv", |w| write_histogram_csv(w, &hist))?;
    m.add_output(out, "histogram.csv")?;

    if inv.flag("lowpass_curve") {
        let mut rows = Vec::new();
        for f in LOWPASS_CURVE {
            let lp: Vec<_> = feats
                .iter()
                .map(|(a, b)| (lowpass_featuremap(a, f), lowpass_featuremap(b, f)))
                .collect();
            rows.push((f, robustness_report(&triples, &triple_distances(&triples, &lp)?)?));
        }
        csv_file(out, "lowpass_curve.csv", |w| {
            writeln!(w, "lowpass_factor,r,standard_error,samples")?;
            for (f, r) in &rows {
                writeln!(w, "{f},{},{},{}", r.r, r.standard_error(), r.samples)?;
            }
            Ok(())
        })?;
        m.add_output(out, "lowpass_curve.csv")?;
    }
    println!("r = {:.6} over {} samples (se {:.6})", report.r, report.samples, report.standard_error());
    Ok(())
}

/// Reads `stem.flo` and applies `stem_valid.png` when present.
fn load_estimate(dir: &Path, stem: &str, m: &mut RunManifest) -> Result<FlowField> {
    let flo = dir.join(format!("{stem}.flo"));
    m.add_input(&flo)?;
    let mut flow = io::load_flow(&flo)?;
    let mask = dir.join(format!("{stem}_valid.png"));
    if mask.exists() {
        m.add_input(&mask)?;
        let img = io::load_image(&mask)?;
        if img.data().len() != flow.len() {
            return Err(Error::format(&mask, "valid mask size differs from the flow"));
        }
        for (v, &px) in flow.valid.iter_mut().zip(img.data()) {
            *v &= px > 0.0;
        }
    }
    Ok(flow)
}

fn run_eval_epe(inv: &Invocation, m: &mut RunManifest, out: &Path) -> Result<()> {
    let pairs = load_recorded_dataset(&inv.path("data")?, m)?;
    let flows = inv.path("flows")?;
    let mut reports = Vec::with_capacity(pairs.len());
    for (k, p) in pairs.iter().enumerate() {
        let mut est = load_estimate(&flows, &format!("pair_{k:03}"), m)?;
        if inv.flag("fill") {
            est = fill_nearest_valid(&est);
        }
        let noc: Vec<bool> = p.occlusion.iter().map(|&o| !o).collect();
        reports.push(crate::eval::epe_metrics(&est, &p.flow, Some(&noc))?);
    }
    let total = EpeReport::combine(&reports)?;
    csv_file(out, "epe.csv", |w| {
        writeln!(w, "pair,domain,epe,pct_over_3px,pct_over_5px,pixels")?;
        let rows = reports.iter().enumerate().map(|(k, r)| (format!("{k}"), r));
        for (name, r) in rows.chain(std::iter::once(("total".to_string(), &total))) {
            writeln!(w, "{name},noc,{},{},{},{}", r.epe_noc, r.pct_noc[0], r.pct_noc[1], r.count_noc)?;
            writeln!(w, "{name},all,{},{},{},{}", r.epe_all, r.pct_all[0], r.pct_all[1], r.count_all)?;
        }
        Ok(())
    })?;
    m.add_output(out, "epe.csv")?;
    println!("EPE noc {:.4} px, all {:.4} px", total.epe_noc, total.epe_all);
    Ok(())
}

fn gradcheck_table(reports: &[GradcheckReport]) -> String {
    let mut s = String::from("loss,cases,max_relative_error,failures,kink_skips,result\n");
    for r in reports {
        s += &format!(
            "{},{},{:e},{},{},{}\n",
            r.kind,
            r.cases,
            r.max_relative_error,
            r.failures,
            r.kink_skips,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    s
}

fn run_gradcheck(inv: &Invocation, m: &mut RunManifest) -> Result<bool> {
    let cfg = GradcheckConfig {
        cases: inv.count("cases", 100)?,
        params_per_case: inv.count("params", 8)?,
        seed: inv.config.train.seed,
        ..GradcheckConfig::default()
    };
    m.seeds.insert("gradcheck".into(), cfg.seed);
    let reports = m.timed("gradcheck", || check_all(&inv.config.train.architecture.layers(), &cfg))?;
    let table = gradcheck_table(&reports);
    print!("{table}");
    if let Some(out) = &inv.out {
        fs::write(out.join("gradcheck.csv"), &table).map_err(|e| Error::io(out.join("gradcheck.csv"), e))?;
        m.add_output(out, "gradcheck.csv")?;
    }
    Ok(reports.iter().all(GradcheckReport::passed))
}

/// Runs an invocation and writes `run.json` into its output directory.
/// Returns the manifest and whether every check passed.
pub fn run(inv: &Invocation) -> Result<(RunManifest, bool)> {
    let mut m = RunManifest::new(&inv.command, inv.config.to_text());
    m.args = inv.args.clone();
    if let Some(out) = &inv.out {
        create_dir(out)?;
    }
    let mut ok = true;
    match inv.command.as_str() {
        "synth" => run_synth(inv, &mut m, inv.out_dir()?)?,
        "train" => run_train(inv, &mut m, inv.out_dir()?)?,
        "features" => run_features(inv, &mut m, inv.out_dir()?)?,
        "flow" => run_flow(inv, &mut m, inv.out_dir()?)?,
        "eval-robustness" => run_eval_robustness(inv, &mut m, inv.out_dir()?)?,
        "eval-epe" => run_eval_epe(inv, &mut m, inv.out_dir()?)?,
        "gradcheck" => ok = run_gradcheck(inv, &mut m)?,
        other => return Err(Error::InvalidArgument(format!("unknown command `{other}` in run manifest"))),
    }
    if let Some(out) = &inv.out {
        m.save(&out.join(MANIFEST_FILE))?;
    }
    Ok((m, ok))
}

/// Re-runs the command recorded in `manifest_path` into `out` and returns
/// the artifacts whose content differs from the record.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let recorded = RunManifest::load(manifest_path)?;
    let changed = recorded.changed_inputs()?;
    if !changed.is_empty() {
        let list: Vec<String> = changed.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Other(format!("inputs changed since the recorded run: {}", list.join(", "))));
    }
    let inv = Invocation::from_manifest(&recorded, out.to_path_buf())?;
    run(&inv)?;
    Ok(recorded.mismatched_outputs(out))
}

/// Parses `args` and runs the command; the return value is the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Replay { manifest, out } => replay(manifest, out).map(|bad| {
            for p in &bad {
                eprintln!("mismatch: {}", p.display());
            }
            if bad.is_empty() {
                println!("all recorded artifacts reproduced");
            }
            bad.is_empty()
        }),
        cmd => Invocation::from_command(cmd)
            .and_then(|inv| run(&inv.expect("not replay")))
            .map(|(_, ok)| ok),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
