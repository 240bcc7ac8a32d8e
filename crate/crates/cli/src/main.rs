use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use somnoflow::config::PipelineConfig;
use somnoflow::deepnet::{self, deep_feature_names, SavedModel};
use somnoflow::flow::{activity_from_frames, ActivitySeries, BedGeometry};
use somnoflow::forest::{self, FeatureMatrix, Forest};
use somnoflow::pipeline::{self, SimulationManifest};
use somnoflow::stage::map_hypnogram;
use somnoflow::{io, rng, Error, Result, StageScheme, VitalKind, EPOCH_SECONDS, FORMAT_VERSION};

#[derive(Debug, Parser)]
#[command(name = "somnoflow", about = "Video-based sleep staging pipeline", disable_version_flag = true)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "SOMNOFLOW_THREADS")]
    threads: Option<usize>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,

    /// Print binary and file-format versions.
    #[arg(short = 'V', long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Pipeline config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(p) => PipelineConfig::load(p),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one synthetic recording: labels, vitals, contact waveforms, video frames.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Study recording index (selects seed and camera pose).
        #[arg(long, default_value_t = 0)]
        recording: usize,
        /// Override the number of 30 s epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Skip writing video frames.
        #[arg(long)]
        no_frames: bool,
    },
    /// Optical-flow activity (4 Hz, upper and lower bed region) from PGM frames.
    ExtractActivity {
        #[command(flatten)]
        config: ConfigArg,
        /// Directory of 000000.pgm, 000001.pgm, ...
        #[arg(long)]
        frames: PathBuf,
        /// Simulation manifest holding the bed geometry.
        #[arg(long, required_unless_present = "corners", conflicts_with = "corners")]
        manifest: Option<PathBuf>,
        /// Bed corners in source pixels as x,y pairs: top-left, top-right,
        /// bottom-right, bottom-left. The crop size comes from the config.
        #[arg(long, allow_hyphen_values = true)]
        corners: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heart and breathing rate with quality flags from ECG, RIP and PPG.
    ExtractVitals {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        ecg: PathBuf,
        #[arg(long)]
        rip_abd: PathBuf,
        #[arg(long)]
        rip_thor: PathBuf,
        /// Reference heart rate (vitals CSV, 1 Hz).
        #[arg(long)]
        ppg_hr: PathBuf,
        /// Directory receiving hr.csv and br.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-epoch motion and baseline features.
    Featurize {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        activity: PathBuf,
        #[arg(long)]
        hr: PathBuf,
        #[arg(long)]
        br: PathBuf,
        /// Number of epochs; defaults to whole epochs of the heart-rate series.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the deep feature extractor on labelled vital-sign recordings.
    TrainExtractor {
        #[command(flatten)]
        config: ConfigArg,
        /// Directory with one subdirectory per recording.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep low-quality samples instead of zero-filling them.
        #[arg(long)]
        raw: bool,
    },
    /// Deep features of one recording from a trained extractor.
    DeepFeatures {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        hr: PathBuf,
        #[arg(long)]
        br: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a random forest; repeat --features/--labels (and --deep) per recording.
    TrainClassifier {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        deep: Vec<PathBuf>,
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,
        #[arg(long, default_value = "four-class")]
        scheme: StageScheme,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated evaluation of a study directory.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        study: PathBuf,
        /// report.json; report.csv and hypnograms go beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// The whole synthetic study, with intermediate artefacts.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default config.
    DefaultConfig,
}

fn guard(force: bool, paths: &[PathBuf]) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Error::Config(format!("{} exists; pass --force to overwrite", p.display()))),
        None => Ok(()),
    }
}

fn epochs_of(explicit: Option<usize>, hr_len: usize) -> Result<usize> {
    let n = explicit.unwrap_or(hr_len / EPOCH_SECONDS);
    if n == 0 {
        return Err(Error::InsufficientData("series shorter than one epoch".into()));
    }
    Ok(n)
}

fn count_frames(dir: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut n = 0;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().extension().is_some_and(|x| x == "pgm") {
            n += 1;
        }
    }
    Ok(n)
}

fn read_vitals_pair(hr: &Path, br: &Path) -> Result<(somnoflow::VitalSeries, somnoflow::VitalSeries)> {
    Ok((io::read_vitals(hr, VitalKind::HeartRate)?, io::read_vitals(br, VitalKind::BreathingRate)?))
}

fn execute(cmd: Command, force: bool) -> Result<()> {
    match cmd {
        Command::Simulate { config, out, recording, epochs, no_frames } => {
            let mut cfg = config.load()?;
            if let Some(n) = epochs {
                cfg.synth.recording.n_epochs = n;
                cfg.deepnet.corpus.n_epochs = n;
            }
            cfg.validate()?;
            guard(force, &[out.join(pipeline::MANIFEST_FILE)])?;
            let m = pipeline::simulate(&cfg, recording, &out, !no_frames)?;
            info!("wrote {} ({} frames) to {}", m.id, m.n_frames, out.display());
        }
        Command::ExtractActivity { config, frames, manifest, corners, out } => {
            let cfg = config.load()?;
            guard(force, std::slice::from_ref(&out))?;
            let bed = match (manifest, corners) {
                (Some(m), _) => io::read_json::<SimulationManifest>(&m)?.bed,
                (None, Some(c)) => {
                    let v = &cfg.synth.recording.video;
                    BedGeometry::from_corners(parse_corners(&c)?, v.canonical_width, v.canonical_height)?
                }
                (None, None) => return Err(Error::Config("pass --manifest or --corners".into())),
            };
            let n = count_frames(&frames)?;
            let source = io::PgmDir::open(&frames, n)?;
            let a = activity_from_frames(&source, &bed, &bed.homography()?, &cfg.flow)?;
            io::write_activity(&out, &a)?;
            info!("{} frames -> {} activity samples", n, a.len());
        }
        Command::ExtractVitals { config, ecg, rip_abd, rip_thor, ppg_hr, out } => {
            let cfg = config.load()?;
            guard(force, &[out.join("hr.csv"), out.join("br.csv")])?;
            let (ecg, ecg_fs) = io::read_f32(&ecg)?;
            let (abd, abd_fs) = io::read_f32(&rip_abd)?;
            let (thor, thor_fs) = io::read_f32(&rip_thor)?;
            if abd_fs != thor_fs {
                return Err(Error::DimMismatch(format!("RIP bands sampled at {abd_fs} and {thor_fs} Hz")));
            }
            let ppg = io::read_vitals(&ppg_hr, VitalKind::HeartRate)?;
            let (hr, br) = pipeline::contact_vitals(&ecg, ecg_fs, &abd, &thor, abd_fs, ppg.values(), &cfg.deepnet.corpus)?;
            io::write_vitals(&out.join("hr.csv"), &hr)?;
            io::write_vitals(&out.join("br.csv"), &br)?;
            info!("{} s of vitals written to {}", hr.len(), out.display());
        }
        Command::Featurize { config, activity, hr, br, epochs, out } => {
            let cfg = config.load()?;
            guard(force, std::slice::from_ref(&out))?;
            let a: ActivitySeries = io::read_activity(&activity)?;
            let (hr, br) = read_vitals_pair(&hr, &br)?;
            let n = epochs_of(epochs, hr.len())?;
            let m = pipeline::epoch_features(&a, &hr, &br, n, &cfg.features)?;
            io::write_features(&out, &m)?;
            info!("{} epochs x {} features", m.n_rows(), m.n_cols());
        }
        Command::TrainExtractor { config, data, out, raw } => {
            let cfg = config.load()?;
            guard(force, &[out.join(deepnet::MANIFEST_FILE), out.join(deepnet::BLOB_FILE)])?;
            let recs = pipeline::load_recordings(&data)?;
            let model = pipeline::train_extractor(&recs, &cfg, !raw)?;
            model.save(&out)?;
            info!("extractor trained on {} recordings, best epoch {}", recs.len(), model.best_epoch);
        }
        Command::DeepFeatures { model, hr, br, epochs, out } => {
            guard(force, std::slice::from_ref(&out))?;
            let m = SavedModel::load(&model)?;
            let (hr, br) = read_vitals_pair(&hr, &br)?;
            let n = epochs_of(epochs, hr.len())?;
            let rows = deepnet::extract_deep_features(&m.model, &m.stats, &hr, &br, n, m.zero_fill)?;
            let fm = FeatureMatrix::from_rows(deep_feature_names(m.model.config().feature_dim), &rows)?;
            io::write_features(&out, &fm)?;
            info!("{} epochs x {} deep features", fm.n_rows(), fm.n_cols());
        }
        Command::TrainClassifier { config, features, deep, labels, scheme, out } => {
            let cfg = config.load()?;
            guard(force, std::slice::from_ref(&out))?;
            if labels.len() != features.len() || (!deep.is_empty() && deep.len() != features.len()) {
                return Err(Error::LengthMismatch(format!(
                    "{} feature files, {} deep files, {} label files",
                    features.len(),
                    deep.len(),
                    labels.len()
                )));
            }
            let mut parts = Vec::new();
            let mut y = Vec::new();
            for (i, (f, l)) in features.iter().zip(&labels).enumerate() {
                let mut m = io::read_features(f, None)?;
                if let Some(d) = deep.get(i) {
                    m = FeatureMatrix::hstack(&[&m, &io::read_features(d, None)?])?;
                }
                let h = io::read_hypnogram(l)?;
                if h.len() != m.n_rows() {
                    return Err(Error::LengthMismatch(format!(
                        "{}: {} epochs, {}: {} rows",
                        l.display(),
                        h.len(),
                        f.display(),
                        m.n_rows()
                    )));
                }
                y.extend(map_hypnogram(&h, scheme).labels);
                parts.push(m);
            }
            let x = FeatureMatrix::vstack(&parts.iter().collect::<Vec<_>>())?;
            let fc = forest::ForestConfig { seed: rng::derive(cfg.seed, "cli/forest"), ..cfg.forest.clone() };
            let model: Forest = forest::fit(&x, &y, scheme.n_classes(), &fc)?;
            model.save(&out)?;
            match model.oob_accuracy {
                Some(a) => info!("forest on {} epochs, out-of-bag accuracy {a:.3}", x.n_rows()),
                None => info!("forest on {} epochs", x.n_rows()),
            }
        }
        Command::Evaluate { config, study, out } => {
            let cfg = config.load()?;
            guard(force, std::slice::from_ref(&out))?;
            let recs = pipeline::load_study(&study)?;
            let outcome = pipeline::evaluate(&recs, &cfg)?;
            pipeline::write_evaluation(&out, &outcome, &recs)?;
            summarize(&outcome.report);
        }
        Command::Run { config, out } => {
            let cfg = config.load()?;
            guard(force, &[out.join("report.json")])?;
            let e2e = pipeline::end_to_end(&cfg, Some(&out))?;
            summarize(&e2e.outcome.report);
        }
        Command::DefaultConfig => print!("{}", PipelineConfig::default().to_json()),
    }
    Ok(())
}

fn summarize(report: &somnoflow::eval::StudyReport) {
    for b in &report.blocks {
        info!("{}: kappa {:.3} +/- {:.3}, accuracy {:.3}", b.name, b.kappa.mean, b.kappa.std, b.accuracy.mean);
    }
}

fn parse_corners(text: &str) -> Result<[[f64; 2]; 4]> {
    let v = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("--corners: {e}")))?;
    if v.len() != 8 || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("--corners needs 8 finite numbers, got {}", v.len())));
    }
    Ok([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]], [v[6], v[7]]])
}

fn set_threads(n: Option<usize>) {
    let Some(n) = n else { return };
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        warn!("could not size thread pool: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        warn!("built without the parallel feature; --threads {n} ignored");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.version {
        println!("somnoflow {} (format version {FORMAT_VERSION})", env!("CARGO_PKG_VERSION"));
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.command else {
        eprintln!("error: no subcommand given (see --help)");
        return ExitCode::from(1);
    };
    set_threads(cli.threads);
    match execute(cmd, cli.force) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!("\n  caused by: {s}"));
                }
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
