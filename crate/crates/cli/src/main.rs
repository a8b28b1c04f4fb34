use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use afnet::harness::{
    ablate, evaluate, run_protocol, scan_name, synthetic_subjects, train, AblationAxis, Dataset, Item, Needs,
};
use afnet::model::{count_params, gradcam, load_checkpoint, save_checkpoint, AfNet, ModelConfig};
use afnet::preprocess::{preprocess_scan, synth_scan, write_pgm, write_ppm, Expression, Scan};
use afnet_cli::{load_config, RunConfig, RunManifest};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

/// Texture/depth expression classifier: data synthesis, preprocessing,
/// training, cross-validation, ablations and Grad-CAM.
#[derive(Parser)]
#[command(name = "afnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic face scans, six expressions per subject.
    Synth {
        #[arg(long)]
        subjects: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        intensity: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Turn a directory of scans into network-ready images and masks.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 224)]
        size: usize,
        /// Also write PPM/PGM previews.
        #[arg(long)]
        previews: bool,
    },
    /// Train one model on a whole dataset and save a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Subject-disjoint repeated k-fold cross-validation.
    Protocol {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate every configuration along one ablation axis.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        /// fusion, ma or positions.
        #[arg(long)]
        axis: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grad-CAM heat map for one dataset item.
    Cam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        item: usize,
        /// Class to explain; defaults to the item's label.
        #[arg(long)]
        target: Option<usize>,
        /// Marked layer such as `fused.layer4` or `texture.layer2`.
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-component parameter counts.
    Params {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Defaults, then the config file, then `--set`, then the dedicated flags.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set widths=8,16,32,64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        for s in &self.sets {
            let Some((k, v)) = s.split_once('=') else { bail!("--set expects KEY=VALUE, got `{s}`") };
            cfg.set(k, v).with_context(|| format!("--set {s}"))?;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = lr;
        }
        if let Some(s) = self.seed {
            cfg.model.seed = s;
        }
        if let Some(s) = self.train_seed {
            cfg.train.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DataArgs {
    /// Directory written by `preprocess`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Generate this many synthetic subjects in memory instead.
    #[arg(long)]
    synthetic: Option<usize>,
}

const SYNTH_INTENSITY: u8 = 4;
const SYNTH_SEED: u64 = 0;

impl DataArgs {
    fn load(&self, size: usize, needs: Needs) -> Result<Dataset> {
        let data = match (&self.data, self.synthetic) {
            (Some(dir), _) => {
                Dataset::load(dir, needs).with_context(|| format!("loading dataset {}", dir.display()))?
            }
            (None, Some(n)) => Dataset::synthetic(n, size, SYNTH_INTENSITY, SYNTH_SEED)?,
            (None, None) => bail!("one of --data or --synthetic is required"),
        };
        if data.size != size {
            bail!("dataset images are {0}x{0} but the model expects {size}x{size}", data.size);
        }
        if data.is_empty() {
            bail!("dataset is empty");
        }
        Ok(data)
    }

    fn describe(&self) -> PathBuf {
        match (&self.data, self.synthetic) {
            (Some(d), _) => d.clone(),
            (None, n) => PathBuf::from(format!(
                "synthetic:subjects={},intensity={SYNTH_INTENSITY},seed={SYNTH_SEED}",
                n.unwrap_or(0)
            )),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, argv: Vec<String>) -> Result<()> {
    match command {
        Command::Synth { subjects, out, intensity, seed } => {
            let mut m = RunManifest::start("synth", argv);
            fs::create_dir_all(&out)?;
            let mut count = 0;
            for subject in synthetic_subjects(subjects, seed) {
                for e in Expression::ALL {
                    let scan = synth_scan(e, subject, intensity)?;
                    scan.save(out.join(format!("{}.scan", scan_name(subject, e))))?;
                    count += 1;
                }
            }
            m.config = vec![
                ("subjects".into(), subjects.to_string()),
                ("intensity".into(), intensity.to_string()),
                ("seed".into(), seed.to_string()),
            ];
            m.outputs.push(out.clone());
            m.finish(&out)?;
            println!("wrote {count} scans to {}", out.display());
        }
        Command::Preprocess { input, out, size, previews } => {
            let mut m = RunManifest::start("preprocess", argv);
            let mut paths: Vec<PathBuf> = fs::read_dir(&input)
                .with_context(|| format!("reading {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "scan"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                bail!("no .scan files in {}", input.display());
            }
            let mut items = Vec::with_capacity(paths.len());
            for p in &paths {
                let scan = Scan::load(p).with_context(|| format!("reading {}", p.display()))?;
                let sample = preprocess_scan(&scan, size).with_context(|| format!("preprocessing {}", p.display()))?;
                let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                if previews {
                    let dir = out.join("previews");
                    fs::create_dir_all(&dir)?;
                    write_ppm(dir.join(format!("{name}_texture.ppm")), &sample.pair.texture)?;
                    write_pgm(dir.join(format!("{name}_depth.pgm")), &sample.pair.depth)?;
                    write_pgm(dir.join(format!("{name}_mask1.pgm")), &sample.masks.mask1)?;
                }
                items.push(Item::from_sample(name, &scan, sample));
            }
            let data = Dataset { size, items };
            data.save(&out)?;
            m.config = vec![("size".into(), size.to_string())];
            m.inputs.push(input);
            m.outputs.push(out.clone());
            m.finish(&out)?;
            println!("preprocessed {} scans at {size}x{size} into {}", data.len(), out.display());
        }
        Command::Train { cfg, data, out } => {
            let rc = cfg.resolve()?;
            let mut m = RunManifest::start("train", argv).with_config(rc.pairs());
            let ds = data.load(rc.model.input_size, Needs::of(&rc.model))?;
            let (params, log) = train(&rc.model, &rc.train, &ds)?;
            save_checkpoint(out.join("checkpoint"), &rc.model, &params)?;
            fs::write(out.join("train_log.csv"), log.to_csv())?;
            fs::write(out.join("resolved.cfg"), rc.to_text())?;
            m.inputs.push(data.describe());
            m.outputs.extend([out.join("checkpoint"), out.join("train_log.csv")]);
            m.finish(&out)?;
            println!(
                "trained {} epochs on {} samples: loss {:.4} -> {:.4}, train accuracy {:.4}",
                log.epochs.len(),
                ds.len(),
                log.initial_loss(),
                log.final_loss(),
                log.epochs.last().map_or(0.0, |e| e.accuracy)
            );
        }
        Command::Eval { checkpoint, data, out } => {
            let m = RunManifest::start("eval", argv);
            let (model, params) = load_checkpoint(&checkpoint)?;
            let ds = data.load(model.input_size, Needs::of(&model))?;
            let (acc, cm) = evaluate(&params, &model, &ds)?;
            println!("accuracy {acc:.6} ({}/{})\n{cm}", cm.trace(), cm.total());
            if let Some(out) = out {
                let mut m = m.with_config(model.to_pairs());
                fs::create_dir_all(&out)?;
                fs::write(out.join("eval_confusion.csv"), cm.to_csv())?;
                cm.to_tensor().save(out.join("eval_confusion.aftn"))?;
                fs::write(out.join("eval_summary.txt"), format!("accuracy={acc:.12}\n"))?;
                m.inputs.extend([checkpoint, data.describe()]);
                m.outputs.push(out.clone());
                m.finish(&out)?;
            }
        }
        Command::Protocol { cfg, data, k, repeats, out } => {
            let rc = cfg.resolve()?;
            let mut m = RunManifest::start("protocol", argv).with_config(rc.pairs());
            let ds = data.load(rc.model.input_size, Needs::of(&rc.model))?;
            let report = run_protocol(&rc.model, &rc.train, &ds, repeats, k)?;
            report.write(&out, "protocol")?;
            fs::write(out.join("resolved.cfg"), rc.to_text())?;
            m.config.extend([("k".into(), k.to_string()), ("repeats".into(), repeats.to_string())]);
            m.inputs.push(data.describe());
            m.outputs.push(out.clone());
            m.finish(&out)?;
            println!("{}", report.summary());
        }
        Command::Ablate { cfg, data, axis, k, repeats, out } => {
            let axis: AblationAxis = axis.parse()?;
            let rc = cfg.resolve()?;
            let mut m = RunManifest::start("ablate", argv).with_config(rc.pairs());
            let ds = data.load(rc.model.input_size, Needs::ALL)?;
            let report = ablate(&ds, axis, &rc.model, &rc.train, repeats, k)?;
            report.write(&out)?;
            m.config.extend([
                ("axis".into(), axis.as_str().into()),
                ("k".into(), k.to_string()),
                ("repeats".into(), repeats.to_string()),
            ]);
            m.inputs.push(data.describe());
            m.outputs.push(out.clone());
            m.finish(&out)?;
            print!("{}", report.to_table());
        }
        Command::Cam { checkpoint, data, item, target, layer, out } => {
            let mut m = RunManifest::start("cam", argv);
            let (model, mut params) = load_checkpoint(&checkpoint)?;
            let needs = Needs::of(&model);
            let ds = data.load(model.input_size, needs)?;
            if item >= ds.len() {
                bail!("item {item} out of range for {} items", ds.len());
            }
            let target = target.unwrap_or(ds.items[item].label);
            let layer = layer.unwrap_or_else(|| default_cam_layer(&model));
            let (input, _) = ds.batch(&[item], needs)?;
            let net = AfNet::new(model.clone())?;
            let map = gradcam(&net, &mut params, &input, 0, target, &layer)?;
            fs::create_dir_all(&out)?;
            write_pgm(out.join("cam.pgm"), &map)?;
            map.save(out.join("cam.aftn"))?;
            if let Some(t) = ds.items[item].texture.as_ref() {
                write_ppm(out.join("input_texture.ppm"), t)?;
            }
            m = m.with_config(model.to_pairs());
            m.config.extend([
                ("item".into(), ds.items[item].name.clone()),
                ("target".into(), target.to_string()),
                ("layer".into(), layer.clone()),
            ]);
            m.inputs.extend([checkpoint, data.describe()]);
            m.outputs.push(out.clone());
            m.finish(&out)?;
            println!("grad-cam of {} for class {target} at {layer} -> {}", ds.items[item].name, out.display());
        }
        Command::Params { cfg, out } => {
            let rc = cfg.resolve()?;
            let counts = count_params(&rc.model);
            let mut text = counts.table();
            text += &format!("total,{}\n", counts.total);
            let frac = |n: usize| 100.0 * n as f64 / counts.total as f64;
            text += &format!(
                "# {:.2} MB as f32; mask attention {:.3}%, importance weights {:.3}%\n",
                counts.bytes() as f64 / 1e6,
                frac(counts.ma_total()),
                frac(counts.iwc_total())
            );
            print!("{text}");
            if let Some(out) = out {
                let mut m = RunManifest::start("params", argv).with_config(rc.pairs());
                fs::create_dir_all(&out)?;
                fs::write(out.join("params.csv"), &text)?;
                m.outputs.push(out.join("params.csv"));
                m.finish(&out)?;
            }
        }
    }
    Ok(())
}

fn default_cam_layer(model: &ModelConfig) -> String {
    if model.fuses_at(afnet::model::Stage::Layer4) {
        "fused.layer4".into()
    } else {
        let branch = AfNet::new(model.clone()).map(|n| n.branches()[0]).unwrap_or("texture");
        format!("{branch}.layer4")
    }
}
