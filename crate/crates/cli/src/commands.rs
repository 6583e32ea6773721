use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dfsmc::ingest::{convert_tree, load_samples, read_image, stratified_split, WidthSchedule};
use dfsmc::models::{load_weights, load_weights_as, save_weights, train_model};
use dfsmc::pipeline::{
    compare_report, dfsmc_train, evaluate_dfsmc, evaluate_softmax, train_fused_svm, EvalReport,
};
use dfsmc::svm::{load_svm, save_svm};
use dfsmc::{augment, synth, verify};
use dfsmc::{
    build_model, dfsmc_predict, replace_head, Arch, DatasetManifest, FeatureCache, RunConfig, Split,
};

use crate::{Cli, Command, PipelineModels, Scheme, TrainArgs};

/// Fine-tuning starts from a tenth of the configured learning rate.
const FINETUNE_LR_FACTOR: f64 = 0.1;

/// A mistake in how the program was invoked rather than in the data.
#[derive(Debug)]
pub struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.downcast_ref::<UsageError>().is_some()
            || matches!(
                cause.downcast_ref::<dfsmc::Error>(),
                Some(dfsmc::Error::Config(_))
            )
    })
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("DFSMC_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        usage(format!(
            "DFSMC_THREADS must be a non-negative integer, got {value:?}"
        ))
    })?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::read(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::read(path).with_context(|| format!("reading manifest {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Convert { input, output } => {
            let written = convert_tree(&input, &output, &WidthSchedule::default())?;
            println!(
                "converted {} files into {}",
                written.len(),
                output.display()
            );
        }
        Command::Split {
            data,
            ratio,
            seed,
            out,
        } => {
            let data = data.unwrap_or(config.data_dir.clone());
            let ratio = ratio.unwrap_or(config.ratio);
            let seed = seed.unwrap_or(config.seed);
            let out = out.unwrap_or_else(|| config.work_dir.join("manifest.tsv"));
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(usage(format!("--ratio must be in (0, 1], got {ratio}")));
            }
            let manifest = stratified_split(&DatasetManifest::build(&data)?, ratio, seed)?;
            create_parent(&out)?;
            manifest.write(&out)?;
            println!(
                "{} families, {} train, {} test -> {}",
                manifest.family_count,
                manifest.count(Split::Train),
                manifest.count(Split::Test),
                out.display()
            );
        }
        Command::Augment {
            manifest,
            copies,
            seed,
            out,
        } => {
            let copies = copies.unwrap_or(config.copies);
            let seed = seed.unwrap_or(config.seed);
            let out = out.unwrap_or_else(|| augmented_manifest_path(&manifest));
            if out == manifest {
                return Err(usage("--out must differ from --manifest"));
            }
            let augmented = augment::augment_split(&read_manifest(&manifest)?, copies, seed)?;
            create_parent(&out)?;
            augmented.write(&out)?;
            println!(
                "{} train records -> {}",
                augmented.count(Split::Train),
                out.display()
            );
        }
        Command::Train(args) => train(&mut config, args)?,
        Command::Features {
            weights,
            manifest,
            split,
            out,
        } => {
            let model =
                load_weights(&weights).with_context(|| format!("loading {}", weights.display()))?;
            let manifest = read_manifest(&manifest)?;
            let samples = load_samples(&manifest, split.into(), model.config.input)?;
            let cache = FeatureCache::extract(&model, &samples)?;
            create_parent(&out)?;
            cache.write(&out)?;
            println!(
                "{} x {} {} features -> {}",
                cache.len(),
                cache.dim(),
                cache.source,
                out.display()
            );
        }
        Command::FuseSvm {
            resnet_cache,
            densenet_cache,
            cost,
            out,
        } => {
            if let Some(c) = cost {
                config.set("cost", &c.to_string())?;
                config.validate()?;
            }
            let resnet = FeatureCache::read(&resnet_cache)
                .with_context(|| format!("reading {}", resnet_cache.display()))?;
            let densenet = FeatureCache::read(&densenet_cache)
                .with_context(|| format!("reading {}", densenet_cache.display()))?;
            let svm = train_fused_svm(&resnet, &densenet, &config.solver_config())?;
            create_parent(&out)?;
            save_svm(&svm, &out)?;
            println!(
                "{} classes, {} fused features, C={} -> {}",
                svm.class_count(),
                svm.dim(),
                svm.cost,
                out.display()
            );
        }
        Command::Predict {
            models,
            image,
            manifest,
        } => {
            let (svm, resnet, densenet) = load_pipeline(&models)?;
            let img = read_image(&image)?;
            let prediction = dfsmc_predict(&svm, &resnet, &densenet, &img)?;
            let name = match manifest {
                Some(m) => read_manifest(&m)?
                    .family_names()
                    .get(prediction.class)
                    .cloned()
                    .context("predicted class is outside the manifest's families")?,
                None => prediction.class.to_string(),
            };
            let margins: Vec<String> = prediction
                .margins
                .iter()
                .map(|m| format!("{m:.6}"))
                .collect();
            println!("class={} family={name}", prediction.class);
            println!("margins={}", margins.join(","));
        }
        Command::Eval {
            models,
            manifest,
            out,
            baselines,
        } => {
            let (svm, resnet, densenet) = load_pipeline(&models)?;
            let manifest = read_manifest(&manifest)?;
            let report = evaluate_dfsmc(&svm, &resnet, &densenet, &manifest)?;
            report.write(&out)?;
            print!("{}", report.summary());
            if baselines {
                let mut reports = vec![("dfsmc".to_string(), report)];
                for model in [&resnet, &densenet] {
                    let r = evaluate_softmax(model, &manifest)?;
                    r.write(&out.join(format!("{}-softmax", model.arch)))?;
                    reports.push((format!("{}-softmax", model.arch), r));
                }
                compare_report(&reports, &out.join("compare.csv"))?;
                for (name, r) in &reports[1..] {
                    println!(
                        "{name}: accuracy={:.4} macro_f1={:.4}",
                        r.accuracy, r.macro_f1
                    );
                }
            }
        }
        Command::Run { data, out } => run_all(&config, data.as_deref(), out.as_deref())?,
        Command::Gradcheck { seed } => {
            let reports = verify::gradcheck_suite(seed);
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                bail!("{failed} gradient check(s) failed");
            }
        }
        Command::Synth {
            out,
            per_class,
            size,
            seed,
        } => {
            if per_class == 0 || size < 4 {
                return Err(usage("--per-class must be positive and --size at least 4"));
            }
            synth::write_texture_dataset(&out, per_class, size, seed.unwrap_or(config.seed))?;
            println!(
                "{} families x {per_class} images -> {}",
                synth::TEXTURE_FAMILIES.len(),
                out.display()
            );
        }
        Command::ShowConfig => print!("{}", config.to_text()),
    }
    Ok(())
}

fn augmented_manifest_path(manifest: &Path) -> PathBuf {
    let stem = manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    manifest.with_file_name(format!("{stem}.aug.tsv"))
}

fn train(config: &mut RunConfig, args: TrainArgs) -> Result<()> {
    for (key, value) in [
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("lr", args.lr.map(|v| v.to_string())),
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
    ] {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    config.validate()?;
    if args.freeze && args.scheme == Scheme::Scratch {
        return Err(usage("--freeze only applies to --scheme finetune"));
    }
    let manifest = read_manifest(&args.manifest)?;
    let mut hyper = config.train_config(args.arch);
    let mut model = match args.scheme {
        Scheme::Scratch => build_model(
            args.arch,
            config.model_config(args.arch, manifest.family_count),
        )?,
        Scheme::Finetune => {
            let source = args
                .source_weights
                .as_deref()
                .ok_or_else(|| usage("--scheme finetune needs --source-weights"))?;
            let pretrained = load_weights_as(args.arch, source)
                .with_context(|| format!("loading {}", source.display()))?;
            hyper.lr *= FINETUNE_LR_FACTOR;
            let head_seed = dfsmc::rng::derive(config.seed, &format!("head/{}", args.arch));
            replace_head(&pretrained, manifest.family_count, args.freeze, head_seed)?
        }
    };
    let report = train_model(&mut model, &manifest, &hyper)?;
    create_parent(&args.out)?;
    save_weights(&model, &args.out)?;
    let last = report.epoch_loss.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} trained for {} epochs ({} steps), final loss {last:.6} -> {}",
        args.arch,
        report.epoch_loss.len(),
        report.steps,
        args.out.display()
    );
    Ok(())
}

fn run_all(config: &RunConfig, data: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let data = data.unwrap_or(&config.data_dir);
    let out = out.unwrap_or(&config.work_dir);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("run.cfg"), config.to_text())
        .with_context(|| format!("writing {}", out.display()))?;

    let split = stratified_split(&DatasetManifest::build(data)?, config.ratio, config.seed)?;
    split.write(&out.join("manifest.tsv"))?;
    log::info!(
        "{} train, {} test",
        split.count(Split::Train),
        split.count(Split::Test)
    );
    let augmented = augment::augment_split(&split, config.copies, config.seed)?;
    augmented.write(&out.join("manifest.aug.tsv"))?;

    let mut nets = Vec::new();
    for arch in [Arch::MiniResNet, Arch::MiniDenseNet] {
        let mut net = build_model(arch, config.model_config(arch, split.family_count))?;
        let report = train_model(&mut net, &augmented, &config.train_config(arch))?;
        log::info!("{arch}: epoch losses {:?}", report.epoch_loss);
        save_weights(&net, &out.join(format!("{arch}.bin")))?;
        nets.push(net);
    }
    let trained = dfsmc_train(
        &augmented,
        &nets[0],
        &nets[1],
        &config.solver_config(),
        Some(&out.join("features")),
    )?;
    save_svm(&trained.svm, &out.join("svm.txt"))?;

    let report_dir = out.join("report");
    let fused = evaluate_dfsmc(&trained.svm, &nets[0], &nets[1], &split)?;
    fused.write(&report_dir)?;
    let mut reports: Vec<(String, EvalReport)> = vec![("dfsmc".into(), fused)];
    for net in &nets {
        let r = evaluate_softmax(net, &split)?;
        r.write(&report_dir.join(format!("{}-softmax", net.arch)))?;
        reports.push((format!("{}-softmax", net.arch), r));
    }
    compare_report(&reports, &report_dir.join("compare.csv"))?;
    for (name, r) in &reports {
        println!(
            "{name}: accuracy={:.4} macro_precision={:.4} macro_recall={:.4} macro_f1={:.4}",
            r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn load_pipeline(
    models: &PipelineModels,
) -> Result<(dfsmc::SvmModel, dfsmc::NetModel, dfsmc::NetModel)> {
    let svm = load_svm(&models.svm).with_context(|| format!("loading {}", models.svm.display()))?;
    let resnet = load_weights_as(Arch::MiniResNet, &models.resnet_weights)
        .with_context(|| format!("loading {}", models.resnet_weights.display()))?;
    let densenet = load_weights_as(Arch::MiniDenseNet, &models.densenet_weights)
        .with_context(|| format!("loading {}", models.densenet_weights.display()))?;
    Ok((svm, resnet, densenet))
}
