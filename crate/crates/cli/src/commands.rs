use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use candle_core::{DType, Device, Tensor};
use mugan_core::attributes::ATTRIBUTE_NAMES;
use mugan_core::data::synthetic::{generate, write_celeba_layout, SyntheticConfig};
use mugan_core::data::{
    load_index, to_rgb_image, DirectorySource, ATTR_FILE, IMAGE_DIR, PARTITION_FILE, RAW_HEIGHT, RAW_WIDTH,
};
use mugan_core::evaluation::reference_rows;
use mugan_core::networks::parse_variant_list;
use mugan_core::training::{
    checkpoint_config, classifier_accuracy, edit_grid, load_classifier, load_generator, save_classifier, save_grid,
    ClassifierTrainConfig, ClassifierTrainer,
};
use mugan_core::{
    attr_accuracy, eval_reconstruction, labels_tensor, load_checkpoint, render_report, AttrClassifier,
    AttributeVector, ClassifierConfig, Dataset, EvalReport, Generator, Preprocess, SplitSelection, Trainer,
    VariantSpec,
};
use serde_json::json;

use crate::config::{data_root_checked, TrainSettings};
use crate::manifest::RunManifest;
use crate::{AblateCmd, ClassifierCmd, EditCmd, EvalCmd, EvalMode, SynthCmd, TrainCmd};

/// Preprocessed images are cached when they fit in this many bytes.
const CACHE_BUDGET: usize = 1 << 30;

fn open_dataset(root: &Path, preprocess: Preprocess, limit: Option<usize>) -> Result<Dataset> {
    let mut index = load_index(&root.join(ATTR_FILE), &root.join(PARTITION_FILE))?;
    if let Some(n) = limit {
        index.records.truncate(n);
    }
    if index.is_empty() {
        bail!("no records under {}", root.display());
    }
    let bytes = index.len() * 3 * 4 * (preprocess.size as usize).pow(2);
    log::info!("{} records from {}", index.len(), root.display());
    Ok(Dataset::new(index, Box::new(DirectorySource::new(root.join(IMAGE_DIR))), preprocess)?
        .with_cache(bytes <= CACHE_BUDGET))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn evaluate(
    gen: &Generator,
    clf: Option<&AttrClassifier>,
    reconstruction: bool,
    dataset: &Dataset,
    records: &[usize],
    batch_size: usize,
    report: &mut EvalReport,
) -> Result<()> {
    if let Some(clf) = clf {
        let acc = attr_accuracy(gen, clf, dataset, records, batch_size)?;
        report.mean_accuracy = Some(acc.mean);
        report.accuracy = Some(acc.per_attribute);
    }
    if reconstruction {
        let (p, s) = eval_reconstruction(gen, dataset, records, batch_size)?;
        report.psnr = Some(p);
        report.ssim = Some(s);
    }
    Ok(())
}

fn check_classifier(clf: &AttrClassifier, image_size: usize) -> Result<()> {
    if !clf.config().covers_all_attributes() {
        bail!(
            "classifier predicts {} attribute(s); accuracy needs all {}",
            clf.config().attributes.len(),
            ATTRIBUTE_NAMES.len()
        );
    }
    if clf.config().image_size != image_size {
        bail!(
            "classifier was trained at {}px but the generator works at {}px",
            clf.config().image_size,
            image_size
        );
    }
    Ok(())
}

fn print_reports(reports: &[EvalReport]) -> Result<String> {
    let rendered = render_report(reports)?;
    println!("{}", rendered.table);
    println!("published full-scale reference:");
    println!("{}", render_report(&reference_rows())?.table);
    Ok(rendered.tsv)
}

pub fn train(cmd: TrainCmd) -> Result<()> {
    let settings = TrainSettings::load(cmd.config.as_deref(), &cmd.settings)?;
    let config = settings.resolve(Some(cmd.output.clone()))?;
    let root = settings.data_root()?;
    let manifest = RunManifest::start(
        "train",
        Some(config.seed),
        Some(config.variant.clone()),
        json!({ "train": &config, "data_root": &root, "limit": settings.limit, "resume": &cmd.resume }),
        &cmd.output.join("manifest.json"),
    )?;
    let dataset = open_dataset(&root, config.preprocess(), settings.limit)?.with_hflip(config.hflip);
    let mut trainer = match &cmd.resume {
        Some(path) => Trainer::resume(config, path)?,
        None => Trainer::new(config)?,
    };
    println!("epoch\td_steps\tg_steps\tmean_total_d\tmean_rec\tprobe_rec\tseconds");
    for s in trainer.run(&dataset)? {
        println!(
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.1}",
            s.epoch, s.d_steps, s.g_steps, s.mean_total_d, s.mean_rec, s.probe_rec, s.seconds
        );
    }
    println!("checkpoint: {}", cmd.output.join("checkpoints").join("last.ckpt").display());
    manifest.finish()
}

fn parse_label_bits(text: &str) -> Result<AttributeVector> {
    let bits: Vec<u8> = text
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| c.to_digit(10).map_or(u8::MAX, |d| d as u8))
        .collect();
    Ok(AttributeVector::from_bits(&bits)?)
}

fn image_tensor(pixels: Vec<f32>, size: usize) -> Result<Tensor> {
    Ok(Tensor::from_vec(pixels, (1, 3, size, size), &Device::Cpu)?)
}

pub fn edit(cmd: EditCmd) -> Result<()> {
    let ckpt = load_checkpoint(&cmd.checkpoint)?;
    let gen = load_generator(&ckpt, None)?;
    let preprocess = checkpoint_config(&ckpt)?.preprocess();

    let (raw, source, origin) = match (&cmd.image, &cmd.record) {
        (Some(path), None) => {
            let labels = cmd
                .labels
                .as_deref()
                .ok_or_else(|| anyhow!("--image needs --labels (13 binary digits: {})", ATTRIBUTE_NAMES.join(", ")))?;
            let raw = image::open(path).with_context(|| format!("reading {}", path.display()))?.to_rgb8();
            (raw, parse_label_bits(labels)?, path.display().to_string())
        }
        (None, Some(name)) => {
            let root = data_root_checked(cmd.data_root.as_deref())?;
            let index = load_index(&root.join(ATTR_FILE), &root.join(PARTITION_FILE))?;
            let record = index
                .find(name)
                .ok_or_else(|| anyhow!("record `{name}` is not in {}", root.join(ATTR_FILE).display()))?;
            let path = root.join(IMAGE_DIR).join(name);
            let raw = image::open(&path).with_context(|| format!("reading {}", path.display()))?.to_rgb8();
            (raw, record.labels, name.clone())
        }
        _ => bail!("give exactly one of --image or --record"),
    };
    if raw.dimensions() != (RAW_WIDTH, RAW_HEIGHT) {
        bail!(
            "{origin} is {}x{}; expected the aligned {RAW_WIDTH}x{RAW_HEIGHT} layout",
            raw.width(),
            raw.height()
        );
    }

    let mut target = source;
    for edits in &cmd.set {
        target.apply_edits(edits)?;
    }
    let manifest = RunManifest::start(
        "edit",
        None,
        Some(gen.variant().to_string()),
        json!({ "checkpoint": &cmd.checkpoint, "input": &origin, "source": source.to_string(), "target": target.to_string() }),
        &cmd.output.with_extension("manifest.json"),
    )?;

    let size = gen.arch().image_size;
    let x = image_tensor(preprocess.apply(&raw)?, size)?;
    let out = gen.generate(&x, &labels_tensor(&[target], DType::F32)?)?;
    let pixels: Vec<f32> = out.flatten_all()?.to_vec1()?;
    let edited = to_rgb_image(&pixels, size as u32)?;
    if let Some(dir) = cmd.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    edited.save(&cmd.output).with_context(|| format!("writing {}", cmd.output.display()))?;
    println!("source  {source}");
    println!("target  {target}");
    println!("wrote {}", cmd.output.display());

    if let Some(grid_path) = &cmd.grid {
        let grid = edit_grid(&gen, &x, &[source])?;
        save_grid(&grid, grid_path)?;
        println!("wrote {}", grid_path.display());
    }
    manifest.finish()
}

pub fn eval(cmd: EvalCmd) -> Result<()> {
    let ckpt = load_checkpoint(&cmd.checkpoint)?;
    let expected = cmd.variant.as_deref().map(VariantSpec::parse).transpose()?;
    let gen = load_generator(&ckpt, expected.as_ref())?;
    let train_config = checkpoint_config(&ckpt)?;
    let clf = match (cmd.mode, &cmd.classifier) {
        (EvalMode::Reconstruction, _) => None,
        (_, Some(path)) => {
            let clf = load_classifier(path)?;
            check_classifier(&clf, gen.arch().image_size)?;
            Some(clf)
        }
        (_, None) => bail!("accuracy needs --classifier (or use --mode reconstruction)"),
    };
    let split = SplitSelection::parse(&cmd.split)?;
    let root = data_root_checked(cmd.data_root.as_deref())?;
    let manifest = RunManifest::start(
        "eval",
        Some(train_config.seed),
        Some(gen.variant().to_string()),
        json!({
            "checkpoint": &cmd.checkpoint,
            "classifier": &cmd.classifier,
            "mode": cmd.mode,
            "split": split,
            "limit": cmd.limit,
            "batch_size": cmd.batch_size,
            "preprocess": train_config.preprocess(),
        }),
        &cmd.output.join("manifest.json"),
    )?;

    let dataset = open_dataset(&root, train_config.preprocess(), None)?;
    let mut records = dataset.index().select(split);
    if let Some(n) = cmd.limit {
        records.truncate(n);
    }
    if records.is_empty() {
        bail!("split `{}` has no records", cmd.split);
    }
    let mut report = EvalReport::new(
        gen.variant().to_string(),
        cmd.checkpoint.display().to_string(),
        cmd.split.clone(),
        records.len(),
    );
    evaluate(
        &gen,
        clf.as_ref(),
        cmd.mode != EvalMode::Accuracy,
        &dataset,
        &records,
        cmd.batch_size,
        &mut report,
    )?;
    let tsv = print_reports(std::slice::from_ref(&report))?;
    write_text(&cmd.output.join("report.tsv"), &tsv)?;
    write_text(&cmd.output.join("report.txt"), &render_report(&[report])?.table)?;
    manifest.finish()
}

fn parse_groups(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|g| g.trim().parse::<usize>().with_context(|| format!("bad group size `{g}`")))
        .collect()
}

pub fn train_classifier(cmd: ClassifierCmd) -> Result<()> {
    let mut clf_config = ClassifierConfig {
        image_size: cmd.image_size,
        base_width: cmd.base_width,
        groups: parse_groups(&cmd.groups)?,
        ..ClassifierConfig::full()
    };
    if let Some(list) = &cmd.attributes {
        let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        clf_config = clf_config.with_attributes(&names)?;
    }
    let train_config = ClassifierTrainConfig {
        epochs: cmd.epochs,
        batch_size: cmd.batch_size,
        lr: cmd.lr,
        seed: cmd.seed,
        hflip: cmd.hflip,
        ..Default::default()
    };
    let preprocess = Preprocess {
        crop: cmd.crop,
        size: cmd.image_size as u32,
    };
    preprocess.validate()?;
    let root = data_root_checked(cmd.data_root.as_deref())?;
    let manifest = RunManifest::start(
        "train-classifier",
        Some(cmd.seed),
        None,
        json!({ "classifier": &clf_config, "training": &train_config, "preprocess": preprocess, "limit": cmd.limit }),
        &cmd.output.join("manifest.json"),
    )?;

    let dataset = open_dataset(&root, preprocess, cmd.limit)?;
    let mut trainer = ClassifierTrainer::new(clf_config, train_config)?;
    for (e, loss) in trainer.run(&dataset)?.iter().enumerate() {
        println!("epoch {e}\tloss {loss:.4}");
    }
    let clf = trainer.into_classifier();
    let path = cmd.output.join("classifier.ckpt");
    save_classifier(&clf, cmd.seed, &path)?;

    let test = dataset.index().select(SplitSelection::Test);
    if test.is_empty() {
        println!("no test records; skipping accuracy");
    } else {
        let acc = classifier_accuracy(&clf, &dataset, &test, cmd.batch_size)?;
        let mut tsv = String::from("attribute\ttest_accuracy\n");
        for (name, a) in clf.config().attributes.iter().zip(&acc) {
            println!("{name:>18}  {:.2}%", a * 100.0);
            tsv.push_str(&format!("{name}\t{a:.6}\n"));
        }
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        println!("{:>18}  {:.2}% over {} test images", "mean", mean * 100.0, test.len());
        write_text(&cmd.output.join("accuracy.tsv"), &tsv)?;
    }
    println!("wrote {}", path.display());
    manifest.finish()
}

fn variant_dir(spec: &VariantSpec) -> String {
    spec.id.replace(',', "_")
}

pub fn ablate(cmd: AblateCmd) -> Result<()> {
    let variants = parse_variant_list(&cmd.variants)?;
    if cmd.settings.variant.is_some() {
        bail!("ablate takes its variants from --variants, not --variant");
    }
    let settings = TrainSettings::load(cmd.config.as_deref(), &cmd.settings)?;
    let base = settings.resolve(None)?;
    let root = settings.data_root()?;
    let clf = cmd.classifier.as_deref().map(load_classifier).transpose()?;
    if let Some(c) = &clf {
        check_classifier(c, base.arch.image_size)?;
    }
    let ids: Vec<String> = variants.iter().map(|v| v.id.clone()).collect();
    let manifest = RunManifest::start(
        "ablate",
        Some(base.seed),
        Some(ids.join(" ")),
        json!({ "variants": ids, "train": &base, "classifier": &cmd.classifier, "eval_limit": cmd.eval_limit, "limit": settings.limit }),
        &cmd.output.join("manifest.json"),
    )?;

    let dataset = open_dataset(&root, base.preprocess(), settings.limit)?.with_hflip(base.hflip);
    let mut test = dataset.index().select(SplitSelection::Test);
    if let Some(n) = cmd.eval_limit {
        test.truncate(n);
    }
    if test.is_empty() {
        bail!("no test records to evaluate on");
    }

    let mut reports = Vec::with_capacity(variants.len());
    for spec in &variants {
        let dir: PathBuf = cmd.output.join(variant_dir(spec));
        let mut config = base.clone();
        config.variant = spec.id.clone();
        config.output_dir = Some(dir.clone());
        log::info!("training {}", spec.id);
        let mut trainer = Trainer::new(config)?;
        trainer.run(&dataset)?;
        let mut report = EvalReport::new(
            spec.id.clone(),
            dir.join("checkpoints").join("last.ckpt").display().to_string(),
            "test",
            test.len(),
        );
        evaluate(trainer.generator(), clf.as_ref(), true, &dataset, &test, base.batch_size, &mut report)?;
        reports.push(report);
    }
    let tsv = print_reports(&reports)?;
    write_text(&cmd.output.join("ablation.tsv"), &tsv)?;
    write_text(&cmd.output.join("ablation.txt"), &render_report(&reports)?.table)?;
    manifest.finish()
}

pub fn synth(cmd: SynthCmd) -> Result<()> {
    let config = SyntheticConfig {
        val_fraction: cmd.val_fraction,
        test_fraction: cmd.test_fraction,
        ..SyntheticConfig::new(cmd.count, cmd.seed)
    };
    let faces = generate(&config)?;
    write_celeba_layout(&cmd.output, &faces)?;
    let index = load_index(&cmd.output.join(ATTR_FILE), &cmd.output.join(PARTITION_FILE))?;
    let [train, val, test] = index.split_sizes();
    println!(
        "wrote {} images to {} (train {train}, val {val}, test {test})",
        faces.len(),
        cmd.output.display()
    );
    Ok(())
}
