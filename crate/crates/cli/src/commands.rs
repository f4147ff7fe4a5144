//! Subcommand implementations. Each returns `Err(CliError)` carrying the
//! process exit code class.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use affmt_annotation::{Store, StoreError};
use affmt_core::dataset::{dataset_stats, split_subject_independent, SplitFractions, SplitName, AU_IDS};
use affmt_core::metrics::{render_table, MetricReport};
use affmt_core::preprocess::corpus::{list_videos, write_corpus, write_split};
use affmt_core::preprocess::synth::{synth_corpus, SynthConfig};
use affmt_core::preprocess::{encode_png, Resolution};
use affmt_nn::Tensor;
use affmt_train::checkpoint::{read_manifest, CheckpointKind};
use affmt_train::data::load_split;
use affmt_train::{GanTrainer, MtTrainer, TrainError};
use image::{Rgb, RgbImage};

use crate::experiment::{run_experiment, ExperimentResults, ExperimentSpec, RunOptions};
use crate::schema;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub type CmdResult<T = ()> = Result<T, CliError>;

pub fn synth_data(out: &Path, config: &SynthConfig, required_annotators: usize) -> CmdResult {
    if config.subjects == 0 || config.frames_per_video == 0 || config.videos_per_subject == 0 {
        return Err(validation("subjects, videos per subject and frames must all be positive"));
    }
    if config.annotators == 0 {
        return Err(validation("need at least one annotator"));
    }
    let corpus = synth_corpus(config);
    write_corpus(&corpus, out, required_annotators).map_err(runtime)?;
    println!(
        "wrote {} videos x {} frames at {}px to {}",
        corpus.videos.len(),
        config.frames_per_video,
        config.resolution.side(),
        out.display()
    );
    Ok(())
}

fn open_store(root: &Path, required_annotators: usize) -> CmdResult<Store> {
    Store::open(root, required_annotators).map_err(|e| match e {
        StoreError::MissingRoot(p) => {
            validation(format!("store {} does not exist; create a corpus with `affmt synth-data --out {}`", p.display(), p.display()))
        }
        other => validation(other),
    })
}

/// Re-runs consolidation for every video and prints label statistics.
pub fn consolidate(corpus: &Path, required_annotators: usize) -> CmdResult {
    let store = open_store(corpus, required_annotators)?;
    let videos = store.list_videos().map_err(runtime)?;
    if videos.is_empty() {
        return Err(validation(format!("no videos under {}; run `affmt synth-data` first", corpus.display())));
    }
    let mut all = Vec::new();
    for v in &videos {
        let (frames, _) = store.run_consolidation(&v.meta.video_id).map_err(runtime)?;
        all.extend(frames);
    }
    let stats = dataset_stats(&all, 10);
    println!("consolidated {} videos, {} frames (required annotators: {required_annotators})", videos.len(), stats.frames);
    println!("AU-labelled frames: {}, with an active AU: {}", stats.au_labelled_frames, stats.au_active_frames);
    for (au, n) in AU_IDS.iter().zip(stats.au_counts) {
        println!("  AU{au:<2} {n}");
    }
    println!("expression-labelled frames: {}, VA-labelled frames: {}", stats.expression_labelled_frames, stats.va_labelled_frames);
    Ok(())
}

pub fn split(corpus: &Path, fractions: [f64; 3], seed: u64) -> CmdResult {
    let fractions = SplitFractions::new(fractions[0], fractions[1], fractions[2]).map_err(validation)?;
    let metas = list_videos(corpus).map_err(|e| {
        validation(format!("cannot list videos in {}: {e}; run `affmt synth-data` first", corpus.display()))
    })?;
    if metas.is_empty() {
        return Err(validation(format!("no videos under {}; run `affmt synth-data` first", corpus.display())));
    }
    let manifest = split_subject_independent(&metas, fractions, seed).map_err(validation)?;
    write_split(corpus, &manifest).map_err(runtime)?;
    println!(
        "split {} videos: train {}, val {}, test {}",
        metas.len(),
        manifest.train.len(),
        manifest.validation.len(),
        manifest.test.len()
    );
    Ok(())
}

/// Runs an experiment and writes `results.json` and `results.txt` to `out`.
pub fn run(spec_path: &Path, out: &Path, save_checkpoints: bool) -> CmdResult<ExperimentResults> {
    let spec = ExperimentSpec::load(spec_path)?;
    let results = run_experiment(&spec, &RunOptions { out_dir: Some(out.to_path_buf()), save_checkpoints })?;
    let json = results.to_json();
    let value: serde_json::Value = serde_json::from_str(&json).map_err(runtime)?;
    let errors = schema::validate(&schema::schema(spec.family), &value);
    if !errors.is_empty() {
        return Err(runtime(format!("results drifted from the {} schema:\n  {}", spec.family.name(), errors.join("\n  "))));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("results.json"), json)?;
    let text = results.render();
    std::fs::write(out.join("results.txt"), &text)?;
    print!("{text}");
    Ok(results)
}

pub fn evaluate(checkpoint: &Path, corpus: &Path, split: SplitName, out: Option<&Path>) -> CmdResult<MetricReport> {
    let manifest = read_manifest(checkpoint)?;
    let report = match manifest.kind {
        CheckpointKind::Gan => {
            let mut t = GanTrainer::load(checkpoint, None)?;
            let clips = load_split(corpus, split, t.config.resolution(), t.config.required_annotators)?;
            t.evaluate(&clips)?
        }
        CheckpointKind::Multitask => {
            let mut t = MtTrainer::load(checkpoint, None)?;
            let clips = load_split(corpus, split, t.config.resolution()?, t.config.required_annotators)?;
            t.evaluate(&clips)?
        }
    };
    print!("{}", render_table(&[(format!("{split:?}").to_lowercase(), report.clone())]));
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(&report).map_err(runtime)?)?;
    }
    Ok(report)
}

fn to_rgb(images: &Tensor, i: usize) -> RgbImage {
    let s = images.shape();
    let (h, w) = (s[1], s[2]);
    let px = &images.data()[i * h * w * 3..(i + 1) * h * w * 3];
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let o = (y as usize * w + x as usize) * 3;
        let c = |v: f32| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
        Rgb([c(px[o]), c(px[o + 1]), c(px[o + 2])])
    })
}

/// Grid shape for `n` tiles: as square as possible, rows filled first.
pub fn grid_dims(n: usize) -> (usize, usize) {
    let cols = (n as f64).sqrt().ceil() as usize;
    (n.div_ceil(cols.max(1)), cols)
}

/// Writes `sample_NNN.png` for each generated image plus `grid.png`.
pub fn sample(checkpoint: &Path, n: usize, out: &Path, seed: u64) -> CmdResult<Vec<PathBuf>> {
    if n == 0 {
        return Err(validation("sample count must be positive"));
    }
    let manifest = read_manifest(checkpoint)?;
    if manifest.kind != CheckpointKind::Gan {
        return Err(validation(format!(
            "{} holds a {:?} checkpoint; sampling needs a GAN checkpoint",
            checkpoint.display(),
            manifest.kind
        )));
    }
    let mut t = GanTrainer::load(checkpoint, None)?;
    let images = t.sample(n, seed)?;
    let side = images.shape()[1] as u32;
    std::fs::create_dir_all(out)?;
    let (rows, cols) = grid_dims(n);
    let mut grid = RgbImage::new(cols as u32 * side, rows as u32 * side);
    let mut written = Vec::with_capacity(n + 1);
    for i in 0..n {
        let img = to_rgb(&images, i);
        let (r, c) = ((i / cols) as u32, (i % cols) as u32);
        image::imageops::replace(&mut grid, &img, i64::from(c * side), i64::from(r * side));
        let p = out.join(format!("sample_{i:03}.png"));
        std::fs::write(&p, encode_png(&img))?;
        written.push(p);
    }
    let p = out.join("grid.png");
    std::fs::write(&p, encode_png(&grid))?;
    written.push(p);
    println!("wrote {n} samples and a {rows}x{cols} grid to {}", out.display());
    Ok(written)
}

pub fn serve_annotation(store: &Path, required_annotators: usize, addr: SocketAddr, ui: Option<PathBuf>) -> CmdResult {
    let store = Arc::new(open_store(store, required_annotators)?);
    if let Some(dir) = ui.as_ref().filter(|d| !d.is_dir()) {
        return Err(validation(format!("UI directory {} does not exist", dir.display())));
    }
    let app = affmt_annotation::router(store.clone(), ui);
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(runtime)?;
        println!("serving {} on http://{}", store.root().display(), listener.local_addr().map_err(runtime)?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(runtime)
    })
}

pub fn parse_resolution(v: u32) -> CmdResult<Resolution> {
    Resolution::try_from(v).map_err(validation)
}
