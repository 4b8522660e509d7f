//! Training, evaluation and prediction loops.

use std::path::{Path, PathBuf};

use crate::autograd::Graph;
use crate::checkpoint;
use crate::config::{EvalSplit, RunConfig};
use crate::data::{self, Batch, SamplePair, Split};
use crate::error::{Error, Result};
use crate::loss::{compound_loss, LossBreakdown};
use crate::mask::Mask;
use crate::metrics::{masks_from_logits, Confusion, MetricsReport};
use crate::nn::DamFormer;
use crate::optim::{AdamW, StepOutcome};
use crate::params::ParamStore;

/// File name of the final checkpoint inside the output directory.
pub const FINAL_CHECKPOINT: &str = "model.dfw";
pub const LOG_FILE: &str = "train.log";

/// Runs `f` on a pool with `workers` threads (rayon default when 0).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Samples of `split`, read from the configured directory or synthesized.
pub fn load_split(run: &RunConfig, split: Split) -> Result<Vec<SamplePair>> {
    let (dir, count) = match split {
        Split::Train => (&run.data.train_dir, run.data.train_count),
        Split::Eval => (&run.data.eval_dir, run.data.eval_count),
    };
    let samples = match dir {
        Some(dir) => data::load_dir(dir)?,
        None => data::synth_split(&run.synth(), split, count)?,
    };
    if samples.is_empty() {
        return Err(Error::Input(format!("{} split is empty", split.name())));
    }
    Ok(samples)
}

/// The split scored by `eval`.
pub fn eval_split(run: &RunConfig) -> Split {
    match run.data.eval_split {
        EvalSplit::Train => Split::Train,
        EvalSplit::Eval => Split::Eval,
    }
}

/// Indices of the samples in step `step`. Position `p` of the endless
/// sample stream is entry `p mod n` of the shuffled order of epoch `p / n`.
pub fn batch_indices(n: usize, batch: usize, seed: u64, step: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch);
    let mut cached: Option<(usize, Vec<usize>)> = None;
    for p in step * batch..(step + 1) * batch {
        let epoch = p / n;
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            cached = Some((epoch, data::epoch_order(n, seed, epoch as u64)));
        }
        out.push(cached.as_ref().expect("order cached").1[p % n]);
    }
    out
}

fn chunks(samples: &[SamplePair], size: usize) -> impl Iterator<Item = Vec<&SamplePair>> {
    samples.chunks(size).map(|c| c.iter().collect())
}

/// Loss of the current parameters over all samples, weighted by batch size.
pub fn dataset_loss(
    model: &DamFormer,
    store: &ParamStore<f32>,
    run: &RunConfig,
    samples: &[SamplePair],
) -> Result<LossBreakdown> {
    let mut acc = LossBreakdown::default();
    for chunk in chunks(samples, run.optim.batch_size) {
        let b: Batch<f32> = Batch::from_samples(&chunk)?;
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let pre = g.constant(b.pre);
        let post = g.constant(b.post);
        let out = model.forward(&mut g, &p, pre, post)?;
        let v = compound_loss(&mut g, out.loc_logits, out.dam_logits, &b.loc, &b.dam, &run.loss)?.values(&g);
        let w = chunk.len() as f64 / samples.len() as f64;
        acc.total += w * v.total;
        acc.loc += w * v.loc;
        acc.dam += w * v.dam;
        acc.bce += w * v.bce;
        acc.dice += w * v.dice;
        acc.ce += w * v.ce;
        acc.lovasz += w * v.lovasz;
    }
    Ok(acc)
}

fn log_line(step: usize, v: &LossBreakdown) -> String {
    format!(
        "step={step} total={:.6} loc={:.6} dam={:.6} bce={:.6} dice={:.6} ce={:.6} lovasz={:.6}",
        v.total, v.loc, v.dam, v.bce, v.dice, v.ce, v.lovasz
    )
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: usize,
    /// Loss over the whole training set after the last step.
    pub final_loss: LossBreakdown,
    pub log: Vec<String>,
    pub checkpoints: Vec<PathBuf>,
}

/// In-memory training. `on_checkpoint` is called with `(step, params)` on
/// the checkpoint cadence.
pub fn train_on(
    run: &RunConfig,
    samples: &[SamplePair],
    mut on_checkpoint: impl FnMut(usize, &ParamStore<f32>) -> Result<()>,
) -> Result<(DamFormer, ParamStore<f32>, TrainSummary)> {
    run.validate()?;
    if samples.is_empty() {
        return Err(Error::Input("no training samples".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        s.validate().map_err(|e| Error::Input(format!("training sample {i}: {e}")))?;
    }
    let (model, mut store) = DamFormer::init::<f32>(&run.model, run.seed)?;
    let mut opt = AdamW::new(run.optim.clone(), &store);
    opt.warn_nonfinite = run.nonfinite_warn;
    let mut log = Vec::new();
    let mut steps = 0;
    let check_every = run.log_every.max(1);

    for step in 0..run.optim.steps {
        let idx = batch_indices(samples.len(), run.optim.batch_size, run.seed, step);
        let chosen: Vec<&SamplePair> = idx.iter().map(|&i| &samples[i]).collect();
        let b: Batch<f32> = Batch::from_samples(&chosen)?;
        let mut g = Graph::new().with_finite_check(run.debug_nan);
        let p = store.bind(&mut g, true);
        let pre = g.constant(b.pre);
        let post = g.constant(b.post);
        let out = model.forward(&mut g, &p, pre, post)?;
        let terms = compound_loss(&mut g, out.loc_logits, out.dam_logits, &b.loc, &b.dam, &run.loss)?;
        let values = terms.values(&g);
        if !values.total.is_finite() {
            return Err(Error::NonFinite { op: format!("training loss at step {}", step + 1) });
        }
        g.backward(terms.total)?;
        let grads = store.grads(&g, &p);
        drop(g);
        if opt.step(&mut store, &grads)? == StepOutcome::Skipped {
            log.push(format!("step={} skipped: non-finite gradient", step + 1));
        }
        steps = step + 1;

        if steps % check_every == 0 {
            let line = log_line(steps, &values);
            log::info!("{line}");
            log.push(line);
            if run.target_loss > 0.0 {
                let full = dataset_loss(&model, &store, run, samples)?;
                if full.total < run.target_loss {
                    log.push(format!("step={steps} target reached: dataset loss {:.6}", full.total));
                    break;
                }
            }
        }
        if run.checkpoint_every > 0 && steps % run.checkpoint_every == 0 {
            on_checkpoint(steps, &store)?;
        }
    }
    let final_loss = dataset_loss(&model, &store, run, samples)?;
    let line = format!("final {}", log_line(steps, &final_loss));
    log::info!("{line}");
    log.push(line);
    Ok((model, store, TrainSummary { steps, final_loss, log, checkpoints: Vec::new() }))
}

/// Full training run: data, checkpoints and log under `run.out_dir`.
pub fn train(run: &RunConfig) -> Result<TrainSummary> {
    run.validate()?;
    let out = run.out_dir.clone();
    with_workers(run.workers, || {
        let samples = load_split(run, Split::Train)?;
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("config.conf"), run.to_text())?;
        let mut written = Vec::new();
        let (_, store, mut summary) = train_on(run, &samples, |step, store| {
            let path = out.join(format!("step{step:06}.dfw"));
            checkpoint::save(&path, store)?;
            written.push(path);
            Ok(())
        })?;
        let final_path = out.join(FINAL_CHECKPOINT);
        checkpoint::save(&final_path, &store)?;
        written.push(final_path);
        summary.checkpoints = written;
        std::fs::write(out.join(LOG_FILE), summary.log.join("\n") + "\n")?;
        Ok(summary)
    })?
}

/// Hard `(loc, dam)` masks `[N, H, W]` for a batch.
pub fn infer(model: &DamFormer, store: &ParamStore<f32>, batch: &Batch<f32>) -> Result<(Mask, Mask)> {
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let pre = g.constant(batch.pre.clone());
    let post = g.constant(batch.post.clone());
    let out = model.forward(&mut g, &p, pre, post)?;
    masks_from_logits(g.value(out.loc_logits), g.value(out.dam_logits))
}

/// Scores the model on `samples`.
pub fn evaluate_on(
    model: &DamFormer,
    store: &ParamStore<f32>,
    samples: &[SamplePair],
    batch_size: usize,
) -> Result<MetricsReport> {
    let mut total = Confusion::default();
    for chunk in chunks(samples, batch_size.max(1)) {
        let b: Batch<f32> = Batch::from_samples(&chunk)?;
        let (loc, dam) = infer(model, store, &b)?;
        let mut c = Confusion::default();
        c.accumulate(&loc, &dam, &b.loc, &b.dam)?;
        total.merge(&c);
    }
    Ok(total.report())
}

/// Model built from `run` with parameters loaded from `path`.
pub fn load_model(run: &RunConfig, path: &Path) -> Result<(DamFormer, ParamStore<f32>)> {
    let (model, mut store) = DamFormer::init::<f32>(&run.model, run.seed)?;
    checkpoint::load(path, &mut store)?;
    Ok((model, store))
}

pub fn evaluate(run: &RunConfig, checkpoint_path: &Path) -> Result<MetricsReport> {
    run.validate()?;
    with_workers(run.workers, || {
        let (model, store) = load_model(run, checkpoint_path)?;
        let samples = load_split(run, eval_split(run))?;
        evaluate_on(&model, &store, &samples, run.optim.batch_size)
    })?
}

/// Writes `<id>.loc.pgm` and `<id>.dam.ppm` for every sample of the eval
/// split; returns the number of samples written.
pub fn predict(run: &RunConfig, checkpoint_path: &Path, out_dir: &Path) -> Result<usize> {
    run.validate()?;
    with_workers(run.workers, || {
        let (model, store) = load_model(run, checkpoint_path)?;
        let samples = load_split(run, eval_split(run))?;
        std::fs::create_dir_all(out_dir)?;
        let mut index = 0;
        for chunk in chunks(&samples, run.optim.batch_size) {
            let b: Batch<f32> = Batch::from_samples(&chunk)?;
            let (loc, dam) = infer(&model, &store, &b)?;
            for k in 0..b.len() {
                let id = format!("{index:05}");
                std::fs::write(out_dir.join(format!("{id}.loc.pgm")), data::encode_pgm(&loc.index_outer(k), 255)?)?;
                let img = data::render_damage_palette(&dam.index_outer(k))?;
                std::fs::write(out_dir.join(format!("{id}.dam.ppm")), data::encode_ppm(&img))?;
                index += 1;
            }
        }
        Ok(index)
    })?
}
