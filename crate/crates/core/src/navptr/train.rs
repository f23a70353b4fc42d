//! Two-phase training: the pointer alone on the ranking loss, then the
//! navigator with interaction fusion on the combined loss.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::NavPointConfig;
use super::data::{sample_pair, select_inputs, task_sample, FeatureCache, TaskSample};
use super::loss::{loss_exp, loss_total, NavEpisodeInput, NavStepInput};
use super::model::NavPointParams;
use crate::env::Task;
use crate::episode::Simulator;
use crate::error::{Error, Result};
use crate::neural::{Gradients, Tape};
use crate::par::{self, Exec};
use crate::seed::Mixer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: NavPointConfig,
    pub lr: f64,
    pub pointer_epochs: usize,
    pub nav_epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Additional teacher-forced samples per task, each starting from a
    /// different viewpoint of the same world. Instructions describe the
    /// goal, not the route, so they hold from any start.
    pub extra_starts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: NavPointConfig::desk(),
            lr: 0.05,
            pointer_epochs: 10,
            nav_epochs: 10,
            batch_size: 8,
            clip_norm: 5.0,
            seed: 0,
            extra_starts: 0,
        }
    }
}

impl TrainConfig {
    /// Parses `key = value` lines (`#` starts a comment) on top of the
    /// defaults. `preset = full` switches the model dimensions first.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected `key = value`", n + 1)))?;
            pairs.push((n + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = TrainConfig::default();
        if let Some((_, _, v)) = pairs.iter().find(|(_, k, _)| k == "preset") {
            cfg.model = match v.as_str() {
                "desk" => NavPointConfig::desk(),
                "full" => NavPointConfig::full(),
                other => return Err(Error::Parse(format!("unknown preset `{other}`"))),
            };
        }
        for (n, k, v) in &pairs {
            let bad = |what: &str| Error::Parse(format!("config line {n}: `{k}` expects {what}, got `{v}`"));
            let us = || v.parse::<usize>().map_err(|_| bad("an integer"));
            let fl = || v.parse::<f64>().map_err(|_| bad("a number"));
            let m = &mut cfg.model;
            match k.as_str() {
                "preset" => {}
                "lr" => cfg.lr = fl()?,
                "pointer_epochs" => cfg.pointer_epochs = us()?,
                "nav_epochs" => cfg.nav_epochs = us()?,
                "batch_size" => cfg.batch_size = us()?,
                "clip_norm" => cfg.clip_norm = fl()?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad("an integer"))?,
                "extra_starts" => cfg.extra_starts = us()?,
                "init_seed" => m.init_seed = v.parse().map_err(|_| bad("an integer"))?,
                "d_word" => m.d_word = us()?,
                "d_text" => m.d_text = us()?,
                "d_hidden" => m.d_hidden = us()?,
                "d_visual_base" => m.d_visual_base = us()?,
                "d_label_word" => m.d_label_word = us()?,
                "d_label" => m.d_label = us()?,
                "d_obj" => m.d_obj = us()?,
                "d_g" => m.d_g = us()?,
                "d_action" => m.d_action = us()?,
                "ptr_d_word" => m.ptr_d_word = us()?,
                "ptr_hidden" => m.ptr_hidden = us()?,
                "ptr_d_f" => m.ptr_d_f = us()?,
                "grid" => m.grid = us()?,
                "margin" => m.margin = fl()?,
                "lambda1" => m.lambda1 = fl()?,
                "lambda2" => m.lambda2 = fl()?,
                "lambda3" => m.lambda3 = fl()?,
                "lambda4" => m.lambda4 = fl()?,
                "lan_only" => m.lan_only = v.parse().map_err(|_| bad("true or false"))?,
                _ => return Err(Error::Parse(format!("config line {n}: unknown key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Validation("lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::Validation("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pointer,
    Navigator,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pointer => "pointer",
            Phase::Navigator => "navigator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub phase: Phase,
    pub epoch: usize,
    /// Mean per-task loss over the epoch.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    pub fn phase(&self, phase: Phase) -> Vec<f64> {
        self.epochs.iter().filter(|e| e.phase == phase).map(|e| e.loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,epoch,loss\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{:.10}", e.phase.as_str(), e.epoch, e.loss);
        }
        s
    }
}

/// Teacher-forced samples of every task in a suite, plus `extra_starts`
/// re-started copies of each task drawn with a seeded shuffle.
pub fn build_samples(
    suite: &[(Arc<Simulator>, Vec<Task>)],
    cache: &FeatureCache,
    params: &NavPointParams,
    extra_starts: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<TaskSample>> {
    let mut jobs: Vec<(&Arc<Simulator>, Task)> = Vec::new();
    for (sim, tasks) in suite {
        for task in tasks {
            jobs.push((sim, task.clone()));
            let mut starts: Vec<&str> = sim
                .env()
                .viewpoints
                .iter()
                .map(|v| v.id.as_str())
                .filter(|v| *v != task.start_viewpoint)
                .collect();
            starts.shuffle(&mut Mixer::new("starts").u64(seed).str(&task.id).rng());
            for s in starts.into_iter().take(extra_starts) {
                jobs.push((sim, Task { start_viewpoint: s.to_string(), ..task.clone() }));
            }
        }
    }
    par::map(exec, &jobs, |(sim, task)| task_sample(sim, cache, params, task))
        .into_iter()
        .collect()
}

fn episode_input(p: &NavPointParams, s: &TaskSample) -> NavEpisodeInput {
    NavEpisodeInput {
        tokens: s.tokens.clone(),
        steps: s
            .steps
            .iter()
            .map(|st| NavStepInput {
                candidates: select_inputs(p, &s.tokens, &st.raw),
                prev_action: st.prev_action,
                teacher: st.teacher,
                progress: st.progress,
            })
            .collect(),
    }
}

/// One pass over `samples` in a seeded order. Gradients of a batch are
/// computed concurrently and summed in a fixed order, so the result does not
/// depend on the execution mode.
fn run_epoch(
    params: &mut NavPointParams,
    samples: &[TaskSample],
    cfg: &TrainConfig,
    phase: Phase,
    epoch: usize,
    exec: Exec,
) -> Result<f64> {
    let mut rng = Mixer::new("train")
        .u64(cfg.seed)
        .str(phase.as_str())
        .u64(epoch as u64)
        .rng();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let pairs: Vec<_> = order.iter().map(|&i| sample_pair(samples, i, &mut rng)).collect();

    let mut total = 0.0;
    for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
        let offset = batch_idx * cfg.batch_size;
        let p = &*params;
        let results = par::map_indexed(exec, batch.len(), |j| {
            let pair = std::slice::from_ref(&pairs[offset + j]);
            let mut tape = Tape::new();
            let out = match phase {
                Phase::Pointer => loss_exp(&mut tape, p, pair),
                Phase::Navigator => {
                    let ep = episode_input(p, &samples[batch[j]]);
                    loss_total(&mut tape, p, &ep, pair)
                }
            };
            (tape.scalar(out), tape.backward(out, &p.store))
        });
        let mut grads = Gradients::zeros_like(&params.store);
        for (loss, g) in &results {
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch, value: *loss });
            }
            total += loss;
            grads.add(g);
        }
        grads.scale(1.0 / batch.len() as f64);
        if !grads.all_finite() {
            return Err(Error::NonFinite { epoch, value: grads.norm() });
        }
        grads.clip_norm(cfg.clip_norm);
        params.store.sgd_step(&grads, cfg.lr);
    }
    Ok(total / samples.len().max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NavPointParams,
    pub curve: LossCurve,
}

/// Trains from freshly initialized weights. Deterministic given the config.
pub fn train(suite: &[(Arc<Simulator>, Vec<Task>)], cfg: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = NavPointParams::new(cfg.model.clone())?;
    for (sim, _) in suite {
        if sim.config().feature_dim != cfg.model.d_visual_base {
            return Err(Error::Validation(format!(
                "simulator feature_dim {} does not match d_visual_base {}",
                sim.config().feature_dim,
                cfg.model.d_visual_base
            )));
        }
    }
    let cache = FeatureCache::new();
    let samples = build_samples(suite, &cache, &params, cfg.extra_starts, cfg.seed, exec)?;
    if samples.is_empty() {
        return Err(Error::Validation("training suite has no tasks".into()));
    }
    let mut curve = LossCurve::default();
    for (phase, epochs) in [(Phase::Pointer, cfg.pointer_epochs), (Phase::Navigator, cfg.nav_epochs)] {
        for epoch in 0..epochs {
            let loss = run_epoch(&mut params, &samples, cfg, phase, epoch, exec)?;
            curve.epochs.push(EpochLoss { phase, epoch, loss });
        }
    }
    Ok(TrainOutcome { params, curve })
}
