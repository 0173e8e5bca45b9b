//! CLI stages. Each stage reads its inputs from and writes its outputs to
//! the output directory, and records content hashes and timings in
//! `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use genil_core::metrics::{ExtrapolationReport, PolicyRow};
use genil_core::seed::derive;
use genil_core::Trajectory;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::io::{self, fmt_g9, Csv};
use crate::pipeline::{self, Method};

pub const DEMOS: &str = "demos.jsonl";
pub const EVAL: &str = "eval.jsonl";
pub const RANKED: &str = "ranked";
pub const PAIRS: &str = "pairs.jsonl";
pub const CHECKPOINT: &str = "reward.json";
pub const LOSS: &str = "loss.csv";
pub const POLICY: &str = "policy.json";
pub const EXTRAPOLATION: &str = "extrapolation.csv";
pub const SUMMARY: &str = "summary.csv";
pub const POLICY_TABLE: &str = "policy_table.csv";
pub const COMPARE_DIR: &str = "compare";
pub const SWEEP: &str = "sweep.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub seed: u64,
    /// Output-relative path to sha256.
    pub artifacts: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    fn load_or_new(cfg: &ExperimentConfig, out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST);
        let mut m = if path.exists() { io::read_json(&path)? } else { RunManifest::default() };
        m.config = serde_json::to_value(cfg)?;
        m.seed = cfg.seed;
        Ok(m)
    }

    fn record(&mut self, out: &Path, stage: &str, started: Instant, seeds: &[(&str, u64)], outputs: &[&str]) -> Result<()> {
        for rel in outputs {
            self.artifacts.insert(rel.to_string(), io::sha256_file(&out.join(rel))?);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                seconds: started.elapsed().as_secs_f64(),
                seeds: seeds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                outputs: outputs.iter().map(|s| s.to_string()).collect(),
            },
        );
        Ok(())
    }

    fn warn(&mut self, stage: &str, msgs: impl IntoIterator<Item = String>) {
        for m in msgs {
            let line = format!("{stage}: {m}");
            if !self.warnings.contains(&line) {
                self.warnings.push(line);
            }
        }
    }

    fn save(&self, out: &Path) -> Result<()> {
        io::write_json(&out.join(MANIFEST), self)
    }
}

/// A configured run rooted at an output directory.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Run {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let out = cfg.output_dir.clone();
        Self { cfg, out, quiet: false }
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn stage<F>(&self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut RunManifest) -> Result<(Vec<(&'static str, u64)>, Vec<String>)>,
    {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let started = Instant::now();
        let mut manifest = RunManifest::load_or_new(&self.cfg, &self.out)?;
        let (seeds, outputs) = body(&mut manifest).with_context(|| format!("stage {name}"))?;
        let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
        manifest.record(&self.out, name, started, &seeds, &outputs)?;
        manifest.save(&self.out)?;
        self.say(format!("{name}: done in {:.1}s", started.elapsed().as_secs_f64()));
        Ok(())
    }

    fn demos(&self) -> Result<(Trajectory, Trajectory)> {
        let ts = io::read_trajectories(&self.out.join(DEMOS)).context("run gen-demos first")?;
        let find = |id: &str| {
            ts.iter().find(|t| t.id == id).cloned().with_context(|| format!("{DEMOS} has no trajectory '{id}'"))
        };
        Ok((find("demo-good")?, find("demo-bad")?))
    }

    fn eval(&self) -> Result<Vec<Trajectory>> {
        io::read_trajectories(&self.out.join(EVAL)).context("run gen-demos first")
    }

    pub fn gen_demos(&self) -> Result<()> {
        self.stage("gen-demos", |_| {
            let (good, bad) = pipeline::demos(&self.cfg)?;
            let eval = pipeline::eval_set(&self.cfg)?;
            io::write_trajectories(&self.out.join(DEMOS), &[good, bad])?;
            io::write_trajectories(&self.out.join(EVAL), &eval)?;
            let seeds = vec![("demos", derive(self.cfg.seed, "demos", &[])), ("eval-set", derive(self.cfg.seed, "eval-set", &[]))];
            Ok((seeds, vec![DEMOS.into(), EVAL.into()]))
        })
    }

    pub fn reproduce(&self) -> Result<()> {
        self.stage("reproduce", |m| {
            let (good, bad) = self.demos()?;
            let ds = pipeline::genil_dataset(&self.cfg, &self.cfg.ga, &good, &bad, 0)?;
            m.warn("reproduce", ds.warnings.clone());
            io::write_dataset(&self.out, RANKED, &ds, serde_json::to_value(&self.cfg.ga)?)?;
            self.say(format!("reproduce: {} trajectories after {} attempts", ds.len(), ds.attempts_used));
            Ok((
                vec![("reproduce", derive(self.cfg.seed, "reproduce", &[0]))],
                vec![format!("{RANKED}.jsonl"), format!("{RANKED}.manifest.json")],
            ))
        })
    }

    pub fn train_reward(&self) -> Result<()> {
        self.stage("train-reward", |_| {
            let ds = io::read_dataset(&self.out, RANKED).context("run reproduce first")?;
            let trained = pipeline::train_reward(&self.cfg, &ds, 0, 0)?;
            io::write_jsonl(&self.out.join(PAIRS), &io::pair_records(&trained.pairs))?;
            io::write_checkpoint(&self.out.join(CHECKPOINT), &trained.model, &trained.train_config)?;
            let mut csv = Csv::new(&["step", "loss"]);
            for (i, l) in trained.losses.iter().enumerate() {
                csv.row(&[i.to_string(), fmt_g9(*l)]);
            }
            csv.write(&self.out.join(LOSS))?;
            if let Some(last) = trained.losses.last() {
                self.say(format!("train-reward: final minibatch loss {last:.4}"));
            }
            let seeds = vec![
                ("snippets", derive(self.cfg.seed, "snippets", &[0, 0])),
                ("pairs", derive(self.cfg.seed, "pairs", &[0, 0])),
                ("train", trained.train_config.seed),
            ];
            Ok((seeds, vec![PAIRS.into(), CHECKPOINT.into(), LOSS.into()]))
        })
    }

    pub fn train_policy(&self) -> Result<()> {
        self.stage("train-policy", |_| {
            let path = self.out.join(CHECKPOINT);
            let model = io::read_checkpoint(&path).context("run train-reward first")?;
            let mut p = pipeline::derive_policy(&self.cfg, &model, 0, 0)?;
            p.source_model = io::sha256_file(&path)?;
            io::write_policy(&self.out.join(POLICY), &p)?;
            Ok((vec![("cem", derive(self.cfg.seed, "cem", &[0, 0]))], vec![POLICY.into()]))
        })
    }

    pub fn evaluate(&self) -> Result<()> {
        self.stage("evaluate", |m| {
            let model = io::read_checkpoint(&self.out.join(CHECKPOINT)).context("run train-reward first")?;
            let policy = io::read_policy(&self.out.join(POLICY)).context("run train-policy first")?;
            let eval = self.eval()?;
            let (good, bad) = self.demos()?;
            let report = pipeline::extrapolation(&self.cfg, &model, &eval)?;
            write_extrapolation(&self.out.join(EXTRAPOLATION), &eval, &report)?;
            write_summary(&self.out.join(SUMMARY), &[(Method::GenIL, Ok(&report))])?;
            let e = &self.cfg.eval;
            let mut run = pipeline::run_method(&self.cfg, Method::GenIL, &self.cfg.ga, &good, &bad, None, e.n_trials, e.n_models)?;
            // cell (0, 0) is the stored policy
            run.returns[0][0] = pipeline::policy_return(&self.cfg, &policy, 0, 0)?;
            m.warn("evaluate", run.warnings.clone());
            write_policy_table(&self.out.join(POLICY_TABLE), &[(Method::GenIL, run.row().map_err(|e| e.to_string()))])?;
            self.say(format!(
                "evaluate: spearman {:.3}, mean_bin_std {:.4}, policy return {:.3}",
                report.spearman_rho, report.mean_bin_std, run.returns[0][0]
            ));
            Ok((vec![("evaluate", derive(self.cfg.seed, "evaluate", &[0, 0]))], vec![
                EXTRAPOLATION.into(),
                SUMMARY.into(),
                POLICY_TABLE.into(),
            ]))
        })
    }

    pub fn compare(&self) -> Result<()> {
        self.stage("compare", |m| {
            let (good, bad) = self.demos()?;
            let eval = self.eval()?;
            let e = &self.cfg.eval;
            let has_actions = good.actions.is_some() && bad.actions.is_some();
            let mut summary = Vec::new();
            let mut table = Vec::new();
            let mut outputs = Vec::new();
            for method in Method::ALL {
                if method == Method::Bc && !has_actions {
                    m.warn("compare", ["BC skipped: demonstrations carry no actions".to_string()]);
                    continue;
                }
                self.say(format!("compare: {method}"));
                let run = pipeline::run_method(&self.cfg, method, &self.cfg.ga, &good, &bad, Some(&eval), e.n_trials, e.n_models);
                match run {
                    Ok(run) => {
                        m.warn("compare", run.warnings.clone());
                        if let Some(report) = &run.report {
                            let rel = format!("{COMPARE_DIR}/{}/{EXTRAPOLATION}", method.name());
                            write_extrapolation(&self.out.join(&rel), &eval, report)?;
                            outputs.push(rel);
                        }
                        table.push((method, run.row().map_err(|e| e.to_string())));
                        if method.learns_reward() {
                            summary.push((method, run.report.ok_or_else(|| "no report".to_string())));
                        }
                    }
                    Err(err) => {
                        let msg = format!("{method} failed: {err:#}");
                        m.warn("compare", [msg.clone()]);
                        table.push((method, Err(msg.clone())));
                        if method.learns_reward() {
                            summary.push((method, Err(msg)));
                        }
                    }
                }
            }
            let summary_ref: Vec<_> = summary.iter().map(|(k, r)| (*k, r.as_ref().map_err(Clone::clone))).collect();
            let rel_summary = format!("{COMPARE_DIR}/{SUMMARY}");
            let rel_table = format!("{COMPARE_DIR}/{POLICY_TABLE}");
            write_summary(&self.out.join(&rel_summary), &summary_ref)?;
            write_policy_table(&self.out.join(&rel_table), &table)?;
            outputs.insert(0, rel_table);
            outputs.insert(0, rel_summary);
            let eval_hash = io::sha256_file(&self.out.join(EVAL))?;
            self.say(format!("compare: all methods used eval set {}", &eval_hash[..12]));
            Ok((vec![], outputs))
        })
    }

    pub fn sweep(&self) -> Result<()> {
        self.stage("sweep", |m| {
            let (good, bad) = self.demos()?;
            let run = pipeline::sweep(&self.cfg, &good, &bad)?;
            m.warn("sweep", run.warnings.clone());
            let mut csv = Csv::new(&["step_size", "trial", "model", "gt_return", "trial_std", "step_mean"]);
            for c in &run.cells {
                csv.row(&[
                    c.step_size.to_string(),
                    c.trial.to_string(),
                    c.model.to_string(),
                    fmt_g9(c.gt_return),
                    fmt_g9(c.trial_std),
                    fmt_g9(c.step_mean),
                ]);
            }
            csv.write(&self.out.join(SWEEP))?;
            Ok((vec![], vec![SWEEP.into()]))
        })
    }

    pub fn run_all(&self) -> Result<()> {
        self.gen_demos()?;
        self.reproduce()?;
        self.train_reward()?;
        self.train_policy()?;
        self.evaluate()?;
        self.compare()?;
        self.sweep()
    }
}

pub fn write_extrapolation(path: &Path, eval: &[Trajectory], report: &ExtrapolationReport) -> Result<()> {
    let mut csv = Csv::new(&["traj_id", "quality", "gt_return", "pred_return", "gt_norm", "pred_norm", "bin"]);
    for (t, r) in eval.iter().zip(&report.rows) {
        debug_assert_eq!(t.id, r.id);
        let quality = t.meta.get("quality").cloned().unwrap_or_default();
        csv.row(&[
            r.id.clone(),
            quality,
            fmt_g9(r.gt_return),
            fmt_g9(r.pred_return),
            fmt_g9(r.gt_norm),
            fmt_g9(r.pred_norm),
            r.bin.to_string(),
        ]);
    }
    csv.write(path)
}

const NA: &str = "NA";

pub fn write_summary(path: &Path, rows: &[(Method, Result<&ExtrapolationReport, String>)]) -> Result<()> {
    let mut csv = Csv::new(&["method", "accuracy_ratio", "spearman", "pearson", "mean_bin_std"]);
    for (method, r) in rows {
        let cells = match r {
            Ok(r) => [r.accuracy_ratio, r.spearman_rho, r.pearson_r, r.mean_bin_std].map(fmt_g9),
            Err(_) => [NA; 4].map(String::from),
        };
        let mut row = vec![method.name().to_string()];
        row.extend(cells);
        csv.row(&row);
    }
    csv.write(path)
}

pub fn write_policy_table(path: &Path, rows: &[(Method, Result<PolicyRow, String>)]) -> Result<()> {
    let mut csv = Csv::new(&["method", "avg", "std", "n_trials", "n_models", "per_trial_std_mean"]);
    for (method, r) in rows {
        let row = match r {
            Ok(r) => vec![
                method.name().to_string(),
                fmt_g9(r.avg),
                fmt_g9(r.std),
                r.n_trials.to_string(),
                r.n_models.to_string(),
                fmt_g9(r.per_trial_std_mean),
            ],
            Err(_) => {
                let mut v = vec![method.name().to_string()];
                v.extend([NA; 5].map(String::from));
                v
            }
        };
        csv.row(&row);
    }
    csv.write(path)
}

/// Process exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<crate::config::ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<genil_core::Error>() {
            match e {
                genil_core::Error::Config(_) => return 2,
                genil_core::Error::ReproductionStalled { .. } => return 4,
                _ => {}
            }
        }
    }
    3
}

/// Human-readable bucket fill report for a stalled reproduction.
pub fn describe(err: &anyhow::Error) -> String {
    for cause in err.chain() {
        if let Some(genil_core::Error::ReproductionStalled { buckets, .. }) = cause.downcast_ref::<genil_core::Error>() {
            let fills: Vec<String> =
                buckets.iter().map(|b| format!("bucket {}: {}/{}", b.bucket, b.filled, b.quota)).collect();
            return format!("{err:#}\n{}", fills.join("\n"));
        }
    }
    format!("{err:#}")
}
