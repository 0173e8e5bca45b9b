//! File formats: line-delimited trajectories, JSON sidecars, checkpoints,
//! policy artifacts and CSV tables.
//!
//! Floats in JSON are written with 17 significant digits so every value
//! reads back bit-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use genil_core::mlp::Mlp;
use genil_core::policy::{PolicyArtifact, PolicyKind};
use genil_core::ranking::SnippetPair;
use genil_core::reward::{RewardModel, TrainConfig};
use genil_core::{RankedDataset, Trajectory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Compact JSON with floats in `{:.16e}` form. serde_json still writes
/// non-finite values as `null`, which fails to load back as a float.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf)?)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&to_json(item)?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_trajectories(path: &Path, ts: &[Trajectory]) -> Result<()> {
    write_jsonl(path, ts)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let ts: Vec<Trajectory> = read_jsonl(path)?;
    for t in &ts {
        t.validate().with_context(|| format!("{}: trajectory {}", path.display(), t.id))?;
    }
    Ok(ts)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_bytes(&bytes))
}

/// Sidecar describing a ranked dataset stored as trajectory lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub ranks: BTreeMap<u32, Vec<String>>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub attempts_used: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Writes `<stem>.jsonl` and `<stem>.manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, stem: &str, ds: &RankedDataset, config: serde_json::Value) -> Result<()> {
    write_trajectories(&dir.join(format!("{stem}.jsonl")), &ds.trajectories)?;
    let manifest = DatasetManifest {
        ranks: ds.by_rank(),
        config,
        seed: ds.seed,
        attempts_used: ds.attempts_used,
        warnings: ds.warnings.clone(),
    };
    write_json(&dir.join(format!("{stem}.manifest.json")), &manifest)
}

pub fn read_dataset(dir: &Path, stem: &str) -> Result<RankedDataset> {
    let trajectories = read_trajectories(&dir.join(format!("{stem}.jsonl")))?;
    let manifest: DatasetManifest = read_json(&dir.join(format!("{stem}.manifest.json")))?;
    let mut rank_of = BTreeMap::new();
    for (rank, ids) in &manifest.ranks {
        for id in ids {
            if rank_of.insert(id.as_str(), *rank).is_some() {
                bail!("trajectory {id} listed under two ranks");
            }
        }
    }
    let ranks = trajectories
        .iter()
        .map(|t| rank_of.get(t.id.as_str()).copied().ok_or_else(|| anyhow!("no rank for trajectory {}", t.id)))
        .collect::<Result<Vec<_>>>()?;
    if rank_of.len() != trajectories.len() {
        bail!("manifest lists {} ids for {} trajectories", rank_of.len(), trajectories.len());
    }
    let mut ds = RankedDataset::new(trajectories, ranks, manifest.seed)?;
    ds.attempts_used = manifest.attempts_used;
    ds.warnings = manifest.warnings;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnippetRef {
    pub parent_id: String,
    pub start: usize,
    pub length: usize,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub lo: SnippetRef,
    pub hi: SnippetRef,
}

pub fn pair_records(pairs: &[SnippetPair]) -> Vec<PairRecord> {
    let r = |s: &genil_core::ranking::Snippet| SnippetRef {
        parent_id: s.parent_id.clone(),
        start: s.start,
        length: s.length,
        rank: s.rank_label,
    };
    pairs.iter().map(|p| PairRecord { lo: r(&p.lo), hi: r(&p.hi) }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub widths: Vec<usize>,
    pub activation: String,
    pub params: Vec<f64>,
    pub train_config: TrainConfig,
}

impl Checkpoint {
    pub fn new(model: &RewardModel, cfg: &TrainConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            widths: model.mlp().widths().to_vec(),
            activation: "relu".into(),
            params: model.mlp().params().to_vec(),
            train_config: cfg.clone(),
        }
    }

    pub fn model(&self) -> Result<RewardModel> {
        if self.version != CHECKPOINT_VERSION {
            bail!("unsupported checkpoint version {}", self.version);
        }
        if self.activation != "relu" {
            bail!("unsupported activation '{}'", self.activation);
        }
        Ok(RewardModel::from_mlp(Mlp::from_params(&self.widths, self.params.clone())?)?)
    }
}

pub fn write_checkpoint(path: &Path, model: &RewardModel, cfg: &TrainConfig) -> Result<()> {
    write_json(path, &Checkpoint::new(model, cfg))
}

pub fn read_checkpoint(path: &Path) -> Result<RewardModel> {
    read_json::<Checkpoint>(path)?.model()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub kind: PolicyKind,
    pub params: Vec<f64>,
    /// sha256 of the reward checkpoint file.
    pub source_model: String,
}

pub fn write_policy(path: &Path, p: &PolicyArtifact) -> Result<()> {
    write_json(path, &PolicyFile { kind: p.kind, params: p.params.clone(), source_model: p.source_model.clone() })
}

pub fn read_policy(path: &Path) -> Result<PolicyArtifact> {
    let f: PolicyFile = read_json(path)?;
    let p = PolicyArtifact { kind: f.kind, params: f.params, source_model: f.source_model };
    p.check()?;
    Ok(p)
}

/// `%.9g`-style rendering: 9 significant digits, trailing zeros trimmed.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{x:.*}", (8 - exp) as usize);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-separated table with a header row and LF line endings.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text, columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "csv row width");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.text)
    }
}
