//! On-disk model checkpoints: a directory holding a manifest plus one JSON
//! file per member, so multi-network estimators stay inspectable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchoring::{AnchorEnsemble, AnchoredModel};
use crate::baselines::gp::GpHypers;
use crate::baselines::{DeepEnsemble, DropoutModel};
use crate::data::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    DeltaUq,
    AnchorEnsemble,
    DeepEnsemble,
    McDropout,
    Gp,
}

/// GP state sufficient to refit exactly: data in normalized units plus the
/// selected hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpCheckpoint {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub hypers: GpHypers,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub kind: CheckpointKind,
    pub members: Vec<String>,
}

/// Any estimator that can round-trip through a checkpoint directory.
#[derive(Debug, Clone)]
pub enum Checkpointed {
    DeltaUq(AnchoredModel),
    AnchorEnsemble(AnchorEnsemble),
    DeepEnsemble(DeepEnsemble),
    McDropout(DropoutModel),
    Gp(GpCheckpoint),
}

impl Checkpointed {
    pub fn kind(&self) -> CheckpointKind {
        match self {
            Checkpointed::DeltaUq(_) => CheckpointKind::DeltaUq,
            Checkpointed::AnchorEnsemble(_) => CheckpointKind::AnchorEnsemble,
            Checkpointed::DeepEnsemble(_) => CheckpointKind::DeepEnsemble,
            Checkpointed::McDropout(_) => CheckpointKind::McDropout,
            Checkpointed::Gp(_) => CheckpointKind::Gp,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the model under `dir` (created if missing): `manifest.json` plus
/// `member_XXX.json` files.
pub fn save(model: &Checkpointed, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let member_names: Vec<String>;
    match model {
        Checkpointed::DeltaUq(m) => {
            member_names = vec!["member_000.json".into()];
            write_json(&dir.join(&member_names[0]), m)?;
        }
        Checkpointed::AnchorEnsemble(e) => {
            member_names = (0..e.members.len())
                .map(|i| format!("member_{i:03}.json"))
                .collect();
            for (name, member) in member_names.iter().zip(&e.members) {
                write_json(&dir.join(name), &(member, &e.bounds))?;
            }
        }
        Checkpointed::DeepEnsemble(e) => {
            member_names = (0..e.members.len())
                .map(|i| format!("member_{i:03}.json"))
                .collect();
            for (name, member) in member_names.iter().zip(&e.members) {
                write_json(&dir.join(name), &(member, &e.bounds))?;
            }
        }
        Checkpointed::McDropout(m) => {
            member_names = vec!["member_000.json".into()];
            write_json(&dir.join(&member_names[0]), m)?;
        }
        Checkpointed::Gp(g) => {
            member_names = vec!["member_000.json".into()];
            write_json(&dir.join(&member_names[0]), g)?;
        }
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        kind: model.kind(),
        members: member_names,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn load(dir: &Path) -> Result<Checkpointed> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} unsupported (expected {})",
            manifest.version, CHECKPOINT_VERSION
        )));
    }
    if manifest.members.is_empty() {
        return Err(Error::Config("checkpoint lists no members".into()));
    }
    match manifest.kind {
        CheckpointKind::DeltaUq => {
            let m: AnchoredModel = read_json(&dir.join(&manifest.members[0]))?;
            Ok(Checkpointed::DeltaUq(m))
        }
        CheckpointKind::McDropout => {
            let m: DropoutModel = read_json(&dir.join(&manifest.members[0]))?;
            Ok(Checkpointed::McDropout(m))
        }
        CheckpointKind::Gp => {
            let g: GpCheckpoint = read_json(&dir.join(&manifest.members[0]))?;
            Ok(Checkpointed::Gp(g))
        }
        CheckpointKind::AnchorEnsemble => {
            let mut members = Vec::new();
            let mut bounds = None;
            for name in &manifest.members {
                let (member, b): ((Vec<f64>, crate::nn::Mlp), Vec<(f64, f64)>) =
                    read_json(&dir.join(name))?;
                bounds = Some(b);
                members.push(member);
            }
            Ok(Checkpointed::AnchorEnsemble(AnchorEnsemble {
                members,
                bounds: bounds.expect("nonempty members"),
            }))
        }
        CheckpointKind::DeepEnsemble => {
            let mut members = Vec::new();
            let mut bounds = None;
            for name in &manifest.members {
                let (member, b): (crate::nn::Mlp, Vec<(f64, f64)>) = read_json(&dir.join(name))?;
                bounds = Some(b);
                members.push(member);
            }
            Ok(Checkpointed::DeepEnsemble(DeepEnsemble {
                members,
                bounds: bounds.expect("nonempty members"),
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchoring::{predict_delta_uq, train_delta_uq};
    use crate::data::{Dataset, Matrix};
    use crate::nn::{Loss, MlpConfig, TrainConfig};

    fn toy_model() -> AnchoredModel {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![-1.0 + i as f64 / 6.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] * x[0]]).collect();
        let ds = Dataset::new(
            Matrix::from_rows(&xs).unwrap(),
            Matrix::from_rows(&ys).unwrap(),
            vec![(-1.0, 1.0)],
        )
        .unwrap();
        let cfg = MlpConfig::new(2, vec![8], 1, 5);
        let train = TrainConfig {
            learning_rate: 1e-2,
            epochs: 10,
            batch_size: 8,
            loss: Loss::Mse,
        };
        train_delta_uq(&ds, &cfg, &train).unwrap()
    }

    #[test]
    fn delta_uq_round_trip_preserves_predictions() {
        let model = toy_model();
        let dir = tempfile::tempdir().unwrap();
        save(&Checkpointed::DeltaUq(model.clone()), dir.path()).unwrap();
        let Checkpointed::DeltaUq(loaded) = load(dir.path()).unwrap() else {
            panic!("wrong kind");
        };
        let q = Matrix::from_rows(&[vec![0.25], vec![-0.5]]).unwrap();
        let anchors = model.sample_anchors(5, 3);
        let a = predict_delta_uq(&model, &q, &anchors).unwrap();
        let b = predict_delta_uq(&loaded, &q, &anchors).unwrap();
        for (ea, eb) in a.iter().zip(&b) {
            assert_eq!(ea.mean, eb.mean);
            assert_eq!(ea.std, eb.std);
        }
    }

    #[test]
    fn manifest_written_with_members() {
        let dir = tempfile::tempdir().unwrap();
        save(&Checkpointed::DeltaUq(toy_model()), dir.path()).unwrap();
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.version, CHECKPOINT_VERSION);
        assert_eq!(manifest.kind, CheckpointKind::DeltaUq);
        assert_eq!(manifest.members.len(), 1);
        assert!(dir.path().join(&manifest.members[0]).exists());
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save(&Checkpointed::DeltaUq(toy_model()), dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let mut manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        manifest.version = 99;
        std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(load(dir.path()).is_err());
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load(&dir.path().join("nope")).is_err());
    }
}
