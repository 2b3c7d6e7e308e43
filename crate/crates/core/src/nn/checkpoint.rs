use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Backbone, BatchNorm};
use crate::sparsifier::Sparsifier;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "gssc-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Everything needed to rebuild a trained model: backbone parameters with
/// BN running statistics, the sparsifier, and the config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub epoch: usize,
    pub config: TrainConfig,
    pub dropout: f64,
    pub fusion: f64,
    pub temperature: f64,
    tensors: Vec<Tensor>,
}

fn matrix(name: String, a: &Array2<f64>) -> Tensor {
    Tensor {
        name,
        shape: a.shape().to_vec(),
        data: a.iter().copied().collect(),
    }
}

fn vector(name: String, a: &Array1<f64>) -> Tensor {
    Tensor {
        name,
        shape: vec![a.len()],
        data: a.to_vec(),
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(epoch: usize, config: &TrainConfig, backbone: &Backbone, sparsifier: &Sparsifier) -> Self {
        let mut tensors = Vec::new();
        for (k, (w, bn)) in backbone.weights.iter().zip(&backbone.norms).enumerate() {
            tensors.push(matrix(format!("layer{k}.weight"), w));
            tensors.push(vector(format!("layer{k}.bn.scale"), &bn.scale));
            tensors.push(vector(format!("layer{k}.bn.shift"), &bn.shift));
            tensors.push(vector(format!("layer{k}.bn.running_mean"), &bn.running_mean));
            tensors.push(vector(format!("layer{k}.bn.running_var"), &bn.running_var));
        }
        tensors.push(matrix("head_f".into(), &backbone.head_f));
        tensors.push(matrix("head_g".into(), &backbone.head_g));
        tensors.push(vector("interp".into(), &backbone.interp));
        tensors.push(matrix("sparsifier.embed".into(), &sparsifier.embed));
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            epoch,
            config: config.clone(),
            dropout: backbone.dropout,
            fusion: sparsifier.fusion,
            temperature: sparsifier.temperature,
            tensors,
        }
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.tensors.iter().any(|t| t.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("refusing to checkpoint non-finite parameters".into()));
        }
        let text = serde_json::to_string(self)?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint");
        let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(bad(format!(
                "unsupported format {:?}, expected {CHECKPOINT_FORMAT:?}",
                ckpt.format
            )));
        }
        // Surface shape problems at load time rather than at first use.
        ckpt.backbone()?;
        ckpt.sparsifier()?;
        Ok(ckpt)
    }

    fn lookup(&self) -> HashMap<&str, &Tensor> {
        self.tensors.iter().map(|t| (t.name.as_str(), t)).collect()
    }

    pub fn backbone(&self) -> Result<Backbone> {
        let map = self.lookup();
        let mut weights = Vec::new();
        let mut norms = Vec::new();
        for k in 0.. {
            let Some(w) = map.get(format!("layer{k}.weight").as_str()) else {
                break;
            };
            let w = to_matrix(w)?;
            let width = w.ncols();
            let v = |field: &str| -> Result<Array1<f64>> {
                let name = format!("layer{k}.bn.{field}");
                let t = map.get(name.as_str()).ok_or_else(|| bad(format!("missing tensor {name}")))?;
                to_vector(t, width)
            };
            norms.push(BatchNorm {
                scale: v("scale")?,
                shift: v("shift")?,
                running_mean: v("running_mean")?,
                running_var: v("running_var")?,
            });
            if let Some(prev) = weights.last() {
                let prev: &Array2<f64> = prev;
                if prev.ncols() != w.nrows() {
                    return Err(bad(format!("layer{k}.weight does not chain with the previous layer")));
                }
            }
            weights.push(w);
        }
        if weights.is_empty() {
            return Err(bad("checkpoint has no layers"));
        }
        let hidden = weights.last().unwrap().ncols();
        let get = |name: &str| map.get(name).copied().ok_or_else(|| bad(format!("missing tensor {name}")));
        let head_f = to_matrix(get("head_f")?)?;
        let head_g = to_matrix(get("head_g")?)?;
        let interp = to_vector(get("interp")?, 2 * hidden)?;
        if head_f.nrows() != hidden || head_g.shape() != head_f.shape() {
            return Err(bad("head shapes do not match the hidden width"));
        }
        Ok(Backbone {
            weights,
            norms,
            head_f,
            head_g,
            interp,
            dropout: self.dropout,
        })
    }

    pub fn sparsifier(&self) -> Result<Sparsifier> {
        let map = self.lookup();
        let t = map
            .get("sparsifier.embed")
            .ok_or_else(|| bad("missing tensor sparsifier.embed"))?;
        let s = Sparsifier {
            embed: to_matrix(t)?,
            fusion: self.fusion,
            temperature: self.temperature,
        };
        s.validate()?;
        Ok(s)
    }
}

fn to_matrix(t: &Tensor) -> Result<Array2<f64>> {
    let [r, c] = t.shape[..] else {
        return Err(bad(format!("{} has shape {:?}, expected 2 dims", t.name, t.shape)));
    };
    Array2::from_shape_vec((r, c), t.data.clone()).map_err(|e| bad(format!("{}: {e}", t.name)))
}

fn to_vector(t: &Tensor, len: usize) -> Result<Array1<f64>> {
    if t.shape != [len] || t.data.len() != len {
        return Err(bad(format!("{} has shape {:?}, expected [{len}]", t.name, t.shape)));
    }
    Ok(Array1::from(t.data.clone()))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::ForwardMode;

    fn parts() -> (Backbone, Sparsifier) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = Backbone::new(4, 6, 2, 3, 0.5, &mut rng).unwrap();
        b.norms[0].running_mean.fill(0.25);
        b.norms[1].running_var.fill(1.0 / 3.0);
        let s = Sparsifier::new(4, 6, 0.3, 0.5, &mut rng).unwrap();
        (b, s)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (b, s) = parts();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        Checkpoint::new(7, &TrainConfig::default(), &b, &s).save(&path).unwrap();
        let c = Checkpoint::load(&path).unwrap();
        assert_eq!(c.epoch, 7);
        assert_eq!(c.backbone().unwrap(), b);
        assert_eq!(c.sparsifier().unwrap(), s);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64 / 7.0 - 1.0);
        let (h0, _) = b.forward(&x, ForwardMode::Eval).unwrap();
        let (h1, _) = c.backbone().unwrap().forward(&x, ForwardMode::Eval).unwrap();
        assert_eq!(h0, h1);
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let (b, s) = parts();
        let mut c = Checkpoint::new(0, &TrainConfig::default(), &b, &s);
        c.format = "something-else/9".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, serde_json::to_string(&c).unwrap()).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn truncated_tensor_is_rejected() {
        let (b, s) = parts();
        let mut c = Checkpoint::new(0, &TrainConfig::default(), &b, &s);
        c.tensors[1].data.pop();
        assert!(c.backbone().is_err());
    }
}
