//! Self-describing model files.
//!
//! Layout:
//!
//! ```text
//! sdanet-model <version> <header_len>\n
//! <header_len bytes of JSON header>
//! <parameter block: little-endian f64 tensors>
//! ```
//!
//! The header names the model structure, the metadata and every tensor with
//! its shape and byte offset into the parameter block.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{CorruptionSpec, DenoisingAutoencoder};
use crate::baselines::{BaselineModel, BaselineSpec, ClassStats};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::nn::{ActivationKind, DenseLayer};
use crate::sda::{StackSpec, SupervisedNet};

pub const MAGIC: &str = "sdanet-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Pre-trained DAs, not yet unrolled.
    Stack {
        spec: StackSpec,
        das: Vec<DenoisingAutoencoder>,
    },
    Net {
        spec: Option<StackSpec>,
        net: SupervisedNet,
    },
    Baseline {
        spec: BaselineSpec,
        model: BaselineModel,
    },
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Stack { .. } => "stack",
            Model::Net { .. } => "net",
            Model::Baseline { .. } => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    /// Seeds, configuration digests, training history digests.
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset into the parameter block.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DaInfo {
    encoder_activation: ActivationKind,
    decoder_activation: ActivationKind,
    corruption: CorruptionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
enum BaselineInfo {
    LogisticRegression { activations: Vec<ActivationKind> },
    Ann { activations: Vec<ActivationKind> },
    KNearest { k: usize, n_classes: usize },
    NearestCentroid,
    GaussianNb,
    MultinomialNb,
    BernoulliNb { binarize_threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Structure {
    Stack {
        spec: StackSpec,
        layers: Vec<DaInfo>,
    },
    Net {
        spec: Option<StackSpec>,
        activations: Vec<ActivationKind>,
    },
    Baseline {
        spec: BaselineSpec,
        info: BaselineInfo,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    structure: Structure,
    metadata: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
    block_bytes: usize,
}

#[derive(Default)]
struct Block {
    entries: Vec<TensorEntry>,
    bytes: Vec<u8>,
}

impl Block {
    fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), rows * cols);
        self.entries.push(TensorEntry {
            name: name.into(),
            rows,
            cols,
            offset: self.bytes.len(),
        });
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn matrix(&mut self, name: impl Into<String>, m: &Matrix) {
        self.push(name, m.rows(), m.cols(), m.as_slice());
    }

    fn vector(&mut self, name: impl Into<String>, v: &[f64]) {
        self.push(name, 1, v.len(), v);
    }

    fn layers(&mut self, prefix: &str, layers: &[DenseLayer]) {
        for (k, l) in layers.iter().enumerate() {
            self.matrix(format!("{prefix}{k}.weights"), &l.weights);
            self.vector(format!("{prefix}{k}.bias"), &l.bias);
        }
    }

    fn rows_of(&mut self, name: &str, rows: &[Vec<f64>]) {
        let cols = rows.first().map_or(0, Vec::len);
        self.push(name, rows.len(), cols, &rows.concat());
    }
}

struct Tensors<'a> {
    entries: BTreeMap<&'a str, &'a TensorEntry>,
    block: &'a [u8],
}

impl<'a> Tensors<'a> {
    fn new(entries: &'a [TensorEntry], block: &'a [u8]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            let len = e
                .rows
                .checked_mul(e.cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Format(format!("tensor '{}' size overflows", e.name)))?;
            let end = e.offset.saturating_add(len);
            if end > block.len() {
                return Err(Error::Format(format!(
                    "tensor '{}' spans bytes {}..{end} but the parameter block has {}",
                    e.name,
                    e.offset,
                    block.len()
                )));
            }
            if map.insert(e.name.as_str(), e).is_some() {
                return Err(Error::Format(format!("duplicate tensor '{}'", e.name)));
            }
        }
        Ok(Tensors { entries: map, block })
    }

    fn raw(&self, name: &str) -> Result<(&TensorEntry, Vec<f64>)> {
        let e = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))?;
        let bytes = &self.block[e.offset..e.offset + e.rows * e.cols * 8];
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("tensor '{name}' holds a non-finite value")));
        }
        Ok((e, values))
    }

    fn matrix(&self, name: &str) -> Result<Matrix> {
        let (e, values) = self.raw(name)?;
        Matrix::new(e.rows, e.cols, values).map_err(|err| Error::Format(format!("tensor '{name}': {err}")))
    }

    fn vector(&self, name: &str) -> Result<Vector> {
        let (e, values) = self.raw(name)?;
        if e.rows != 1 {
            return Err(Error::Format(format!("tensor '{name}' should be a row vector")));
        }
        Vector::new(values).map_err(|err| Error::Format(format!("tensor '{name}': {err}")))
    }

    fn rows(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let (e, values) = self.raw(name)?;
        Ok(if e.cols == 0 {
            vec![Vec::new(); e.rows]
        } else {
            values.chunks(e.cols).map(<[f64]>::to_vec).collect()
        })
    }

    fn layers(&self, prefix: &str, activations: &[ActivationKind]) -> Result<Vec<DenseLayer>> {
        activations
            .iter()
            .enumerate()
            .map(|(k, &act)| {
                DenseLayer::new(
                    self.matrix(&format!("{prefix}{k}.weights"))?,
                    self.vector(&format!("{prefix}{k}.bias"))?,
                    act,
                )
                .map_err(|e| Error::Format(format!("{prefix}{k}: {e}")))
            })
            .collect()
    }
}

fn class_stats_tensors(block: &mut Block, classes: &[ClassStats], with_extra: bool) {
    block.vector("log_priors", &classes.iter().map(|c| c.log_prior).collect::<Vec<_>>());
    block.rows_of("params", &classes.iter().map(|c| c.params.clone()).collect::<Vec<_>>());
    if with_extra {
        block.rows_of("extra", &classes.iter().map(|c| c.extra.clone()).collect::<Vec<_>>());
    }
}

fn read_class_stats(t: &Tensors<'_>, with_extra: bool) -> Result<Vec<ClassStats>> {
    let priors = t.vector("log_priors")?;
    let params = t.rows("params")?;
    let extra = if with_extra {
        t.rows("extra")?
    } else {
        vec![Vec::new(); params.len()]
    };
    if priors.len() != params.len() || extra.len() != params.len() || params.is_empty() {
        return Err(Error::Format(
            "class statistics disagree on the number of classes".into(),
        ));
    }
    Ok(priors
        .iter()
        .zip(params)
        .zip(extra)
        .map(|((&log_prior, params), extra)| ClassStats {
            log_prior,
            params,
            extra,
        })
        .collect())
}

fn net_activations(net: &SupervisedNet) -> Vec<ActivationKind> {
    net.layers().iter().map(|l| l.activation).collect()
}

impl ModelFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut block = Block::default();
        let structure = match &self.model {
            Model::Stack { spec, das } => {
                for (k, da) in das.iter().enumerate() {
                    block.matrix(format!("da{k}.weights"), &da.encoder.weights);
                    block.vector(format!("da{k}.encoder_bias"), &da.encoder.bias);
                    block.vector(format!("da{k}.decoder_bias"), &da.decoder_bias);
                }
                Structure::Stack {
                    spec: spec.clone(),
                    layers: das
                        .iter()
                        .map(|da| DaInfo {
                            encoder_activation: da.encoder.activation,
                            decoder_activation: da.decoder_activation,
                            corruption: da.corruption,
                        })
                        .collect(),
                }
            }
            Model::Net { spec, net } => {
                block.layers("layer", net.layers());
                Structure::Net {
                    spec: spec.clone(),
                    activations: net_activations(net),
                }
            }
            Model::Baseline { spec, model } => {
                let info = match model {
                    BaselineModel::LogisticRegression(net) => {
                        block.layers("layer", net.layers());
                        BaselineInfo::LogisticRegression {
                            activations: net_activations(net),
                        }
                    }
                    BaselineModel::Ann(net) => {
                        block.layers("layer", net.layers());
                        BaselineInfo::Ann {
                            activations: net_activations(net),
                        }
                    }
                    BaselineModel::KNearest {
                        k,
                        samples,
                        labels,
                        n_classes,
                    } => {
                        block.rows_of("samples", &samples.iter().map(|s| s.to_vec()).collect::<Vec<_>>());
                        block.vector("labels", &labels.iter().map(|&l| l as f64).collect::<Vec<_>>());
                        BaselineInfo::KNearest {
                            k: *k,
                            n_classes: *n_classes,
                        }
                    }
                    BaselineModel::NearestCentroid { centroids } => {
                        block.rows_of("centroids", &centroids.iter().map(|c| c.to_vec()).collect::<Vec<_>>());
                        BaselineInfo::NearestCentroid
                    }
                    BaselineModel::GaussianNb { classes } => {
                        class_stats_tensors(&mut block, classes, true);
                        BaselineInfo::GaussianNb
                    }
                    BaselineModel::MultinomialNb { classes } => {
                        class_stats_tensors(&mut block, classes, false);
                        BaselineInfo::MultinomialNb
                    }
                    BaselineModel::BernoulliNb {
                        classes,
                        binarize_threshold,
                    } => {
                        class_stats_tensors(&mut block, classes, false);
                        BaselineInfo::BernoulliNb {
                            binarize_threshold: *binarize_threshold,
                        }
                    }
                };
                Structure::Baseline {
                    spec: spec.clone(),
                    info,
                }
            }
        };
        let header = Header {
            format_version: FORMAT_VERSION,
            structure,
            metadata: self.metadata.clone(),
            tensors: block.entries,
            block_bytes: block.bytes.len(),
        };
        let json = serde_json::to_string_pretty(&header)
            .map_err(|e| Error::Format(format!("cannot encode model header: {e}")))?;
        let mut out = format!("{MAGIC} {FORMAT_VERSION} {}\n", json.len()).into_bytes();
        out.extend_from_slice(json.as_bytes());
        out.extend_from_slice(&block.bytes);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .take(64)
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("not a model file: missing preamble line".into()))?;
        let preamble = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| Error::Format("not a model file: preamble is not text".into()))?;
        let mut parts = preamble.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(Error::Format(format!("not a model file: expected '{MAGIC}' preamble")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("model file preamble lacks a version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let header_len: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("model file preamble lacks a header length".into()))?;
        let start = newline + 1;
        let header_end = start
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("model header is truncated".into()))?;
        let header: Header = serde_json::from_slice(&bytes[start..header_end])
            .map_err(|e| Error::Format(format!("malformed model header: {e}")))?;
        if header.format_version != version {
            return Err(Error::Format(
                "header and preamble disagree on the format version".into(),
            ));
        }
        let block = &bytes[header_end..];
        if block.len() != header.block_bytes {
            return Err(Error::Format(format!(
                "parameter block has {} bytes, header declares {}",
                block.len(),
                header.block_bytes
            )));
        }
        let t = Tensors::new(&header.tensors, block)?;
        let model = match header.structure {
            Structure::Stack { spec, layers } => {
                let das = layers
                    .into_iter()
                    .enumerate()
                    .map(|(k, info)| {
                        let encoder = DenseLayer::new(
                            t.matrix(&format!("da{k}.weights"))?,
                            t.vector(&format!("da{k}.encoder_bias"))?,
                            info.encoder_activation,
                        )
                        .map_err(|e| Error::Format(format!("da{k}: {e}")))?;
                        let decoder_bias = t.vector(&format!("da{k}.decoder_bias"))?;
                        if decoder_bias.len() != encoder.input_dim() {
                            return Err(Error::Format(format!("da{k}: decoder bias length mismatch")));
                        }
                        Ok(DenoisingAutoencoder {
                            encoder,
                            decoder_bias,
                            decoder_activation: info.decoder_activation,
                            corruption: info.corruption,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Model::Stack { spec, das }
            }
            Structure::Net { spec, activations } => {
                let net = SupervisedNet::from_layers(t.layers("layer", &activations)?)
                    .map_err(|e| Error::Format(e.to_string()))?;
                Model::Net { spec, net }
            }
            Structure::Baseline { spec, info } => {
                let model = match info {
                    BaselineInfo::LogisticRegression { activations } => BaselineModel::LogisticRegression(
                        SupervisedNet::from_layers(t.layers("layer", &activations)?)
                            .map_err(|e| Error::Format(e.to_string()))?,
                    ),
                    BaselineInfo::Ann { activations } => BaselineModel::Ann(
                        SupervisedNet::from_layers(t.layers("layer", &activations)?)
                            .map_err(|e| Error::Format(e.to_string()))?,
                    ),
                    BaselineInfo::KNearest { k, n_classes } => {
                        let samples = t
                            .rows("samples")?
                            .into_iter()
                            .map(Vector::new)
                            .collect::<Result<Vec<_>>>()?;
                        let labels: Vec<usize> = t.vector("labels")?.iter().map(|&l| l as usize).collect();
                        if labels.len() != samples.len() || labels.iter().any(|&l| l >= n_classes) {
                            return Err(Error::Format("KNN labels are inconsistent".into()));
                        }
                        BaselineModel::KNearest {
                            k,
                            samples,
                            labels,
                            n_classes,
                        }
                    }
                    BaselineInfo::NearestCentroid => BaselineModel::NearestCentroid {
                        centroids: t
                            .rows("centroids")?
                            .into_iter()
                            .map(Vector::new)
                            .collect::<Result<Vec<_>>>()?,
                    },
                    BaselineInfo::GaussianNb => BaselineModel::GaussianNb {
                        classes: read_class_stats(&t, true)?,
                    },
                    BaselineInfo::MultinomialNb => BaselineModel::MultinomialNb {
                        classes: read_class_stats(&t, false)?,
                    },
                    BaselineInfo::BernoulliNb { binarize_threshold } => BaselineModel::BernoulliNb {
                        classes: read_class_stats(&t, false)?,
                        binarize_threshold,
                    },
                };
                Model::Baseline { spec, model }
            }
        };
        Ok(ModelFile {
            model,
            metadata: header.metadata,
        })
    }

    /// Just the parameter block, for byte-level comparisons.
    pub fn parameter_block(bytes: &[u8]) -> Result<&[u8]> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing preamble".into()))?;
        let header_len: usize = std::str::from_utf8(&bytes[..newline])
            .ok()
            .and_then(|p| p.rsplit(' ').next())
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::Format("malformed preamble".into()))?;
        bytes
            .get(newline + 1 + header_len..)
            .ok_or_else(|| Error::Format("model header is truncated".into()))
    }
}
