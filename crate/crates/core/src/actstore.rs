//! On-disk formats for activation sets (`SAEACTV1`) and trained models
//! (`SAEMDL1\0`), plus a sparse-dictionary generator for synthetic
//! activations.
//!
//! Both formats share one layout, little-endian throughout:
//!
//! ```text
//! bytes 0..8      magic
//! bytes 8..12     header length H, u32
//! bytes 12..12+H  compact UTF-8 JSON header
//! remainder       f32 payload, row-major
//! ```
//!
//! The activation payload holds `sample_count` rows when pooled, otherwise
//! `Σ token_counts` rows with samples concatenated in order. The model payload
//! is `W_e (m×d)`, `b_e (1×m)`, `W_d (d×m)`, `b_d (1×d)` back to back.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::numkit::{Matrix, RngStream};
use crate::sae::SaeParams;

pub const ACTV_MAGIC: &[u8; 8] = b"SAEACTV1";
pub const MODEL_MAGIC: &[u8; 8] = b"SAEMDL1\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointTag {
    Pretrained,
    Finetuned,
    Synthetic,
}

/// Hidden states of one layer over a dataset, either one pooled row per
/// sample or one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    pub model_tag: String,
    pub checkpoint_tag: CheckpointTag,
    pub dataset_tag: String,
    layer_index: usize,
    sample_count: usize,
    token_counts: Option<Vec<usize>>,
    tokens: Option<Vec<Vec<String>>>,
    data: Matrix,
}

impl ActivationSet {
    pub fn pooled(
        model_tag: impl Into<String>,
        checkpoint_tag: CheckpointTag,
        dataset_tag: impl Into<String>,
        layer_index: usize,
        data: Matrix,
    ) -> Result<Self> {
        let set = Self {
            model_tag: model_tag.into(),
            checkpoint_tag,
            dataset_tag: dataset_tag.into(),
            layer_index,
            sample_count: data.rows(),
            token_counts: None,
            tokens: None,
            data,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn per_token(
        model_tag: impl Into<String>,
        checkpoint_tag: CheckpointTag,
        dataset_tag: impl Into<String>,
        layer_index: usize,
        token_counts: Vec<usize>,
        tokens: Option<Vec<Vec<String>>>,
        data: Matrix,
    ) -> Result<Self> {
        let set = Self {
            model_tag: model_tag.into(),
            checkpoint_tag,
            dataset_tag: dataset_tag.into(),
            layer_index,
            sample_count: token_counts.len(),
            token_counts: Some(token_counts),
            tokens,
            data,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.layer_index < 1 {
            return fail("layer_index must be >= 1".into());
        }
        if self.data.cols() < 1 {
            return fail("hidden_dim must be >= 1".into());
        }
        match &self.token_counts {
            None => {
                if self.data.rows() != self.sample_count {
                    return fail(format!(
                        "pooled set has {} rows for {} samples",
                        self.data.rows(),
                        self.sample_count
                    ));
                }
                if self.tokens.is_some() {
                    return fail("pooled set cannot carry token strings".into());
                }
            }
            Some(counts) => {
                if counts.len() != self.sample_count {
                    return fail(format!(
                        "{} token counts for {} samples",
                        counts.len(),
                        self.sample_count
                    ));
                }
                if counts.contains(&0) {
                    return fail("every sample needs at least one token".into());
                }
                let total: usize = counts.iter().sum();
                if total != self.data.rows() {
                    return fail(format!(
                        "token counts sum to {total} but data has {} rows",
                        self.data.rows()
                    ));
                }
                if let Some(tokens) = &self.tokens {
                    if tokens.len() != counts.len()
                        || tokens.iter().zip(counts).any(|(t, &c)| t.len() != c)
                    {
                        return fail("token strings do not match token counts".into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn hidden_dim(&self) -> usize {
        self.data.cols()
    }

    pub fn is_pooled(&self) -> bool {
        self.token_counts.is_none()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn token_counts(&self) -> Option<&[usize]> {
        self.token_counts.as_deref()
    }

    pub fn tokens(&self) -> Option<&[Vec<String>]> {
        self.tokens.as_deref()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    /// Row range of sample `i` inside `data`.
    pub fn sample_rows(&self, i: usize) -> Result<std::ops::Range<usize>> {
        if i >= self.sample_count {
            return Err(Error::Index {
                what: "sample",
                index: i,
                len: self.sample_count,
            });
        }
        Ok(match &self.token_counts {
            None => i..i + 1,
            Some(counts) => {
                let start: usize = counts[..i].iter().sum();
                start..start + counts[i]
            }
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActvHeader {
    format_version: u32,
    model_tag: String,
    checkpoint_tag: CheckpointTag,
    dataset_tag: String,
    layer_index: usize,
    hidden_dim: usize,
    pooled: bool,
    sample_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    format_version: u32,
    input_dim: usize,
    hidden_dim: usize,
    lambda: f64,
    seed: u64,
    epochs_trained: usize,
}

/// A trained sparse autoencoder with the settings it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeModelFile {
    pub lambda: f64,
    pub seed: u64,
    pub epochs_trained: usize,
    pub params: SaeParams,
}

impl SaeModelFile {
    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.hidden_dim()
    }
}

fn frame(magic: &[u8; 8], header: &[u8], payload: &[&Matrix]) -> Vec<u8> {
    let floats: usize = payload.iter().map(|m| m.data().len()).sum();
    let mut out = Vec::with_capacity(12 + header.len() + 4 * floats);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for m in payload {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Splits a framed file into header JSON bytes and payload bytes.
fn unframe<'a>(
    bytes: &'a [u8],
    magic: &[u8; 8],
    kind: &'static str,
    path: &Path,
) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(Error::Format {
            path: path.into(),
            expected: kind,
        });
    }
    let corrupt = |detail: String| Error::Corrupt {
        path: path.into(),
        detail,
    };
    if bytes.len() < 12 {
        return Err(corrupt("truncated before header length".into()));
    }
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rest = &bytes[12..];
    if rest.len() < h {
        return Err(corrupt(format!(
            "header claims {h} bytes, only {} present",
            rest.len()
        )));
    }
    Ok(rest.split_at(h))
}

fn parse_header<T: for<'de> Deserialize<'de>>(json: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(json).map_err(|e| Error::Corrupt {
        path: path.into(),
        detail: format!("header JSON: {e}"),
    })
}

/// Reads consecutive matrices of the given shapes from an f32 payload that
/// must be consumed exactly.
fn take_matrices(payload: &[u8], shapes: &[(usize, usize)], path: &Path) -> Result<Vec<Matrix>> {
    let floats: usize = shapes.iter().map(|(r, c)| r * c).sum();
    if payload.len() != floats * 4 {
        let kind = if payload.len() < floats * 4 {
            "truncated"
        } else {
            "oversized"
        };
        return Err(Error::Corrupt {
            path: path.into(),
            detail: format!(
                "{kind} payload: expected {} bytes, found {}",
                floats * 4,
                payload.len()
            ),
        });
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    shapes
        .iter()
        .map(|&(r, c)| {
            let data: Vec<f32> = values.by_ref().take(r * c).collect();
            Matrix::from_vec(r, c, data).map_err(|_| {
                Error::Validation(format!(
                    "{}: payload holds non-finite values",
                    path.display()
                ))
            })
        })
        .collect()
}

pub fn encode_activation_set(set: &ActivationSet) -> Vec<u8> {
    let header = ActvHeader {
        format_version: FORMAT_VERSION,
        model_tag: set.model_tag.clone(),
        checkpoint_tag: set.checkpoint_tag,
        dataset_tag: set.dataset_tag.clone(),
        layer_index: set.layer_index,
        hidden_dim: set.hidden_dim(),
        pooled: set.is_pooled(),
        sample_count: set.sample_count,
        token_counts: set.token_counts.clone(),
        tokens: set.tokens.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    frame(ACTV_MAGIC, &json, &[&set.data])
}

/// Parses an `SAEACTV1` byte buffer; `path` is only used in diagnostics.
pub fn decode_activation_set(bytes: &[u8], path: &Path) -> Result<ActivationSet> {
    let (json, payload) = unframe(bytes, ACTV_MAGIC, "SAEACTV1", path)?;
    let h: ActvHeader = parse_header(json, path)?;
    let invalid = |msg: String| Error::Validation(format!("{}: {msg}", path.display()));
    if h.format_version != FORMAT_VERSION {
        return Err(invalid(format!(
            "unsupported format_version {}",
            h.format_version
        )));
    }
    if h.hidden_dim < 1 || h.layer_index < 1 {
        return Err(invalid("hidden_dim and layer_index must be >= 1".into()));
    }
    if h.pooled && h.token_counts.is_some() {
        return Err(invalid("pooled header carries token_counts".into()));
    }
    let rows = if h.pooled {
        h.sample_count
    } else {
        let counts = h
            .token_counts
            .as_ref()
            .ok_or_else(|| invalid("per-token header lacks token_counts".into()))?;
        if counts.len() != h.sample_count {
            return Err(invalid(format!(
                "{} token counts for sample_count {}",
                counts.len(),
                h.sample_count
            )));
        }
        counts.iter().sum()
    };
    let data = take_matrices(payload, &[(rows, h.hidden_dim)], path)?
        .pop()
        .unwrap();
    let set = if h.pooled {
        ActivationSet::pooled(
            h.model_tag,
            h.checkpoint_tag,
            h.dataset_tag,
            h.layer_index,
            data,
        )
    } else {
        ActivationSet::per_token(
            h.model_tag,
            h.checkpoint_tag,
            h.dataset_tag,
            h.layer_index,
            h.token_counts.unwrap(),
            h.tokens,
            data,
        )
    };
    set.map_err(|e| invalid(e.to_string()))
}

pub fn write_activation_set(set: &ActivationSet, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_activation_set(set))
}

pub fn read_activation_set(path: &Path) -> Result<ActivationSet> {
    decode_activation_set(&fsio::read_all(path)?, path)
}

pub fn encode_sae_model(model: &SaeModelFile) -> Vec<u8> {
    let header = ModelHeader {
        format_version: FORMAT_VERSION,
        input_dim: model.input_dim(),
        hidden_dim: model.hidden_dim(),
        lambda: model.lambda,
        seed: model.seed,
        epochs_trained: model.epochs_trained,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let p = &model.params;
    frame(
        MODEL_MAGIC,
        &json,
        &[p.w_enc(), p.b_enc(), p.w_dec(), p.b_dec()],
    )
}

pub fn decode_sae_model(bytes: &[u8], path: &Path) -> Result<SaeModelFile> {
    let (json, payload) = unframe(bytes, MODEL_MAGIC, "SAEMDL1", path)?;
    let h: ModelHeader = parse_header(json, path)?;
    let invalid = |msg: String| Error::Validation(format!("{}: {msg}", path.display()));
    if h.format_version != FORMAT_VERSION {
        return Err(invalid(format!(
            "unsupported format_version {}",
            h.format_version
        )));
    }
    if h.input_dim < 1 || h.hidden_dim < 1 {
        return Err(invalid("input_dim and hidden_dim must be >= 1".into()));
    }
    if !(h.lambda >= 0.0 && h.lambda.is_finite()) {
        return Err(invalid(format!(
            "lambda must be finite and >= 0, got {}",
            h.lambda
        )));
    }
    let (d, m) = (h.input_dim, h.hidden_dim);
    let mut mats = take_matrices(payload, &[(m, d), (1, m), (d, m), (1, d)], path)?.into_iter();
    let mut next = || mats.next().unwrap();
    let params = SaeParams::new(next(), next(), next(), next())?;
    Ok(SaeModelFile {
        lambda: h.lambda,
        seed: h.seed,
        epochs_trained: h.epochs_trained,
        params,
    })
}

pub fn write_sae_model(model: &SaeModelFile, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_sae_model(model))
}

pub fn read_sae_model(path: &Path) -> Result<SaeModelFile> {
    decode_sae_model(&fsio::read_all(path)?, path)
}

/// Parameters of the sparse-dictionary generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub atom_count: usize,
    pub sparsity: usize,
    pub sample_count: usize,
    pub scale: f32,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.atom_count < 1 || self.sample_count < 1 {
            return Err(Error::Config(
                "dim, atom count and sample count must all be >= 1".into(),
            ));
        }
        if self.sparsity < 1 || self.sparsity > self.atom_count {
            return Err(Error::Config(format!(
                "sparsity must be in 1..={}, got {}",
                self.atom_count, self.sparsity
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "scale must be > 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Ground truth behind a synthetic set: the dictionary (one unit-norm atom
/// per row, `atom_count × dim`) and each sample's sparse code as
/// `(atom, coefficient)` pairs.
#[derive(Debug, Clone)]
pub struct SynthTrace {
    pub dictionary: Matrix,
    pub codes: Vec<Vec<(usize, f32)>>,
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<ActivationSet> {
    synth_generate_traced(cfg).map(|(set, _)| set)
}

/// Generates rows `x = scale · Σ c_a · atom_a` over `sparsity` distinct atoms
/// with coefficients uniform in `[0.5, 1.0)`, returning the codes used. Each
/// sample is one row with the placeholder token `s<i>`.
pub fn synth_generate_traced(cfg: &SynthConfig) -> Result<(ActivationSet, SynthTrace)> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed);
    let (d, atoms) = (cfg.dim, cfg.atom_count);

    let mut dict = Vec::with_capacity(atoms * d);
    for _ in 0..atoms {
        let mut atom: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            atom[0] = 1.0;
        } else {
            atom.iter_mut().for_each(|v| *v /= norm);
        }
        dict.extend(atom.into_iter().map(|v| v as f32));
    }
    let dictionary = Matrix::from_vec(atoms, d, dict)?;

    let scale = cfg.scale as f64;
    let mut codes = Vec::with_capacity(cfg.sample_count);
    let mut data = Vec::with_capacity(cfg.sample_count * d);
    let mut pool: Vec<usize> = (0..atoms).collect();
    let mut acc = vec![0.0f64; d];
    for _ in 0..cfg.sample_count {
        // partial Fisher–Yates picks `sparsity` distinct atoms
        for i in 0..cfg.sparsity {
            let j = i + rng.below(atoms - i);
            pool.swap(i, j);
        }
        let code: Vec<(usize, f32)> = pool[..cfg.sparsity]
            .iter()
            .map(|&a| (a, rng.uniform_f32(0.5, 1.0)))
            .collect();
        acc.iter_mut().for_each(|v| *v = 0.0);
        for &(a, c) in &code {
            for (s, &dv) in acc.iter_mut().zip(dictionary.row(a)) {
                *s += c as f64 * dv as f64;
            }
        }
        data.extend(acc.iter().map(|&v| (scale * v) as f32));
        codes.push(code);
    }

    let set = ActivationSet::per_token(
        "synthetic",
        CheckpointTag::Synthetic,
        format!("synth-seed{}", cfg.seed),
        1,
        vec![1; cfg.sample_count],
        Some(
            (0..cfg.sample_count)
                .map(|i| vec![format!("s{i}")])
                .collect(),
        ),
        Matrix::from_vec(cfg.sample_count, d, data)?,
    )?;
    Ok((set, SynthTrace { dictionary, codes }))
}
